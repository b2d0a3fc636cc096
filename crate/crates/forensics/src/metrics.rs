//! Confusion counts and the derived rates every report shares. One
//! implementation serves both patch classification (positive = double
//! compressed) and window-level localization (positive = tampered).

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

/// Tallies predictions against truth; `true` is the positive class.
pub fn confusion(truth: &[bool], predicted: &[bool]) -> ConfusionCounts {
    assert_eq!(truth.len(), predicted.len());
    let mut c = ConfusionCounts::default();
    for (&t, &p) in truth.iter().zip(predicted) {
        match (t, p) {
            (true, true) => c.tp += 1,
            (true, false) => c.fn_ += 1,
            (false, true) => c.fp += 1,
            (false, false) => c.tn += 1,
        }
    }
    c
}

/// Accuracy, TPR, TNR. A rate whose denominator is zero is reported as
/// null rather than silently coerced to 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub accuracy: Option<f64>,
    pub tpr: Option<f64>,
    pub tnr: Option<f64>,
}

pub fn classification_rates(c: &ConfusionCounts) -> Rates {
    let ratio = |num: u64, den: u64| (den > 0).then(|| num as f64 / den as f64);
    Rates {
        accuracy: ratio(c.tp + c.tn, c.total()),
        tpr: ratio(c.tp, c.tp + c.fn_),
        tnr: ratio(c.tn, c.tn + c.fp),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f_measure: Option<f64>,
}

pub fn prf(c: &ConfusionCounts) -> Prf {
    let ratio = |num: u64, den: u64| (den > 0).then(|| num as f64 / den as f64);
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f_measure = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        (Some(_), Some(_)) => Some(0.0),
        _ => None,
    };
    Prf { precision, recall, f_measure }
}

/// The JSON report schema shared by training, evaluation, and
/// localization outputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub counts: ConfusionCounts,
    pub rates: Rates,
    pub derived: Prf,
}

pub fn report(c: ConfusionCounts) -> MetricsReport {
    MetricsReport { counts: c, rates: classification_rates(&c), derived: prf(&c) }
}
