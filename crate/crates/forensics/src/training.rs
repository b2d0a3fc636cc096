//! Dataset assembly, the epoch loop with its deterministic shuffle and
//! two-stage learning-rate schedule, and evaluation.

use crate::features::{FeatureSpec, FeatureTensor, to_batch};
use crate::metrics::{self, MetricsReport};
use crate::synthesis::Label;
use crate::{Error, Result};
use rand::SeedableRng;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha12Rng;
use requant_nn::loss::cross_entropy_with_logits;
use requant_nn::{AdamState, DenseNet, Mode, Tensor};
use serde::{Deserialize, Serialize};

/// Feature tensors with labels and the source-image id each patch came
/// from; splits always group by source so the single/double versions of
/// the same content never straddle a split boundary.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub features: Vec<FeatureTensor>,
    pub labels: Vec<Label>,
    pub sources: Vec<u64>,
}

impl Dataset {
    pub fn push(&mut self, feature: FeatureTensor, label: Label, source: u64) {
        self.features.push(feature);
        self.labels.push(label);
        self.sources.push(source);
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut out = Dataset::default();
        for &i in indices {
            out.push(self.features[i].clone(), self.labels[i], self.sources[i]);
        }
        out
    }

    fn batch(&self, indices: &[usize], normalize: bool) -> (Tensor<f32>, Vec<usize>) {
        let feats: Vec<&FeatureTensor> = indices.iter().map(|&i| &self.features[i]).collect();
        let labels = indices.iter().map(|&i| self.labels[i].class_index()).collect();
        (to_batch(&feats, normalize), labels)
    }
}

/// Deterministically partitions item indices into groups by source id.
/// `fractions` are taken over the distinct sources, in order; sources
/// beyond the covered fractions are left out.
pub fn split_by_source(sources: &[u64], fractions: &[f64], seed: u64) -> Vec<Vec<usize>> {
    let mut unique: Vec<u64> = sources.to_vec();
    unique.sort_unstable();
    unique.dedup();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    unique.shuffle(&mut rng);

    let n = unique.len();
    let mut groups = Vec::with_capacity(fractions.len());
    let mut cursor = 0usize;
    for &f in fractions {
        let take = ((n as f64 * f).round() as usize).min(n - cursor);
        let members: std::collections::HashSet<u64> =
            unique[cursor..cursor + take].iter().copied().collect();
        cursor += take;
        groups.push(
            sources
                .iter()
                .enumerate()
                .filter(|(_, s)| members.contains(s))
                .map(|(i, _)| i)
                .collect(),
        );
    }
    groups
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    /// Epoch (0-indexed) at which the learning rate halves.
    pub lr_drop_epoch: usize,
    pub seed: u64,
    pub normalize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 40,
            batch_size: 64,
            base_lr: 1e-3,
            lr_drop_epoch: 30,
            seed: 0,
            normalize: false,
        }
    }
}

impl TrainConfig {
    pub fn lr_for_epoch(&self, epoch: usize) -> f64 {
        if epoch < self.lr_drop_epoch { self.base_lr } else { self.base_lr * 0.5 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val: Option<MetricsReport>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochStats>,
}

/// Trains in place for the configured number of epochs. Shuffling and
/// optimizer state depend only on the seed and the data, so identical
/// inputs reproduce identical histories.
pub fn train(
    model: &mut DenseNet<f32>,
    train_set: &Dataset,
    val_set: Option<&Dataset>,
    config: &TrainConfig,
) -> Result<TrainingHistory> {
    if train_set.is_empty() {
        return Err(Error::EmptySet("training set".into()));
    }
    if let Some(v) = val_set
        && v.is_empty() {
            return Err(Error::EmptySet("validation set".into()));
        }

    let mut adam = AdamState::new(model);
    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = TrainingHistory::default();

    for epoch in 0..config.epochs {
        let lr = config.lr_for_epoch(epoch);
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0f64;
        let mut correct = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let (x, labels) = train_set.batch(chunk, config.normalize);
            model.zero_grads();
            let logits = model.forward(&x, Mode::Train)?;
            let (loss, dlogits) = cross_entropy_with_logits(&logits, &labels);
            model.backward(&dlogits);
            adam.step(model, lr);

            loss_sum += loss as f64 * chunk.len() as f64;
            for (i, &label) in labels.iter().enumerate() {
                let row = &logits.data()[i * 2..(i + 1) * 2];
                let predicted = if row[1] > row[0] { 1 } else { 0 };
                correct += (predicted == label) as usize;
            }
        }

        let val = match val_set {
            Some(v) => Some(evaluate(model, v, config)?),
            None => None,
        };
        history.epochs.push(EpochStats {
            epoch,
            lr,
            train_loss: loss_sum / train_set.len() as f64,
            train_accuracy: correct as f64 / train_set.len() as f64,
            val,
        });
    }
    Ok(history)
}

/// Eval-mode metrics over a labeled set; positive class = double
/// compressed.
pub fn evaluate(
    model: &mut DenseNet<f32>,
    set: &Dataset,
    config: &TrainConfig,
) -> Result<MetricsReport> {
    if set.is_empty() {
        return Err(Error::EmptySet("test set".into()));
    }
    let indices: Vec<usize> = (0..set.len()).collect();
    let mut truth = Vec::with_capacity(set.len());
    let mut predicted = Vec::with_capacity(set.len());
    for chunk in indices.chunks(config.batch_size.max(1)) {
        let (x, labels) = set.batch(chunk, config.normalize);
        let probs = model.probabilities(&x, Mode::Eval)?;
        for (i, &label) in labels.iter().enumerate() {
            truth.push(label == 1);
            predicted.push(probs.data()[i * 2 + 1] > probs.data()[i * 2]);
        }
    }
    Ok(metrics::report(metrics::confusion(&truth, &predicted)))
}

/// Builds a feature dataset from labeled patches.
pub fn dataset_from_patches(
    patches: &[crate::synthesis::LabeledPatch],
    spec: &FeatureSpec,
) -> Result<Dataset> {
    let mut out = Dataset::default();
    for patch in patches {
        let grid = patch.stream.decode_coefficients()?;
        out.push(crate::features::build_feature(&grid, spec), patch.label, patch.source_id);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use requant_nn::ModelConfig;

    #[test]
    fn lr_schedule_boundaries() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.lr_for_epoch(0), 0.001);
        assert_eq!(cfg.lr_for_epoch(29), 0.001);
        assert_eq!(cfg.lr_for_epoch(30), 0.0005);
        assert_eq!(cfg.lr_for_epoch(39), 0.0005);
    }

    #[test]
    fn split_by_source_groups_and_is_deterministic() {
        // items: two per source (single + double of the same content)
        let sources: Vec<u64> = (0..50u64).flat_map(|s| [s, s]).collect();
        let a = split_by_source(&sources, &[0.8, 0.2], 9);
        let b = split_by_source(&sources, &[0.8, 0.2], 9);
        assert_eq!(a, b);
        assert_eq!(a[0].len(), 80);
        assert_eq!(a[1].len(), 20);
        // no source straddles the boundary
        let s0: std::collections::HashSet<u64> = a[0].iter().map(|&i| sources[i]).collect();
        let s1: std::collections::HashSet<u64> = a[1].iter().map(|&i| sources[i]).collect();
        assert!(s0.is_disjoint(&s1));
    }

    fn separable_dataset(count: usize, b: usize) -> Dataset {
        // class 1 concentrates mass in the positive bins, class 0 in the
        // negative bins; trivially separable
        use crate::features::build_feature;
        use requant_codec::{QMatrix, QuantizedBlockGrid};
        let mut set = Dataset::default();
        let spec = FeatureSpec::new(b);
        for i in 0..count {
            let label = if i % 2 == 0 { Label::Single } else { Label::Double };
            let v: i32 = if label == Label::Double { 3 } else { -3 };
            let jitter = (i as i32 / 2) % 2;
            let mut block = [v + jitter; 64];
            block[0] = 0;
            let grid =
                QuantizedBlockGrid::new(2, 2, vec![block; 4], QMatrix::uniform(4).unwrap());
            set.push(build_feature(&grid, &spec), label, i as u64);
        }
        set
    }

    #[test]
    fn separable_features_reach_high_accuracy_fast() {
        let spec_b = 20;
        let mut model = DenseNet::<f32>::build(ModelConfig::toy(spec_b, 2), 3).unwrap();
        let set = separable_dataset(64, spec_b);
        let cfg = TrainConfig { epochs: 10, batch_size: 16, seed: 1, ..Default::default() };
        let history = train(&mut model, &set, None, &cfg).unwrap();
        assert_eq!(history.epochs.len(), 10);
        assert!(history.epochs.iter().all(|e| e.train_loss.is_finite()));
        let final_acc = history.epochs.last().unwrap().train_accuracy;
        assert!(final_acc >= 0.99, "training accuracy {final_acc}");
    }

    #[test]
    fn empty_sets_are_rejected() {
        let mut model = DenseNet::<f32>::build(ModelConfig::toy(20, 2), 3).unwrap();
        let empty = Dataset::default();
        let cfg = TrainConfig::default();
        assert!(matches!(train(&mut model, &empty, None, &cfg), Err(Error::EmptySet(_))));
        assert!(matches!(evaluate(&mut model, &empty, &cfg), Err(Error::EmptySet(_))));
    }

    #[test]
    fn identical_seeds_identical_histories() {
        let set = separable_dataset(32, 20);
        let cfg = TrainConfig { epochs: 3, batch_size: 8, seed: 11, ..Default::default() };
        let run = || {
            let mut model = DenseNet::<f32>::build(ModelConfig::toy(20, 2), 5).unwrap();
            let h = train(&mut model, &set, Some(&set), &cfg).unwrap();
            serde_json::to_string(&h).unwrap()
        };
        assert_eq!(run(), run());
    }
}
