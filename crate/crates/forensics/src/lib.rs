//! Compression-history forensics on JPEG images: histogram⊕q-factor
//! feature extraction, labeled dataset synthesis, classifier training,
//! shared metrics, and sliding-window tamper localization.

pub mod features;
pub mod localization;
pub mod metrics;
pub mod pgm;
pub mod synthesis;
pub mod training;

pub use features::{FeatureSpec, FeatureTensor, HistogramSet};
pub use localization::{ModelScorer, PatchScorer, TamperMap};
pub use metrics::{ConfusionCounts, MetricsReport};
pub use synthesis::{BlockMask, ForgeryCase, ForgeryKind, Label, LabeledPatch, WindowLabels};
pub use training::{Dataset, TrainConfig, TrainingHistory};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Codec(#[from] requant_codec::Error),

    #[error(transparent)]
    Nn(#[from] requant_nn::Error),

    #[error("empty {0}")]
    EmptySet(String),

    #[error("synthesis: {0}")]
    Synthesis(String),

    #[error("localization: {0}")]
    Localization(String),

    #[error("format: {0}")]
    Format(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
