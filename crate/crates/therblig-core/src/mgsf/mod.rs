//! The gated BiLSTM/Transformer fusion segmenter.
//!
//! Two sequence encoders read the same 26-channel state trajectory: a
//! BiLSTM for local dynamics and a Transformer encoder for long-range
//! structure. Their per-timestep features are concatenated and merged by
//! a recursive sigmoid-gated fusion unit whose gate parameters are
//! emitted by a small meta-network from a learned meta vector. A linear
//! classifier head over the fused feature yields per-timestep therblig
//! probabilities, trained with element-wise BCE against one-hot labels.
//!
//! Ablation variants strip the stack down one stage at a time:
//! `full` > `no_meta` (gate parameters learned directly) > `no_gate`
//! (plain learned projection of the concatenated features) > `backbone`
//! (Transformer + classifier only).

mod ablation;
mod metrics;
mod model;
mod segment;
#[cfg(test)]
pub(crate) mod testutil;
mod train;

pub use ablation::{
    run_ablation, run_dataset_sweep, AblationCell, AblationTable, SweepCell, SweepTable,
    VariantSummary,
};
pub use metrics::{compute_metrics, EvalPair, Metrics};
pub use model::{recursive_gated_fusion, MgsfModel, ModelTids};
pub use segment::{median_smooth, segment, segment_demo, SMOOTH_WINDOW};
pub use train::{evaluate_split, train, EpochLog, TrainOutcome};

use crate::numeric::NumericError;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MgsfError {
    #[error("non-finite values produced at stage {stage}")]
    NonFinite { stage: &'static str },
    #[error("invalid config: {0}")]
    BadConfig(String),
    #[error("corpus has no demonstrations in the {0} split")]
    EmptySplit(&'static str),
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error("checkpoint meta: {0}")]
    CheckpointMeta(String),
}

/// Which pieces of the network exist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Meta-network emits the gate parameters.
    Full,
    /// Gate parameters are directly learned.
    NoMeta,
    /// No gating: a learned linear projection fuses the features.
    NoGate,
    /// Transformer and classifier only.
    Backbone,
}

impl Variant {
    pub const ALL: [Variant; 4] =
        [Variant::Full, Variant::NoMeta, Variant::NoGate, Variant::Backbone];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoMeta => "no_meta",
            Variant::NoGate => "no_gate",
            Variant::Backbone => "backbone",
        }
    }

    pub fn parse(s: &str) -> Option<Variant> {
        match s {
            "full" => Some(Variant::Full),
            "no_meta" => Some(Variant::NoMeta),
            "no_gate" => Some(Variant::NoGate),
            "backbone" => Some(Variant::Backbone),
            _ => None,
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Architecture and training knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MgsfConfig {
    pub d_input: usize,
    /// BiLSTM hidden size per direction.
    pub lstm_hidden: usize,
    pub d_model: usize,
    pub encoder_layers: usize,
    pub heads: usize,
    /// Recursive fusion steps T.
    pub fusion_steps: usize,
    /// Meta vector length m.
    pub meta_dim: usize,
    /// Meta-network hidden width.
    pub meta_hidden: usize,
    pub variant: Variant,
    /// Start the fusion recursion from zeros instead of the features.
    pub fusion_init_zero: bool,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Early-stop patience in epochs without validation improvement.
    pub patience: usize,
}

impl Default for MgsfConfig {
    fn default() -> Self {
        MgsfConfig {
            d_input: 26,
            lstm_hidden: 64,
            d_model: 64,
            encoder_layers: 2,
            heads: 4,
            fusion_steps: 3,
            meta_dim: 32,
            meta_hidden: 64,
            variant: Variant::Full,
            fusion_init_zero: false,
            epochs: 30,
            batch_size: 8,
            lr: 1e-3,
            patience: 5,
        }
    }
}

impl MgsfConfig {
    /// Width of the concatenated per-timestep feature.
    pub fn fused_dim(&self) -> usize {
        2 * self.lstm_hidden + self.d_model
    }

    /// Classifier input width for this variant.
    pub fn classifier_dim(&self) -> usize {
        match self.variant {
            Variant::Backbone => self.d_model,
            _ => self.fused_dim(),
        }
    }

    pub fn with_variant(&self, variant: Variant) -> MgsfConfig {
        MgsfConfig {
            variant,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), MgsfError> {
        if self.d_model % self.heads != 0 {
            return Err(MgsfError::BadConfig(format!(
                "d_model {} not divisible by heads {}",
                self.d_model, self.heads
            )));
        }
        if self.fusion_steps < 1 {
            return Err(MgsfError::BadConfig("fusion_steps must be >= 1".into()));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(MgsfError::BadConfig("epochs and batch_size must be positive".into()));
        }
        Ok(())
    }
}
