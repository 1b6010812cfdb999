//! The frozen synthetic benchmark.
//!
//! These presets pin the dataset (312 demos, 6 templates, calibrated
//! noise) and the model/training shape used by the acceptance suite and
//! the ablation ladder. Changing anything here changes what the
//! acceptance numbers mean, so treat the values as part of the contract.

use crate::datagen::GeneratorConfig;
use crate::mgsf::MgsfConfig;

/// Master seed of the frozen benchmark dataset.
pub const BENCHMARK_DATA_SEED: u64 = 20_240_601;

/// Seeds for the ablation ladder.
pub const ABLATION_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

/// Seeds for the dataset-size sweep.
pub const SWEEP_SEEDS: [u64; 3] = [0, 1, 2];

/// Dataset sizes of the sweep.
pub const SWEEP_SIZES: [usize; 6] = [30, 90, 150, 210, 270, 312];

/// Generator settings of the frozen corpus: noise calibrated so the
/// transformer-only backbone lands in the 75-88% validation recall band,
/// leaving measurable headroom for the fusion/gate/meta ladder.
pub fn benchmark_generator_config() -> GeneratorConfig {
    GeneratorConfig {
        demos_per_template: 52,
        duration_steps: 600,
        sample_rate_hz: 10.0,
        sigma_state: 0.002,
        sigma_force: 0.25,
        force_drift_rate: 0.004,
        label_jitter_steps: 2,
        split_fractions: [0.6, 0.2, 0.2],
        num_task_objects: 2,
        num_distractors: 0,
        seed: BENCHMARK_DATA_SEED,
    }
}

/// Model/training settings for the benchmark: sized to train one
/// variant on one core in roughly a minute.
pub fn benchmark_model_config() -> MgsfConfig {
    MgsfConfig {
        d_input: 26,
        lstm_hidden: 16,
        d_model: 12,
        encoder_layers: 1,
        heads: 2,
        fusion_steps: 3,
        meta_dim: 8,
        meta_hidden: 32,
        epochs: 10,
        batch_size: 8,
        lr: 3e-3,
        patience: 4,
        ..MgsfConfig::default()
    }
}
