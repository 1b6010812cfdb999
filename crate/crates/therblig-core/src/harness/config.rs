//! Flat key-value config files.
//!
//! One `key = value` pair per line, `#` comments, no sections. Dotted
//! keys group knobs (`gen.*` generator, `model.*`/`train.*` network and
//! training, `scenario.*` trials). CLI flags override file values.

use super::HarnessError;
use crate::datagen::GeneratorConfig;
use crate::mgsf::{MgsfConfig, Variant};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone, Default)]
pub struct FlatConfig {
    values: BTreeMap<String, String>,
}

impl FlatConfig {
    pub fn parse(text: &str) -> Result<FlatConfig, HarnessError> {
        let mut values = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(HarnessError::Config(format!(
                    "line {}: expected key = value, got {raw:?}",
                    lineno + 1
                )));
            };
            values.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(FlatConfig { values })
    }

    pub fn load(path: &Path) -> Result<FlatConfig, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        FlatConfig::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: String) {
        self.values.insert(key.to_string(), value);
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|s| s.as_str())
    }

    fn get_parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, HarnessError> {
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
                HarnessError::Config(format!("key {key}: cannot parse {raw:?}"))
            }),
        }
    }

    /// Overlay `gen.*` keys onto a generator config.
    pub fn apply_generator(&self, config: &mut GeneratorConfig) -> Result<(), HarnessError> {
        if let Some(v) = self.get_parsed("gen.demos_per_template")? {
            config.demos_per_template = v;
        }
        if let Some(v) = self.get_parsed("gen.duration_steps")? {
            config.duration_steps = v;
        }
        if let Some(v) = self.get_parsed("gen.sample_rate_hz")? {
            config.sample_rate_hz = v;
        }
        if let Some(v) = self.get_parsed("gen.sigma_state")? {
            config.sigma_state = v;
        }
        if let Some(v) = self.get_parsed("gen.sigma_force")? {
            config.sigma_force = v;
        }
        if let Some(v) = self.get_parsed("gen.force_drift_rate")? {
            config.force_drift_rate = v;
        }
        if let Some(v) = self.get_parsed("gen.label_jitter_steps")? {
            config.label_jitter_steps = v;
        }
        if let Some(v) = self.get_parsed("gen.split_train")? {
            config.split_fractions[0] = v;
        }
        if let Some(v) = self.get_parsed("gen.split_val")? {
            config.split_fractions[1] = v;
        }
        if let Some(v) = self.get_parsed("gen.split_test")? {
            config.split_fractions[2] = v;
        }
        if let Some(v) = self.get_parsed("gen.num_task_objects")? {
            config.num_task_objects = v;
        }
        if let Some(v) = self.get_parsed("gen.num_distractors")? {
            config.num_distractors = v;
        }
        if let Some(v) = self.get_parsed("gen.seed")? {
            config.seed = v;
        }
        Ok(())
    }

    /// Overlay `model.*` and `train.*` keys onto a model config.
    pub fn apply_model(&self, config: &mut MgsfConfig) -> Result<(), HarnessError> {
        if let Some(v) = self.get_parsed("model.lstm_hidden")? {
            config.lstm_hidden = v;
        }
        if let Some(v) = self.get_parsed("model.d_model")? {
            config.d_model = v;
        }
        if let Some(v) = self.get_parsed("model.encoder_layers")? {
            config.encoder_layers = v;
        }
        if let Some(v) = self.get_parsed("model.heads")? {
            config.heads = v;
        }
        if let Some(v) = self.get_parsed("model.fusion_steps")? {
            config.fusion_steps = v;
        }
        if let Some(v) = self.get_parsed("model.meta_dim")? {
            config.meta_dim = v;
        }
        if let Some(v) = self.get_parsed("model.meta_hidden")? {
            config.meta_hidden = v;
        }
        if let Some(raw) = self.get("model.variant") {
            config.variant = Variant::parse(raw).ok_or_else(|| {
                HarnessError::Config(format!("model.variant: unknown variant {raw:?}"))
            })?;
        }
        if let Some(v) = self.get_parsed("model.fusion_init_zero")? {
            config.fusion_init_zero = v;
        }
        if let Some(v) = self.get_parsed("train.epochs")? {
            config.epochs = v;
        }
        if let Some(v) = self.get_parsed("train.batch_size")? {
            config.batch_size = v;
        }
        if let Some(v) = self.get_parsed("train.lr")? {
            config.lr = v;
        }
        if let Some(v) = self.get_parsed("train.patience")? {
            config.patience = v;
        }
        Ok(())
    }
}
