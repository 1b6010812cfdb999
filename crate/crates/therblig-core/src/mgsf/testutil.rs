//! Shared fixtures for the module tests.

use super::MgsfConfig;
use crate::datagen::{
    generate_demo, generate_scene, training_templates, DemoRecord, GeneratorConfig,
};
use crate::datagen::{Corpus, CorpusEntry, Split};

/// Small in-memory corpus: `demos_per_template` demos for the first
/// `templates` training templates, `steps` timesteps each, split
/// 2:1:1 by index.
pub(crate) fn mini_corpus(demos_per_template: usize, templates: usize, steps: usize) -> Corpus {
    let config = GeneratorConfig {
        duration_steps: steps,
        ..GeneratorConfig::default()
    };
    let mut entries = Vec::new();
    for (t_idx, template) in training_templates().iter().take(templates).enumerate() {
        for d in 0..demos_per_template {
            let seed = (t_idx * 1000 + d) as u64;
            let scene = generate_scene(2, 0, seed).unwrap();
            let out = generate_demo(template, &scene, &config, seed).unwrap();
            let split = match d % 4 {
                0 | 1 => Split::Train,
                2 => Split::Validation,
                _ => Split::Test,
            };
            entries.push(CorpusEntry {
                record: DemoRecord {
                    path: String::new(),
                    task: template.name.clone(),
                    split,
                    seed,
                    scene_path: String::new(),
                    sha256: String::new(),
                    scene_sha256: String::new(),
                    anchors: out.anchors.clone(),
                },
                demo: out.demo,
                labels: out.labels,
                scene,
            });
        }
    }
    Corpus { entries }
}

/// Small architecture that trains in well under a second per epoch.
pub(crate) fn tiny_train_config() -> MgsfConfig {
    MgsfConfig {
        lstm_hidden: 8,
        d_model: 8,
        encoder_layers: 1,
        heads: 2,
        meta_dim: 4,
        meta_hidden: 16,
        epochs: 3,
        batch_size: 4,
        patience: 5,
        lr: 3e-3,
        ..MgsfConfig::default()
    }
}
