//! Seeded synthetic generator of labeled demonstrations and scenes.
//!
//! The desk-scale substitute for a hand-collected demonstration corpus:
//! task templates drive a deterministic choreography over generated
//! scenes, with per-therblig kinematic and force signatures, label
//! boundary jitter, and sensor drift. Identical (config, seed) inputs
//! produce byte-identical output files.

mod files;
mod scene;
mod templates;
mod trajectory;

pub use files::{load_demo_csv, save_demo_csv, sha256_file};
pub use scene::{
    default_workspace, generate_scene, home_position, repose_scene, TrueMotion, DESCRIPTOR_LEN,
    MIN_SEPARATION,
};
pub use templates::{
    evaluation_templates, template_by_name, training_templates, validate_grammar, GrammarError,
    GrammarPhase, Role, TaskTemplate, WaypointSpec,
};
pub use trajectory::{generate_demo, GeneratedDemo};

use crate::domain::{Demonstration, DomainError, LabelSequence, SceneDescriptor, Therblig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GenError {
    #[error("scene has no object for role {role:?} required by template {template}")]
    MissingRole { role: Role, template: String },
    #[error("template {template}: total {total} steps outside feasible range [{min}, {max}]")]
    InfeasibleDuration {
        template: String,
        total: usize,
        min: usize,
        max: usize,
    },
    #[error("placed {placed} of {requested} objects; workspace too crowded, enlarge it or reduce counts")]
    Placement { placed: usize, requested: usize },
    #[error("invalid generator config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: checksum mismatch (expected {expected}, found {found})")]
    Checksum {
        path: PathBuf,
        expected: String,
        found: String,
    },
    #[error("{path}: {detail}")]
    Parse { path: PathBuf, detail: String },
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Grammar(#[from] GrammarError),
}

/// Knobs of the synthetic generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub demos_per_template: usize,
    pub duration_steps: usize,
    pub sample_rate_hz: f64,
    /// Gaussian noise on pose channels (m / rad) and, halved, on joints.
    pub sigma_state: f64,
    /// Gaussian noise on force channels (N).
    pub sigma_force: f64,
    /// Linear force-sensor drift magnitude, N per step.
    pub force_drift_rate: f64,
    /// Label boundaries shift by up to this many steps either way.
    pub label_jitter_steps: usize,
    /// Train / validation / test fractions.
    pub split_fractions: [f64; 3],
    pub num_task_objects: usize,
    pub num_distractors: usize,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
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
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), GenError> {
        let sum: f64 = self.split_fractions.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(GenError::Config(format!("split fractions sum to {sum}, not 1")));
        }
        if self.sigma_state < 0.0 || self.sigma_force < 0.0 || self.force_drift_rate < 0.0 {
            return Err(GenError::Config("noise levels must be nonnegative".into()));
        }
        if self.duration_steps < 2 {
            return Err(GenError::Config("duration_steps must be at least 2".into()));
        }
        if self.demos_per_template == 0 {
            return Err(GenError::Config("demos_per_template must be positive".into()));
        }
        Ok(())
    }

    /// Per-template split sizes: floor(train), floor(val), remainder to
    /// test (52 at 0.6/0.2/0.2 gives 31/10/11).
    pub fn split_sizes(&self, per_template: usize) -> (usize, usize, usize) {
        let train = (per_template as f64 * self.split_fractions[0]).floor() as usize;
        let val = (per_template as f64 * self.split_fractions[1]).floor() as usize;
        let test = per_template - train - val;
        (train, val, test)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Test,
}

/// Ground-truth registration point for one Grasp/Use/Release event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorTruth {
    pub therblig: Therblig,
    pub step: usize,
    /// Clean (noise-free) end-effector xy at `step`, robot frame.
    pub xy: [f64; 2],
    pub object_id: String,
}

/// One demonstration's files and ground truth inside a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoRecord {
    pub path: String,
    pub task: String,
    pub split: Split,
    pub seed: u64,
    pub scene_path: String,
    pub sha256: String,
    pub scene_sha256: String,
    pub anchors: Vec<AnchorTruth>,
}

/// Index of an on-disk dataset; always written after every file it names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub master_seed: u64,
    pub config: GeneratorConfig,
    pub demos: Vec<DemoRecord>,
}

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_NAME: &str = "manifest.json";

/// An in-memory dataset: records plus loaded demonstrations.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub entries: Vec<CorpusEntry>,
}

#[derive(Debug, Clone)]
pub struct CorpusEntry {
    pub record: DemoRecord,
    pub demo: Demonstration,
    pub labels: LabelSequence,
    pub scene: SceneDescriptor,
}

impl Corpus {
    pub fn split(&self, split: Split) -> Vec<&CorpusEntry> {
        self.entries.iter().filter(|e| e.record.split == split).collect()
    }

    pub fn task_names(&self) -> Vec<String> {
        let mut names: Vec<String> = Vec::new();
        for e in &self.entries {
            if !names.contains(&e.record.task) {
                names.push(e.record.task.clone());
            }
        }
        names
    }
}

/// Stream id for the demo RNG: one lane per (template, demo) pair so
/// parallel generation cannot change results.
fn demo_stream_seed(master: u64, template_index: usize, demo_index: usize) -> u64 {
    master
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add((template_index as u64) << 32)
        .wrapping_add(demo_index as u64)
}

/// Generate every demo/scene file plus the manifest under `out_dir`.
pub fn generate_dataset(
    config: &GeneratorConfig,
    templates: &[TaskTemplate],
    out_dir: &Path,
) -> Result<DatasetManifest, GenError> {
    config.validate()?;
    if templates.is_empty() {
        return Err(GenError::Config("at least one template required".into()));
    }
    let demo_dir = out_dir.join("demos");
    let scene_dir = out_dir.join("scenes");
    for dir in [&demo_dir, &scene_dir] {
        std::fs::create_dir_all(dir).map_err(|e| GenError::Io {
            path: dir.clone(),
            source: e,
        })?;
    }

    let (n_train, n_val, _) = config.split_sizes(config.demos_per_template);
    let jobs: Vec<(usize, usize)> = (0..templates.len())
        .flat_map(|t| (0..config.demos_per_template).map(move |d| (t, d)))
        .collect();

    let mut records = jobs
        .par_iter()
        .map(|&(t_idx, d_idx)| -> Result<(usize, usize, DemoRecord), GenError> {
            let template = &templates[t_idx];
            let seed = demo_stream_seed(config.seed, t_idx, d_idx);
            let scene = generate_scene(
                config.num_task_objects,
                config.num_distractors,
                seed ^ 0x5ce0_5ce0,
            )?;
            let generated = generate_demo(template, &scene, config, seed)?;

            let stem = format!("{}_{d_idx:03}", template.name);
            let demo_rel = format!("demos/{stem}.csv");
            let scene_rel = format!("scenes/{stem}.json");
            let demo_path = out_dir.join(&demo_rel);
            let scene_path = out_dir.join(&scene_rel);
            save_demo_csv(&demo_path, &generated.demo, &generated.labels)?;
            scene.save(&scene_path).map_err(|e| GenError::Io {
                path: scene_path.clone(),
                source: e,
            })?;

            let split = if d_idx < n_train {
                Split::Train
            } else if d_idx < n_train + n_val {
                Split::Validation
            } else {
                Split::Test
            };
            let record = DemoRecord {
                path: demo_rel,
                task: template.name.clone(),
                split,
                seed,
                scene_path: scene_rel,
                sha256: sha256_file(&demo_path)?,
                scene_sha256: sha256_file(&scene_path)?,
                anchors: generated.anchors,
            };
            Ok((t_idx, d_idx, record))
        })
        .collect::<Result<Vec<_>, _>>()?;
    records.sort_by_key(|(t, d, _)| (*t, *d));

    let manifest = DatasetManifest {
        format_version: MANIFEST_VERSION,
        master_seed: config.seed,
        config: config.clone(),
        demos: records.into_iter().map(|(_, _, r)| r).collect(),
    };
    let manifest_path = out_dir.join(MANIFEST_NAME);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&manifest_path, text).map_err(|e| GenError::Io {
        path: manifest_path,
        source: e,
    })?;
    Ok(manifest)
}

/// Load a dataset back into memory, verifying checksums.
pub fn load_dataset(manifest_path: &Path) -> Result<Corpus, GenError> {
    let root = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let text = std::fs::read_to_string(manifest_path).map_err(|e| GenError::Io {
        path: manifest_path.to_path_buf(),
        source: e,
    })?;
    let manifest: DatasetManifest = serde_json::from_str(&text).map_err(|e| GenError::Parse {
        path: manifest_path.to_path_buf(),
        detail: e.to_string(),
    })?;
    if manifest.format_version != MANIFEST_VERSION {
        return Err(GenError::Parse {
            path: manifest_path.to_path_buf(),
            detail: format!("unsupported format_version {}", manifest.format_version),
        });
    }

    let entries = manifest
        .demos
        .par_iter()
        .map(|record| -> Result<CorpusEntry, GenError> {
            let demo_path = root.join(&record.path);
            let scene_path = root.join(&record.scene_path);
            for (path, expected) in [(&demo_path, &record.sha256), (&scene_path, &record.scene_sha256)]
            {
                let found = sha256_file(path)?;
                if found != *expected {
                    return Err(GenError::Checksum {
                        path: path.clone(),
                        expected: expected.clone(),
                        found,
                    });
                }
            }
            let (demo, labels) = load_demo_csv(&demo_path, &record.task)?;
            let scene = SceneDescriptor::load(&scene_path)?;
            Ok(CorpusEntry {
                record: record.clone(),
                demo,
                labels,
                scene,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Corpus { entries })
}
