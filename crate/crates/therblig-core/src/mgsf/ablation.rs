//! Ablation ladder and dataset-size sweep.
//!
//! Every cell (variant x seed, or size x seed) trains from scratch with
//! the data order fixed by the seed alone, so variants see identical
//! batches. Cells run in parallel; a failed cell is recorded and does
//! not abort the rest.

use super::metrics::Metrics;
use super::train::{evaluate_split, train};
use super::{MgsfConfig, Variant};
use crate::datagen::{Corpus, CorpusEntry, Split};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// One trained (variant, seed) combination.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationCell {
    pub variant: Variant,
    pub seed: u64,
    pub test: Metrics,
    pub val_recall: f64,
    pub best_epoch: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: Variant,
    pub seeds: usize,
    pub bce_mean: Option<f64>,
    pub bce_std: Option<f64>,
    pub precision_mean: f64,
    pub precision_std: f64,
    pub recall_mean: f64,
    pub recall_std: f64,
    pub f1_mean: f64,
    pub f1_std: f64,
    pub kappa_mean: f64,
    pub kappa_std: f64,
    /// [min of per-seed minima, max of per-seed maxima].
    pub tp_range: [f64; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationTable {
    pub cells: Vec<Result<AblationCell, String>>,
    pub summaries: Vec<VariantSummary>,
    pub seeds: Vec<u64>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Train all four variants for every seed and summarize test metrics.
pub fn run_ablation(corpus: &Corpus, base: &MgsfConfig, seeds: &[u64]) -> AblationTable {
    assert!(seeds.len() >= 2, "ablation needs at least 2 seeds");
    let jobs: Vec<(Variant, u64)> = Variant::ALL
        .iter()
        .flat_map(|v| seeds.iter().map(move |s| (*v, *s)))
        .collect();

    let cells: Vec<Result<AblationCell, String>> = jobs
        .par_iter()
        .map(|&(variant, seed)| run_cell(corpus, &base.with_variant(variant), seed))
        .collect();

    let summaries = Variant::ALL
        .iter()
        .map(|variant| summarize(*variant, &cells))
        .collect();
    AblationTable {
        cells,
        summaries,
        seeds: seeds.to_vec(),
    }
}

fn run_cell(corpus: &Corpus, config: &MgsfConfig, seed: u64) -> Result<AblationCell, String> {
    let outcome = train(corpus, config, seed).map_err(|e| format!("{}/{seed}: {e}", config.variant))?;
    if outcome.diverged {
        return Err(format!("{}/{seed}: diverged", config.variant));
    }
    let (_, test) = evaluate_split(&outcome.model, corpus, Split::Test, config.batch_size)
        .map_err(|e| format!("{}/{seed}: {e}", config.variant))?;
    Ok(AblationCell {
        variant: config.variant,
        seed,
        test,
        val_recall: outcome.best_val_recall,
        best_epoch: outcome.best_epoch,
    })
}

fn summarize(variant: Variant, cells: &[Result<AblationCell, String>]) -> VariantSummary {
    let ok: Vec<&AblationCell> = cells
        .iter()
        .filter_map(|c| c.as_ref().ok())
        .filter(|c| c.variant == variant)
        .collect();
    let collect = |f: fn(&Metrics) -> f64| -> Vec<f64> { ok.iter().map(|c| f(&c.test)).collect() };
    let (precision_mean, precision_std) = mean_std(&collect(|m| m.precision));
    let (recall_mean, recall_std) = mean_std(&collect(|m| m.recall));
    let (f1_mean, f1_std) = mean_std(&collect(|m| m.f1));
    let (kappa_mean, kappa_std) = mean_std(&collect(|m| m.kappa));
    let bces: Vec<f64> = ok.iter().filter_map(|c| c.test.bce_loss).collect();
    let (bce_mean, bce_std) = if bces.is_empty() {
        (None, None)
    } else {
        let (m, s) = mean_std(&bces);
        (Some(m), Some(s))
    };
    let tp_range = [
        ok.iter().map(|c| c.test.tp_range[0]).fold(f64::INFINITY, f64::min),
        ok.iter().map(|c| c.test.tp_range[1]).fold(f64::NEG_INFINITY, f64::max),
    ];
    VariantSummary {
        variant,
        seeds: ok.len(),
        bce_mean,
        bce_std,
        precision_mean,
        precision_std,
        recall_mean,
        recall_std,
        f1_mean,
        f1_std,
        kappa_mean,
        kappa_std,
        tp_range,
    }
}

/// One trained dataset-size cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepCell {
    pub size: usize,
    pub seed: u64,
    pub test: Metrics,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepTable {
    pub cells: Vec<Result<SweepCell, String>>,
    pub sizes: Vec<usize>,
    pub seeds: Vec<u64>,
}

impl SweepTable {
    /// Mean test recall per size, in sweep order.
    pub fn recall_means(&self) -> Vec<f64> {
        self.sizes
            .iter()
            .map(|&size| {
                let vals: Vec<f64> = self
                    .cells
                    .iter()
                    .filter_map(|c| c.as_ref().ok())
                    .filter(|c| c.size == size)
                    .map(|c| c.test.recall)
                    .collect();
                mean_std(&vals).0
            })
            .collect()
    }

    /// Square root of the mean per-size variance.
    pub fn pooled_std(&self) -> f64 {
        let vars: Vec<f64> = self
            .sizes
            .iter()
            .map(|&size| {
                let vals: Vec<f64> = self
                    .cells
                    .iter()
                    .filter_map(|c| c.as_ref().ok())
                    .filter(|c| c.size == size)
                    .map(|c| c.test.recall)
                    .collect();
                let (_, s) = mean_std(&vals);
                s * s
            })
            .collect();
        (vars.iter().sum::<f64>() / vars.len().max(1) as f64).sqrt()
    }
}

/// Restrict the corpus to the first `size` demonstrations, spread evenly
/// over the tasks, re-split with the standard floor rule.
pub fn subset_corpus(corpus: &Corpus, size: usize) -> Corpus {
    let tasks = corpus.task_names();
    let per_task = size / tasks.len().max(1);
    let mut entries: Vec<CorpusEntry> = Vec::with_capacity(size);
    for task in &tasks {
        let task_entries: Vec<&CorpusEntry> = corpus
            .entries
            .iter()
            .filter(|e| e.record.task == *task)
            .collect();
        let take = per_task.min(task_entries.len());
        let n_train = (take as f64 * 0.6).floor() as usize;
        let n_val = (take as f64 * 0.2).floor() as usize;
        for (i, entry) in task_entries.into_iter().take(take).enumerate() {
            let mut entry = entry.clone();
            entry.record.split = if i < n_train {
                Split::Train
            } else if i < n_train + n_val {
                Split::Validation
            } else {
                Split::Test
            };
            entries.push(entry);
        }
    }
    Corpus { entries }
}

/// Train the full variant at each dataset size for each seed.
pub fn run_dataset_sweep(
    corpus: &Corpus,
    base: &MgsfConfig,
    sizes: &[usize],
    seeds: &[u64],
) -> SweepTable {
    let jobs: Vec<(usize, u64)> = sizes
        .iter()
        .flat_map(|s| seeds.iter().map(move |seed| (*s, *seed)))
        .collect();
    let cells: Vec<Result<SweepCell, String>> = jobs
        .par_iter()
        .map(|&(size, seed)| {
            let subset = subset_corpus(corpus, size);
            let outcome =
                train(&subset, base, seed).map_err(|e| format!("size {size}/{seed}: {e}"))?;
            if outcome.diverged {
                return Err(format!("size {size}/{seed}: diverged"));
            }
            let (_, test) = evaluate_split(&outcome.model, &subset, Split::Test, base.batch_size)
                .map_err(|e| format!("size {size}/{seed}: {e}"))?;
            Ok(SweepCell { size, seed, test })
        })
        .collect();
    SweepTable {
        cells,
        sizes: sizes.to_vec(),
        seeds: seeds.to_vec(),
    }
}
