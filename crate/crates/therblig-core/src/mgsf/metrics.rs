//! Segmentation metric suite: BCE, macro precision/recall/F1, Cohen's
//! kappa, and the per-task recall range.
//!
//! Counts are pooled over every timestep of every demonstration into one
//! 7x7 contingency table. Classes absent from the ground truth are
//! excluded from macro averages (and listed in the result) so small
//! corpora are not scored against classes they never contain.

use super::MgsfError;
use crate::domain::{one_hot, LabelSequence, Therblig, NUM_THERBLIGS};
use serde::{Deserialize, Serialize};

/// One evaluated demonstration.
#[derive(Debug, Clone)]
pub struct EvalPair {
    pub predicted: LabelSequence,
    pub truth: LabelSequence,
    pub task: String,
}

/// The reported metric block. Percentages except for `bce_loss`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Mean element-wise BCE over all rows, when probabilities were
    /// attached to the predictions.
    pub bce_loss: Option<f64>,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub kappa: f64,
    /// [min, max] of per-task macro recall.
    pub tp_range: [f64; 2],
    /// Recall per class; `None` where the class is absent from truth.
    pub per_class_recall: [Option<f64>; NUM_THERBLIGS],
    /// Classes that were excluded from macro averages.
    pub absent_classes: Vec<Therblig>,
}

const BCE_CLAMP: f64 = 1e-7;

fn contingency(pairs: &[&EvalPair]) -> [[u64; NUM_THERBLIGS]; NUM_THERBLIGS] {
    let mut table = [[0u64; NUM_THERBLIGS]; NUM_THERBLIGS];
    for pair in pairs {
        for (p, t) in pair.predicted.labels.iter().zip(&pair.truth.labels) {
            table[t.code() as usize][p.code() as usize] += 1;
        }
    }
    table
}

fn macro_recall_from(table: &[[u64; NUM_THERBLIGS]; NUM_THERBLIGS]) -> f64 {
    let mut sum = 0.0;
    let mut classes = 0usize;
    for k in 0..NUM_THERBLIGS {
        let truth_total: u64 = table[k].iter().sum();
        if truth_total == 0 {
            continue;
        }
        sum += table[k][k] as f64 / truth_total as f64;
        classes += 1;
    }
    if classes == 0 {
        0.0
    } else {
        100.0 * sum / classes as f64
    }
}

/// Compute the full metric block over aligned prediction/truth pairs.
pub fn compute_metrics(pairs: &[EvalPair]) -> Result<Metrics, MgsfError> {
    if pairs.is_empty() {
        return Err(MgsfError::EmptySplit("evaluation"));
    }
    for pair in pairs {
        if pair.predicted.len() != pair.truth.len() {
            return Err(MgsfError::BadConfig(format!(
                "prediction length {} != truth length {} for task {}",
                pair.predicted.len(),
                pair.truth.len(),
                pair.task
            )));
        }
    }

    let all: Vec<&EvalPair> = pairs.iter().collect();
    let table = contingency(&all);
    let total: u64 = table.iter().flatten().sum();

    let mut precision_sum = 0.0;
    let mut recall_sum = 0.0;
    let mut f1_sum = 0.0;
    let mut present = 0usize;
    let mut per_class_recall = [None; NUM_THERBLIGS];
    let mut absent_classes = Vec::new();
    for k in 0..NUM_THERBLIGS {
        let truth_total: u64 = table[k].iter().sum();
        let pred_total: u64 = (0..NUM_THERBLIGS).map(|i| table[i][k]).sum();
        if truth_total == 0 {
            absent_classes.push(Therblig::ALL[k]);
            continue;
        }
        present += 1;
        let tp = table[k][k] as f64;
        let recall = tp / truth_total as f64;
        let precision = if pred_total == 0 { 0.0 } else { tp / pred_total as f64 };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        per_class_recall[k] = Some(100.0 * recall);
        precision_sum += precision;
        recall_sum += recall;
        f1_sum += f1;
    }
    let denom = present.max(1) as f64;

    // chance-corrected agreement from the same table
    let po = table.iter().enumerate().map(|(k, row)| row[k]).sum::<u64>() as f64 / total as f64;
    let pe = (0..NUM_THERBLIGS)
        .map(|k| {
            let row: u64 = table[k].iter().sum();
            let col: u64 = (0..NUM_THERBLIGS).map(|i| table[i][k]).sum();
            (row as f64 / total as f64) * (col as f64 / total as f64)
        })
        .sum::<f64>();
    let kappa = if (1.0 - pe).abs() < 1e-12 {
        if (po - 1.0).abs() < 1e-12 {
            100.0
        } else {
            0.0
        }
    } else {
        100.0 * (po - pe) / (1.0 - pe)
    };

    // per-task recall range
    let mut tasks: Vec<&str> = Vec::new();
    for pair in pairs {
        if !tasks.contains(&pair.task.as_str()) {
            tasks.push(&pair.task);
        }
    }
    let mut tp_range = [f64::INFINITY, f64::NEG_INFINITY];
    for task in &tasks {
        let subset: Vec<&EvalPair> = pairs.iter().filter(|p| p.task == *task).collect();
        let recall = macro_recall_from(&contingency(&subset));
        tp_range[0] = tp_range[0].min(recall);
        tp_range[1] = tp_range[1].max(recall);
    }

    // BCE over attached probability rows, when every pair has them
    let bce_loss = if pairs.iter().all(|p| p.predicted.probabilities.is_some()) {
        let mut acc = 0.0f64;
        let mut count = 0usize;
        for pair in pairs {
            let probs = pair.predicted.probabilities.as_ref().expect("checked");
            let targets = one_hot(&pair.truth);
            for (prow, trow) in probs.iter().zip(&targets) {
                for (p, y) in prow.iter().zip(trow) {
                    let pc = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
                    acc -= y * pc.ln() + (1.0 - y) * (1.0 - pc).ln();
                }
                count += NUM_THERBLIGS;
            }
        }
        Some(acc / count as f64)
    } else {
        None
    };

    Ok(Metrics {
        bce_loss,
        precision: 100.0 * precision_sum / denom,
        recall: 100.0 * recall_sum / denom,
        f1: 100.0 * f1_sum / denom,
        kappa,
        tp_range,
        per_class_recall,
        absent_classes,
    })
}
