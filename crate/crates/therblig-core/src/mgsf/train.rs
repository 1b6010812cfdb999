//! The training loop: Adam on batched BCE with early stopping on
//! validation macro recall, keeping the best-on-validation weights.

use super::metrics::{compute_metrics, EvalPair, Metrics};
use super::model::MgsfModel;
use super::{MgsfConfig, MgsfError};
use crate::datagen::{Corpus, CorpusEntry, Split};
use crate::domain::{one_hot, LabelSequence, Therblig, NUM_THERBLIGS};
use crate::numeric::{adam_step, AdamConfig, AdamState, Tape, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_recall: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Best-on-validation weights.
    pub model: MgsfModel<f32>,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val_recall: f64,
    /// Training hit non-finite loss or gradients and stopped early; the
    /// model still holds the last good checkpoint.
    pub diverged: bool,
}

fn one_hot_tensor(labels: &LabelSequence) -> Tensor<f32> {
    let rows = one_hot(labels);
    let mut out = Tensor::zeros(rows.len(), NUM_THERBLIGS);
    for (t, row) in rows.iter().enumerate() {
        for (k, v) in row.iter().enumerate() {
            out.set(t, k, *v as f32);
        }
    }
    out
}

/// Train a fresh model on the corpus' train split.
///
/// Deterministic for a fixed `(config, seed)`: initialization, data
/// order, and arithmetic are all derived from `seed` alone. Divergence
/// (non-finite loss or gradient) stops training and returns the best
/// checkpoint seen so far.
pub fn train(corpus: &Corpus, config: &MgsfConfig, seed: u64) -> Result<TrainOutcome, MgsfError> {
    config.validate()?;
    let train_entries = corpus.split(Split::Train);
    let val_entries = corpus.split(Split::Validation);
    if train_entries.is_empty() {
        return Err(MgsfError::EmptySplit("train"));
    }
    if val_entries.is_empty() {
        return Err(MgsfError::EmptySplit("validation"));
    }

    let mut model: MgsfModel<f32> = MgsfModel::init(config, seed)?;
    let rows: Vec<[f64; 26]> = train_entries
        .iter()
        .flat_map(|e| e.demo.states.iter().map(|s| s.flatten()))
        .collect();
    model.fit_normalization(rows.iter().map(|r| r.as_slice()));

    let inputs: Vec<Tensor<f32>> = train_entries
        .iter()
        .map(|e| model.normalized_features(&e.demo))
        .collect();
    let targets: Vec<Tensor<f32>> = train_entries.iter().map(|e| one_hot_tensor(&e.labels)).collect();

    let mut adam = AdamState::new(
        &model.params,
        AdamConfig {
            lr: config.lr,
            ..AdamConfig::default()
        },
    );

    let mut best_params = model.params.clone();
    let mut best_val_recall = f64::NEG_INFINITY;
    let mut best_epoch = 0usize;
    let mut stale_epochs = 0usize;
    let mut log = Vec::with_capacity(config.epochs);
    let mut diverged = false;

    'epochs: for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..train_entries.len()).collect();
        let mut shuffle_rng =
            ChaCha8Rng::seed_from_u64(seed ^ (epoch as u64).wrapping_mul(0x9e37_79b9));
        order.shuffle(&mut shuffle_rng);

        let mut loss_sum = 0.0f64;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            // batched tapes need equal lengths; split uneven chunks up
            let groups = group_by_len(chunk, &inputs);
            for group in groups {
                let mut tape = Tape::new();
                let tids = model.insert_params(&mut tape);
                let batch_inputs: Vec<Tensor<f32>> =
                    group.iter().map(|&i| inputs[i].clone()).collect();
                let probs = model.forward_stacked(&mut tape, &tids, &batch_inputs)?;
                let mut target_rows = Vec::new();
                for &i in &group {
                    target_rows.extend_from_slice(targets[i].data());
                }
                let stacked_targets = Tensor::from_flat(
                    batch_inputs.iter().map(|x| x.rows()).sum(),
                    NUM_THERBLIGS,
                    target_rows,
                );
                let loss = tape.bce_mean(probs, &stacked_targets)?;
                let loss_value = tape.value(loss).item() as f64;
                if !loss_value.is_finite() {
                    diverged = true;
                    break 'epochs;
                }
                loss_sum += loss_value;
                batches += 1;
                tape.backward(loss)?;
                let grads: Vec<Option<Tensor<f32>>> =
                    tids.leaves.iter().map(|id| tape.take_grad(*id)).collect();
                drop(tape);
                if adam_step(&mut model.params, &grads, &mut adam).is_err() {
                    diverged = true;
                    break 'epochs;
                }
            }
        }

        let (pairs, _) = evaluate_entries(&model, &val_entries, config.batch_size)?;
        let metrics = compute_metrics(&pairs)?;
        let val_recall = metrics.recall;
        log.push(EpochLog {
            epoch,
            train_loss: if batches == 0 { f64::NAN } else { loss_sum / batches as f64 },
            val_recall,
        });

        if val_recall > best_val_recall + 1e-9 {
            best_val_recall = val_recall;
            best_epoch = epoch;
            best_params = model.params.clone();
            stale_epochs = 0;
        } else {
            stale_epochs += 1;
            if stale_epochs > config.patience {
                break;
            }
        }
    }

    model.params = best_params;
    if best_val_recall == f64::NEG_INFINITY {
        // diverged before the first validation pass
        best_val_recall = f64::NAN;
    }
    Ok(TrainOutcome {
        model,
        log,
        best_epoch,
        best_val_recall,
        diverged,
    })
}

/// Split a batch into runs of equal sequence length, preserving order.
fn group_by_len(chunk: &[usize], inputs: &[Tensor<f32>]) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for &i in chunk {
        match groups.last_mut() {
            Some(g) if inputs[g[0]].rows() == inputs[i].rows() => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    groups
}

/// Raw (unsmoothed) argmax predictions with probabilities attached, for
/// every entry, plus the metric block.
pub fn evaluate_split(
    model: &MgsfModel<f32>,
    corpus: &Corpus,
    split: Split,
    batch_size: usize,
) -> Result<(Vec<EvalPair>, Metrics), MgsfError> {
    let entries = corpus.split(split);
    if entries.is_empty() {
        return Err(MgsfError::EmptySplit(match split {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }));
    }
    let (pairs, _) = evaluate_entries(model, &entries, batch_size)?;
    let metrics = compute_metrics(&pairs)?;
    Ok((pairs, metrics))
}

fn evaluate_entries(
    model: &MgsfModel<f32>,
    entries: &[&CorpusEntry],
    batch_size: usize,
) -> Result<(Vec<EvalPair>, ()), MgsfError> {
    let inputs: Vec<Tensor<f32>> = entries
        .iter()
        .map(|e| model.normalized_features(&e.demo))
        .collect();
    let indices: Vec<usize> = (0..entries.len()).collect();
    let mut pairs = Vec::with_capacity(entries.len());
    for chunk in indices.chunks(batch_size.max(1)) {
        for group in group_by_len(chunk, &inputs) {
            let mut tape = Tape::new();
            let tids = model.insert_params_frozen(&mut tape);
            let batch_inputs: Vec<Tensor<f32>> = group.iter().map(|&i| inputs[i].clone()).collect();
            let probs_id = model.forward_stacked(&mut tape, &tids, &batch_inputs)?;
            let probs = tape.value(probs_id);
            let n = inputs[group[0]].rows();
            for (slot, &i) in group.iter().enumerate() {
                let mut rows = Vec::with_capacity(n);
                let mut labels = Vec::with_capacity(n);
                for t in 0..n {
                    let mut row = [0.0f64; NUM_THERBLIGS];
                    let mut best = 0usize;
                    for k in 0..NUM_THERBLIGS {
                        row[k] = probs.get(slot * n + t, k) as f64;
                        if row[k] > row[best] {
                            best = k;
                        }
                    }
                    rows.push(row);
                    labels.push(Therblig::ALL[best]);
                }
                pairs.push(EvalPair {
                    predicted: LabelSequence {
                        labels,
                        probabilities: Some(rows),
                    },
                    truth: entries[i].labels.clone(),
                    task: entries[i].record.task.clone(),
                });
            }
        }
    }
    Ok((pairs, ()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mgsf::testutil::{mini_corpus, tiny_train_config};
    use crate::mgsf::Variant;

    #[test]
    fn training_runs_and_logs_epochs() {
        let corpus = mini_corpus(4, 2, 120);
        let out = train(&corpus, &tiny_train_config(), 1).unwrap();
        assert_eq!(out.log.len(), 3);
        assert!(!out.diverged);
        assert!(out.log.iter().all(|l| l.train_loss.is_finite()));
    }

    #[test]
    fn fixed_seed_gives_identical_loss_curve() {
        let corpus = mini_corpus(4, 2, 120);
        let a = train(&corpus, &tiny_train_config(), 7).unwrap();
        let b = train(&corpus, &tiny_train_config(), 7).unwrap();
        assert_eq!(a.log, b.log); // bit-identical, not approximately
        assert_eq!(a.model.params, b.model.params);
    }

    #[test]
    fn single_demo_overfit_reaches_memorization() {
        // one training demo, enough epochs: train recall >= 99%
        let mut corpus = mini_corpus(2, 1, 150);
        corpus.entries[0].record.split = Split::Train;
        corpus.entries[1].record.split = Split::Validation;
        let config = MgsfConfig {
            epochs: 200,
            patience: 200,
            batch_size: 1,
            ..tiny_train_config()
        };
        let out = train(&corpus, &config, 3).unwrap();
        let mut eval_corpus = corpus.clone();
        eval_corpus.entries[0].record.split = Split::Test;
        let (_, metrics) = evaluate_split(&out.model, &eval_corpus, Split::Test, 1).unwrap();
        assert!(
            metrics.recall >= 99.0,
            "memorization recall {}",
            metrics.recall
        );
    }

    #[test]
    fn empty_split_is_an_error() {
        let mut corpus = mini_corpus(2, 1, 100);
        for e in &mut corpus.entries {
            e.record.split = Split::Train;
        }
        assert!(matches!(
            train(&corpus, &tiny_train_config(), 0),
            Err(MgsfError::EmptySplit("validation"))
        ));
    }

    #[test]
    fn variants_all_train() {
        let corpus = mini_corpus(3, 2, 100);
        for variant in Variant::ALL {
            let config = MgsfConfig {
                variant,
                epochs: 2,
                ..tiny_train_config()
            };
            let out = train(&corpus, &config, 2).unwrap();
            assert!(!out.diverged, "{variant}");
        }
    }
}
