//! Model parameters, the batched forward pass, and the fusion unit.

use super::{MgsfConfig, MgsfError, Variant};
use crate::domain::{Demonstration, FEATURE_DIM, NUM_THERBLIGS};
use crate::numeric::{
    bilstm_layer, encoder_layer, positional_encoding, save_checkpoint, load_checkpoint,
    EncoderLayerTids, LstmTids, ParamSet, Scalar, Tape, Tensor, Tid,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// All learnable state plus the input standardization fitted on the
/// training split.
#[derive(Debug, Clone)]
pub struct MgsfModel<T> {
    pub config: MgsfConfig,
    pub params: ParamSet<T>,
    pub input_mean: Vec<f64>,
    pub input_std: Vec<f64>,
}

/// Tape handles for one forward pass.
pub struct ModelTids {
    pub leaves: Vec<Tid>,
    proj_w: Tid,
    proj_b: Tid,
    encoders: Vec<EncoderLayerTids>,
    lstm: Option<(LstmTids, LstmTids)>,
    fusion: FusionTids,
    clf_w: Tid,
    clf_b: Tid,
}

enum FusionTids {
    Meta {
        m: Tid,
        w1: Tid,
        b1: Tid,
        w2: Tid,
        b2: Tid,
    },
    Gate {
        w: Tid,
        b: Tid,
    },
    Project {
        w: Tid,
        b: Tid,
    },
    None,
}

impl<T: Scalar> MgsfModel<T> {
    /// Fresh model with seeded initialization. Gate parameters start at
    /// zero (gate 0.5, a neutral blend); the meta-network output layer
    /// starts at zero so the full variant begins at the same point.
    pub fn init(config: &MgsfConfig, seed: u64) -> Result<MgsfModel<T>, MgsfError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let d_in = config.d_input;
        let dm = config.d_model;
        let h = config.lstm_hidden;
        let dc = config.fused_dim();

        params.push("proj.w", Tensor::xavier_uniform(d_in, dm, &mut rng));
        params.push("proj.b", Tensor::zeros(1, dm));
        for j in 0..config.encoder_layers {
            let d_ff = 4 * dm;
            params.push(format!("enc{j}.wq"), Tensor::xavier_uniform(dm, dm, &mut rng));
            params.push(format!("enc{j}.bq"), Tensor::zeros(1, dm));
            params.push(format!("enc{j}.wk"), Tensor::xavier_uniform(dm, dm, &mut rng));
            params.push(format!("enc{j}.bk"), Tensor::zeros(1, dm));
            params.push(format!("enc{j}.wv"), Tensor::xavier_uniform(dm, dm, &mut rng));
            params.push(format!("enc{j}.bv"), Tensor::zeros(1, dm));
            params.push(format!("enc{j}.wo"), Tensor::xavier_uniform(dm, dm, &mut rng));
            params.push(format!("enc{j}.bo"), Tensor::zeros(1, dm));
            params.push(format!("enc{j}.ffn_w1"), Tensor::xavier_uniform(dm, d_ff, &mut rng));
            params.push(format!("enc{j}.ffn_b1"), Tensor::zeros(1, d_ff));
            params.push(format!("enc{j}.ffn_w2"), Tensor::xavier_uniform(d_ff, dm, &mut rng));
            params.push(format!("enc{j}.ffn_b2"), Tensor::zeros(1, dm));
            params.push(format!("enc{j}.ln1_g"), Tensor::filled(1, dm, T::one()));
            params.push(format!("enc{j}.ln1_b"), Tensor::zeros(1, dm));
            params.push(format!("enc{j}.ln2_g"), Tensor::filled(1, dm, T::one()));
            params.push(format!("enc{j}.ln2_b"), Tensor::zeros(1, dm));
        }

        if config.variant != Variant::Backbone {
            for dir in ["fwd", "bwd"] {
                params.push(format!("lstm.{dir}.w_ih"), Tensor::xavier_uniform(d_in, 4 * h, &mut rng));
                params.push(format!("lstm.{dir}.w_hh"), Tensor::xavier_uniform(h, 4 * h, &mut rng));
                // forget-gate bias starts open
                let mut bias = Tensor::zeros(1, 4 * h);
                for k in h..2 * h {
                    bias.set(0, k, T::one());
                }
                params.push(format!("lstm.{dir}.b"), bias);
            }
        }

        match config.variant {
            Variant::Full => {
                let out = dc * dc + dc;
                params.push("meta.m", Tensor::xavier_uniform(1, config.meta_dim, &mut rng));
                params.push("meta.w1", Tensor::xavier_uniform(config.meta_dim, config.meta_hidden, &mut rng));
                params.push("meta.b1", Tensor::zeros(1, config.meta_hidden));
                params.push("meta.w2", Tensor::zeros(config.meta_hidden, out));
                params.push("meta.b2", Tensor::zeros(1, out));
            }
            Variant::NoMeta => {
                params.push("gate.w", Tensor::zeros(dc, dc));
                params.push("gate.b", Tensor::zeros(1, dc));
            }
            Variant::NoGate => {
                params.push("fuse.w", Tensor::xavier_uniform(dc, dc, &mut rng));
                params.push("fuse.b", Tensor::zeros(1, dc));
            }
            Variant::Backbone => {}
        }

        params.push("clf.w", Tensor::xavier_uniform(config.classifier_dim(), NUM_THERBLIGS, &mut rng));
        params.push("clf.b", Tensor::zeros(1, NUM_THERBLIGS));

        Ok(MgsfModel {
            config: config.clone(),
            params,
            input_mean: vec![0.0; d_in],
            input_std: vec![1.0; d_in],
        })
    }

    /// Fit per-feature standardization from raw n x d feature rows.
    pub fn fit_normalization<'a>(&mut self, feature_rows: impl Iterator<Item = &'a [f64]>) {
        let d = self.config.d_input;
        let mut count = 0usize;
        let mut mean = vec![0.0f64; d];
        let mut m2 = vec![0.0f64; d];
        for row in feature_rows {
            count += 1;
            for k in 0..d {
                let delta = row[k] - mean[k];
                mean[k] += delta / count as f64;
                m2[k] += delta * (row[k] - mean[k]);
            }
        }
        if count > 1 {
            self.input_mean = mean;
            self.input_std = m2
                .iter()
                .map(|v| (v / count as f64).sqrt().max(1e-6))
                .collect();
        }
    }

    /// Standardized feature tensor for a demonstration.
    pub fn normalized_features(&self, demo: &Demonstration) -> Tensor<T> {
        let n = demo.len();
        let mut out = Tensor::zeros(n, FEATURE_DIM);
        for (t, state) in demo.states.iter().enumerate() {
            for (k, v) in state.flatten().iter().enumerate() {
                out.set(
                    t,
                    k,
                    T::from_f64((v - self.input_mean[k]) / self.input_std[k]),
                );
            }
        }
        out
    }

    /// Insert every parameter as a differentiable leaf.
    pub fn insert_params(&self, tape: &mut Tape<T>) -> ModelTids {
        let mut leaves = Vec::with_capacity(self.params.len());
        for i in 0..self.params.len() {
            leaves.push(tape.leaf(self.params.tensor(i).clone()));
        }
        self.tids_from_leaves(leaves)
    }

    /// Insert every parameter as a constant (no gradients recorded):
    /// the evaluation path.
    pub fn insert_params_frozen(&self, tape: &mut Tape<T>) -> ModelTids {
        let mut leaves = Vec::with_capacity(self.params.len());
        for i in 0..self.params.len() {
            leaves.push(tape.constant(self.params.tensor(i).clone()));
        }
        self.tids_from_leaves(leaves)
    }

    fn tids_from_leaves(&self, leaves: Vec<Tid>) -> ModelTids {
        let id = |name: &str| -> Tid {
            let idx = (0..self.params.len())
                .find(|i| self.params.name(*i) == name)
                .unwrap_or_else(|| panic!("missing parameter {name}"));
            leaves[idx]
        };
        let encoders = (0..self.config.encoder_layers)
            .map(|j| EncoderLayerTids {
                wq: id(&format!("enc{j}.wq")),
                bq: id(&format!("enc{j}.bq")),
                wk: id(&format!("enc{j}.wk")),
                bk: id(&format!("enc{j}.bk")),
                wv: id(&format!("enc{j}.wv")),
                bv: id(&format!("enc{j}.bv")),
                wo: id(&format!("enc{j}.wo")),
                bo: id(&format!("enc{j}.bo")),
                ffn_w1: id(&format!("enc{j}.ffn_w1")),
                ffn_b1: id(&format!("enc{j}.ffn_b1")),
                ffn_w2: id(&format!("enc{j}.ffn_w2")),
                ffn_b2: id(&format!("enc{j}.ffn_b2")),
                ln1_gain: id(&format!("enc{j}.ln1_g")),
                ln1_bias: id(&format!("enc{j}.ln1_b")),
                ln2_gain: id(&format!("enc{j}.ln2_g")),
                ln2_bias: id(&format!("enc{j}.ln2_b")),
            })
            .collect();
        let lstm = if self.config.variant != Variant::Backbone {
            Some((
                LstmTids {
                    w_ih: id("lstm.fwd.w_ih"),
                    w_hh: id("lstm.fwd.w_hh"),
                    bias: id("lstm.fwd.b"),
                },
                LstmTids {
                    w_ih: id("lstm.bwd.w_ih"),
                    w_hh: id("lstm.bwd.w_hh"),
                    bias: id("lstm.bwd.b"),
                },
            ))
        } else {
            None
        };
        let fusion = match self.config.variant {
            Variant::Full => FusionTids::Meta {
                m: id("meta.m"),
                w1: id("meta.w1"),
                b1: id("meta.b1"),
                w2: id("meta.w2"),
                b2: id("meta.b2"),
            },
            Variant::NoMeta => FusionTids::Gate {
                w: id("gate.w"),
                b: id("gate.b"),
            },
            Variant::NoGate => FusionTids::Project {
                w: id("fuse.w"),
                b: id("fuse.b"),
            },
            Variant::Backbone => FusionTids::None,
        };
        ModelTids {
            proj_w: id("proj.w"),
            proj_b: id("proj.b"),
            encoders,
            lstm,
            fusion,
            clf_w: id("clf.w"),
            clf_b: id("clf.b"),
            leaves,
        }
    }

    /// Batched forward pass over standardized inputs (each n x d, equal
    /// n). Returns per-timestep probabilities, member-major
    /// (batch * n, 7).
    pub fn forward_stacked(
        &self,
        tape: &mut Tape<T>,
        tids: &ModelTids,
        inputs: &[Tensor<T>],
    ) -> Result<Tid, MgsfError> {
        let batch = inputs.len();
        assert!(batch > 0, "empty batch");
        let n = inputs[0].rows();
        let check = |tape: &Tape<T>, id: Tid, stage: &'static str| -> Result<(), MgsfError> {
            if tape.value(id).is_finite() {
                Ok(())
            } else {
                Err(MgsfError::NonFinite { stage })
            }
        };

        // member-major stacked input
        let member_ids: Vec<Tid> = inputs.iter().map(|x| tape.constant(x.clone())).collect();
        let x_stacked = tape.concat_rows(&member_ids)?;

        // transformer branch
        let proj = tape.matmul(x_stacked, tids.proj_w)?;
        let proj = tape.add_row(proj, tids.proj_b)?;
        let pe = positional_encoding::<T>(n, self.config.d_model);
        let mut pe_tiled = Tensor::zeros(batch * n, self.config.d_model);
        for b in 0..batch {
            for t in 0..n {
                for j in 0..self.config.d_model {
                    pe_tiled.set(b * n + t, j, pe.get(t, j));
                }
            }
        }
        let pe_id = tape.constant(pe_tiled);
        let mut h_trans = tape.add(proj, pe_id)?;
        for enc in &tids.encoders {
            h_trans = encoder_layer(tape, h_trans, n, batch, enc, self.config.heads)?;
        }
        check(tape, h_trans, "transformer")?;

        // BiLSTM branch, step-major then regathered member-major
        let fused = match (&tids.lstm, &tids.fusion) {
            (None, FusionTids::None) => h_trans,
            (Some((fwd, bwd)), fusion) => {
                let mut steps = Vec::with_capacity(n);
                for t in 0..n {
                    let mut step = Tensor::zeros(batch, self.config.d_input);
                    for (b, x) in inputs.iter().enumerate() {
                        for k in 0..self.config.d_input {
                            step.set(b, k, x.get(t, k));
                        }
                    }
                    steps.push(tape.constant(step));
                }
                let hs = bilstm_layer(tape, &steps, fwd, bwd, self.config.lstm_hidden, batch)?;
                let step_major = tape.concat_rows(&hs)?;
                let index: Vec<usize> = (0..batch * n)
                    .map(|row| {
                        let (b, t) = (row / n, row % n);
                        t * batch + b
                    })
                    .collect();
                let h_lstm = tape.gather_rows(step_major, &index)?;
                check(tape, h_lstm, "bilstm")?;

                let c = tape.concat_cols(&[h_lstm, h_trans])?;
                let f = self.fuse(tape, c, fusion)?;
                check(tape, f, "fusion")?;
                f
            }
            _ => unreachable!("lstm and fusion exist together"),
        };

        let logits = tape.matmul(fused, tids.clf_w)?;
        let logits = tape.add_row(logits, tids.clf_b)?;
        let probs = tape.softmax_rows(logits);
        check(tape, probs, "classifier")?;
        Ok(probs)
    }

    fn fuse(&self, tape: &mut Tape<T>, c: Tid, fusion: &FusionTids) -> Result<Tid, MgsfError> {
        let dc = self.config.fused_dim();
        match fusion {
            FusionTids::Meta { m, w1, b1, w2, b2 } => {
                let hidden = tape.matmul(*m, *w1)?;
                let hidden = tape.add_row(hidden, *b1)?;
                let hidden = tape.tanh(hidden);
                let theta = tape.matmul(hidden, *w2)?;
                let theta = tape.add_row(theta, *b2)?;
                let wg_flat = tape.slice_cols(theta, 0, dc * dc)?;
                let wg = tape.reshape(wg_flat, dc, dc)?;
                let bg = tape.slice_cols(theta, dc * dc, dc)?;
                Ok(recursive_gated_fusion(
                    tape,
                    c,
                    wg,
                    bg,
                    self.config.fusion_steps,
                    self.config.fusion_init_zero,
                )?)
            }
            FusionTids::Gate { w, b } => Ok(recursive_gated_fusion(
                tape,
                c,
                *w,
                *b,
                self.config.fusion_steps,
                self.config.fusion_init_zero,
            )?),
            FusionTids::Project { w, b } => {
                let f = tape.matmul(c, *w)?;
                Ok(tape.add_row(f, *b)?)
            }
            FusionTids::None => Ok(c),
        }
    }

    /// Single-demonstration forward: per-timestep probability rows.
    pub fn forward(&self, demo: &Demonstration) -> Result<Vec<[f64; NUM_THERBLIGS]>, MgsfError> {
        let mut tape = Tape::new();
        let tids = self.insert_params_frozen(&mut tape);
        let x = self.normalized_features(demo);
        let probs = self.forward_stacked(&mut tape, &tids, &[x])?;
        let value = tape.value(probs);
        let mut out = Vec::with_capacity(demo.len());
        for t in 0..demo.len() {
            let mut row = [0.0f64; NUM_THERBLIGS];
            for k in 0..NUM_THERBLIGS {
                row[k] = value.get(t, k).as_f64();
            }
            out.push(row);
        }
        Ok(out)
    }
}

/// The recursive gated fusion update: once the gate
/// `G = sigmoid(c * Wg + bg)` is computed (it depends only on the
/// features, so re-evaluating it inside the loop would reproduce the
/// same value), the output is folded `steps` times:
/// `F <- G .* c + (1 - G) .* F`, starting from `F = c` (or zeros when
/// `init_zero` is set).
pub fn recursive_gated_fusion<T: Scalar>(
    tape: &mut Tape<T>,
    c: Tid,
    wg: Tid,
    bg: Tid,
    steps: usize,
    init_zero: bool,
) -> Result<Tid, crate::numeric::NumericError> {
    let pre = tape.matmul(c, wg)?;
    let pre = tape.add_row(pre, bg)?;
    let gate = tape.sigmoid(pre);
    let gc = tape.mul(gate, c)?;
    let complement = tape.rsub_scalar(gate, T::one());
    let mut fused = if init_zero {
        let (r, k) = tape.value(c).shape();
        tape.constant(Tensor::zeros(r, k))
    } else {
        c
    };
    for _ in 0..steps {
        let carry = tape.mul(complement, fused)?;
        fused = tape.add(gc, carry)?;
    }
    Ok(fused)
}

/// Checkpoint meta payload stored alongside the weights.
#[derive(Debug, Serialize, Deserialize)]
struct CheckpointMeta {
    config: MgsfConfig,
    input_mean: Vec<f64>,
    input_std: Vec<f64>,
}

impl MgsfModel<f32> {
    pub fn save(&self, path: &Path) -> Result<(), MgsfError> {
        let meta = CheckpointMeta {
            config: self.config.clone(),
            input_mean: self.input_mean.clone(),
            input_std: self.input_std.clone(),
        };
        let meta = serde_json::to_value(&meta).map_err(|e| MgsfError::CheckpointMeta(e.to_string()))?;
        save_checkpoint(path, &self.params, Some(meta))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<MgsfModel<f32>, MgsfError> {
        let (params, meta) = load_checkpoint(path)?;
        let meta = meta.ok_or_else(|| MgsfError::CheckpointMeta("missing meta".into()))?;
        let meta: CheckpointMeta =
            serde_json::from_value(meta).map_err(|e| MgsfError::CheckpointMeta(e.to_string()))?;
        let model = MgsfModel {
            config: meta.config,
            params,
            input_mean: meta.input_mean,
            input_std: meta.input_std,
        };
        model.config.validate()?;
        Ok(model)
    }

    /// Gradient-check twin at f64.
    pub fn to_f64(&self) -> MgsfModel<f64> {
        MgsfModel {
            config: self.config.clone(),
            params: self.params.cast(),
            input_mean: self.input_mean.clone(),
            input_std: self.input_std.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_demo, generate_scene, training_templates, GeneratorConfig};

    fn toy_config(variant: Variant) -> MgsfConfig {
        MgsfConfig {
            lstm_hidden: 4,
            d_model: 8,
            encoder_layers: 1,
            heads: 2,
            meta_dim: 4,
            meta_hidden: 8,
            fusion_steps: 2,
            variant,
            ..MgsfConfig::default()
        }
    }

    fn tiny_demo() -> Demonstration {
        let template = &training_templates()[0];
        let scene = generate_scene(2, 0, 1).unwrap();
        let config = GeneratorConfig {
            duration_steps: 600,
            ..GeneratorConfig::default()
        };
        let mut out = generate_demo(template, &scene, &config, 2).unwrap();
        out.demo.states.truncate(12);
        out.demo.gripper.truncate(12);
        out.demo
    }

    #[test]
    fn forward_shape_is_n_by_7_rows_sum_to_one() {
        for variant in Variant::ALL {
            let model = MgsfModel::<f32>::init(&toy_config(variant), 3).unwrap();
            let demo = tiny_demo();
            let probs = model.forward(&demo).unwrap();
            assert_eq!(probs.len(), demo.len());
            for row in &probs {
                let sum: f64 = row.iter().sum();
                assert!((sum - 1.0).abs() <= 1e-6, "{variant}: {sum}");
            }
        }
    }

    #[test]
    fn backbone_has_no_lstm_or_fusion_parameters() {
        let model = MgsfModel::<f32>::init(&toy_config(Variant::Backbone), 3).unwrap();
        for name in model.params.names() {
            assert!(
                !name.starts_with("lstm.") && !name.starts_with("meta.") && !name.starts_with("gate."),
                "unexpected parameter {name}"
            );
        }
        // and the variants each carry exactly their own fusion parameters
        let full = MgsfModel::<f32>::init(&toy_config(Variant::Full), 3).unwrap();
        assert!(full.params.get("meta.w2").is_some());
        assert!(full.params.get("gate.w").is_none());
        let no_meta = MgsfModel::<f32>::init(&toy_config(Variant::NoMeta), 3).unwrap();
        assert!(no_meta.params.get("gate.w").is_some());
        assert!(no_meta.params.get("meta.m").is_none());
        let no_gate = MgsfModel::<f32>::init(&toy_config(Variant::NoGate), 3).unwrap();
        assert!(no_gate.params.get("fuse.w").is_some());
    }

    #[test]
    fn gate_extremes_pin_fusion_output() {
        // gate ~ 1: F = c; gate ~ 0: F = F0 = c as well under feature init
        let mut tape = Tape::<f64>::new();
        let c = tape.constant(Tensor::from_flat(2, 3, vec![0.3, -1.0, 2.0, 0.5, 0.1, -0.4]));
        let wg = tape.constant(Tensor::zeros(3, 3));
        let bg_hi = tape.constant(Tensor::filled(1, 3, 40.0));
        let bg_lo = tape.constant(Tensor::filled(1, 3, -40.0));

        let f_hi = recursive_gated_fusion(&mut tape, c, wg, bg_hi, 3, false).unwrap();
        let f_lo = recursive_gated_fusion(&mut tape, c, wg, bg_lo, 3, false).unwrap();
        for (a, b) in tape.value(f_hi).data().iter().zip(tape.value(c).data()) {
            assert!((a - b).abs() < 1e-9);
        }
        for (a, b) in tape.value(f_lo).data().iter().zip(tape.value(c).data()) {
            assert!((a - b).abs() < 1e-9);
        }
        // gate ~ 0 with zero init: F stays at zero
        let f_zero = recursive_gated_fusion(&mut tape, c, wg, bg_lo, 3, true).unwrap();
        for v in tape.value(f_zero).data() {
            assert!(v.abs() < 1e-9);
        }
    }

    #[test]
    fn zero_gate_params_are_neutral() {
        // W = 0, b = 0 -> G = 0.5 and F never leaves c
        let mut tape = Tape::<f64>::new();
        let c = tape.constant(Tensor::from_flat(1, 4, vec![1.0, -2.0, 0.25, 3.0]));
        let wg = tape.constant(Tensor::zeros(4, 4));
        let bg = tape.constant(Tensor::zeros(1, 4));
        let f = recursive_gated_fusion(&mut tape, c, wg, bg, 5, false).unwrap();
        for (a, b) in tape.value(f).data().iter().zip(tape.value(c).data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn fusion_matches_hand_rolled_loop_oracle() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let dc = 5;
            let c: Vec<f64> = (0..dc).map(|_| rng.random_range(-2.0..2.0)).collect();
            let w: Vec<f64> = (0..dc * dc).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..dc).map(|_| rng.random_range(-1.0..1.0)).collect();

            let mut tape = Tape::<f64>::new();
            let ct = tape.constant(Tensor::from_flat(1, dc, c.clone()));
            let wt = tape.constant(Tensor::from_flat(dc, dc, w.clone()));
            let bt = tape.constant(Tensor::from_flat(1, dc, b.clone()));
            let f = recursive_gated_fusion(&mut tape, ct, wt, bt, 3, false).unwrap();

            // hand-rolled scalar loop
            let mut gate = vec![0.0; dc];
            for j in 0..dc {
                let mut pre = b[j];
                for k in 0..dc {
                    pre += c[k] * w[k * dc + j];
                }
                gate[j] = 1.0 / (1.0 + (-pre).exp());
            }
            let mut fused = c.clone();
            for _ in 0..3 {
                for j in 0..dc {
                    fused[j] = gate[j] * c[j] + (1.0 - gate[j]) * fused[j];
                }
            }
            for (a, e) in tape.value(f).data().iter().zip(&fused) {
                assert!((a - e).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn fusion_single_step_equals_gating_formula() {
        let mut tape = Tape::<f64>::new();
        let c = tape.constant(Tensor::from_flat(1, 3, vec![0.7, -0.2, 1.1]));
        let wg = tape.constant(Tensor::from_flat(3, 3, vec![0.1, 0.2, -0.3, 0.0, 0.5, 0.1, -0.2, 0.1, 0.4]));
        let bg = tape.constant(Tensor::from_flat(1, 3, vec![0.05, -0.1, 0.2]));
        let f1 = recursive_gated_fusion(&mut tape, c, wg, bg, 1, false).unwrap();
        // T=1 with F0 = c: F = G.*c + (1-G).*c = c
        for (a, b) in tape.value(f1).data().iter().zip(tape.value(c).data()) {
            assert!((a - b).abs() < 1e-12);
        }
        // with zero init, T=1 is exactly G.*c
        let f1z = recursive_gated_fusion(&mut tape, c, wg, bg, 1, true).unwrap();
        let pre = tape.matmul(c, wg).unwrap();
        let pre = tape.add_row(pre, bg).unwrap();
        let g = tape.sigmoid(pre);
        let expect = tape.mul(g, c).unwrap();
        for (a, b) in tape.value(f1z).data().iter().zip(tape.value(expect).data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let mut model = MgsfModel::<f32>::init(&toy_config(Variant::Full), 9).unwrap();
        model.input_mean[3] = 1.5;
        model.input_std[3] = 2.0;
        model.save(&path).unwrap();
        let loaded = MgsfModel::load(&path).unwrap();
        assert_eq!(loaded.config, model.config);
        assert_eq!(loaded.params, model.params);
        assert_eq!(loaded.input_mean, model.input_mean);

        let demo = tiny_demo();
        let a = model.forward(&demo).unwrap();
        let b = loaded.forward(&demo).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn full_model_gradient_check_on_toy_dims() {
        use crate::numeric::{grad_check, DEFAULT_STEP};
        // n=6, H=4, d_model=8, m=4, T=2 at f64
        let config = toy_config(Variant::Full);
        let model64: MgsfModel<f64> = MgsfModel::init(&config, 5).unwrap();
        let demo = tiny_demo();
        let mut x = model64.normalized_features(&demo);
        x = x.reshaped(12, 26);
        let x6 = Tensor::from_flat(6, 26, x.data()[..6 * 26].to_vec());
        let mut targets = Tensor::<f64>::zeros(6, 7);
        for t in 0..6 {
            targets.set(t, t % 7, 1.0);
        }

        let report = grad_check(&model64.params, DEFAULT_STEP, |tape, ids| {
            let tids = model64.tids_from_leaves(ids.to_vec());
            let probs = model64
                .forward_stacked(tape, &tids, &[x6.clone()])
                .map_err(|e| match e {
                    MgsfError::Numeric(n) => n,
                    other => crate::numeric::NumericError::InvalidArgument {
                        op: "forward",
                        detail: other.to_string(),
                    },
                })?;
            tape.bce_mean(probs, &targets)
        })
        .unwrap();
        assert!(report.max_rel_error <= 1e-4, "{report:?}");
    }
}
