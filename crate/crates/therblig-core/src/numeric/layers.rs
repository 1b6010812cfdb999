//! Sequence layers composed from tape primitives: LSTM cell, BiLSTM,
//! sinusoidal positional encoding, and a post-norm Transformer encoder
//! layer. Because they are built from primitives, their backward passes
//! come from the tape for free.

use super::tape::{Tape, Tid};
use super::{NumericError, Scalar, Tensor};

/// Tape handles for one LSTM direction's parameters.
///
/// `w_ih` is (d_in, 4H), `w_hh` is (H, 4H), `bias` is (1, 4H); the gate
/// blocks are ordered input, forget, cell, output.
#[derive(Debug, Clone, Copy)]
pub struct LstmTids {
    pub w_ih: Tid,
    pub w_hh: Tid,
    pub bias: Tid,
}

/// One LSTM step: takes x (B, d), h and c (B, H), returns (h', c').
pub fn lstm_cell<T: Scalar>(
    tape: &mut Tape<T>,
    x: Tid,
    h_prev: Tid,
    c_prev: Tid,
    params: &LstmTids,
    hidden: usize,
) -> Result<(Tid, Tid), NumericError> {
    let xw = tape.matmul(x, params.w_ih)?;
    let hw = tape.matmul(h_prev, params.w_hh)?;
    let pre = tape.add(xw, hw)?;
    let pre = tape.add_row(pre, params.bias)?;

    let i_gate = tape.slice_cols(pre, 0, hidden)?;
    let f_gate = tape.slice_cols(pre, hidden, hidden)?;
    let g_gate = tape.slice_cols(pre, 2 * hidden, hidden)?;
    let o_gate = tape.slice_cols(pre, 3 * hidden, hidden)?;

    let i = tape.sigmoid(i_gate);
    let f = tape.sigmoid(f_gate);
    let g = tape.tanh(g_gate);
    let o = tape.sigmoid(o_gate);

    let fc = tape.mul(f, c_prev)?;
    let ig = tape.mul(i, g)?;
    let c = tape.add(fc, ig)?;
    let tc = tape.tanh(c);
    let h = tape.mul(o, tc)?;
    Ok((h, c))
}

/// Bidirectional LSTM over a step-major sequence.
///
/// `steps[t]` is the (B, d) input at time t. Returns per-step outputs of
/// shape (B, 2H): forward hidden state, then backward, concatenated.
pub fn bilstm_layer<T: Scalar>(
    tape: &mut Tape<T>,
    steps: &[Tid],
    forward: &LstmTids,
    backward: &LstmTids,
    hidden: usize,
    batch: usize,
) -> Result<Vec<Tid>, NumericError> {
    let n = steps.len();
    let zero = Tensor::zeros(batch, hidden);

    let mut h = tape.constant(zero.clone());
    let mut c = tape.constant(zero.clone());
    let mut fwd = Vec::with_capacity(n);
    for &x in steps {
        let (h2, c2) = lstm_cell(tape, x, h, c, forward, hidden)?;
        h = h2;
        c = c2;
        fwd.push(h2);
    }

    let mut h = tape.constant(zero.clone());
    let mut c = tape.constant(zero);
    let mut bwd = vec![h; n];
    for (t, &x) in steps.iter().enumerate().rev() {
        let (h2, c2) = lstm_cell(tape, x, h, c, backward, hidden)?;
        h = h2;
        c = c2;
        bwd[t] = h2;
    }

    (0..n)
        .map(|t| tape.concat_cols(&[fwd[t], bwd[t]]))
        .collect()
}

/// Tape handles for one Transformer encoder layer (post-norm, ReLU FFN
/// with inner width 4 * d_model).
#[derive(Debug, Clone, Copy)]
pub struct EncoderLayerTids {
    pub wq: Tid,
    pub bq: Tid,
    pub wk: Tid,
    pub bk: Tid,
    pub wv: Tid,
    pub bv: Tid,
    pub wo: Tid,
    pub bo: Tid,
    pub ffn_w1: Tid,
    pub ffn_b1: Tid,
    pub ffn_w2: Tid,
    pub ffn_b2: Tid,
    pub ln1_gain: Tid,
    pub ln1_bias: Tid,
    pub ln2_gain: Tid,
    pub ln2_bias: Tid,
}

/// Scaled dot-product multi-head self-attention over one sequence.
///
/// `x` is (n, d_model); `d_model` must be divisible by `heads`.
pub fn multihead_attention<T: Scalar>(
    tape: &mut Tape<T>,
    x: Tid,
    params: &EncoderLayerTids,
    heads: usize,
) -> Result<Tid, NumericError> {
    let (_, d_model) = tape.value(x).shape();
    if d_model % heads != 0 {
        return Err(NumericError::InvalidArgument {
            op: "multihead_attention",
            detail: format!("d_model {d_model} not divisible by {heads} heads"),
        });
    }
    let d_head = d_model / heads;

    let q = tape.matmul(x, params.wq)?;
    let q = tape.add_row(q, params.bq)?;
    let k = tape.matmul(x, params.wk)?;
    let k = tape.add_row(k, params.bk)?;
    let v = tape.matmul(x, params.wv)?;
    let v = tape.add_row(v, params.bv)?;

    let scale = T::from_f64(1.0 / (d_head as f64).sqrt());
    let mut head_outs = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = tape.slice_cols(q, h * d_head, d_head)?;
        let kh = tape.slice_cols(k, h * d_head, d_head)?;
        let vh = tape.slice_cols(v, h * d_head, d_head)?;
        let scores = tape.matmul_nt(qh, kh)?;
        let scores = tape.scale(scores, scale);
        let weights = tape.softmax_rows(scores);
        head_outs.push(tape.matmul(weights, vh)?);
    }
    let merged = tape.concat_cols(&head_outs)?;
    let out = tape.matmul(merged, params.wo)?;
    tape.add_row(out, params.bo)
}

/// Attention weights of a single head for inspection in tests.
pub fn attention_weights<T: Scalar>(
    tape: &mut Tape<T>,
    x: Tid,
    params: &EncoderLayerTids,
    heads: usize,
    head: usize,
) -> Result<Tid, NumericError> {
    let (_, d_model) = tape.value(x).shape();
    let d_head = d_model / heads;
    let q = tape.matmul(x, params.wq)?;
    let q = tape.add_row(q, params.bq)?;
    let k = tape.matmul(x, params.wk)?;
    let k = tape.add_row(k, params.bk)?;
    let qh = tape.slice_cols(q, head * d_head, d_head)?;
    let kh = tape.slice_cols(k, head * d_head, d_head)?;
    let scores = tape.matmul_nt(qh, kh)?;
    let scores = tape.scale(scores, T::from_f64(1.0 / (d_head as f64).sqrt()));
    Ok(tape.softmax_rows(scores))
}

/// One post-norm encoder layer over a batch of stacked sequences.
///
/// `x` is (batch * n, d_model) with each member's n rows contiguous.
/// Attention runs per member; the residual/norm/FFN path is shared.
pub fn encoder_layer<T: Scalar>(
    tape: &mut Tape<T>,
    x: Tid,
    seq_len: usize,
    batch: usize,
    params: &EncoderLayerTids,
    heads: usize,
) -> Result<Tid, NumericError> {
    let (rows, _) = tape.value(x).shape();
    if rows != seq_len * batch {
        return Err(NumericError::InvalidArgument {
            op: "encoder_layer",
            detail: format!("{rows} rows != {batch} members x {seq_len} steps"),
        });
    }

    let mut member_outs = Vec::with_capacity(batch);
    for b in 0..batch {
        let xb = tape.slice_rows(x, b * seq_len, seq_len)?;
        member_outs.push(multihead_attention(tape, xb, params, heads)?);
    }
    let attn = tape.concat_rows(&member_outs)?;

    let res = tape.add(x, attn)?;
    let norm = tape.layer_norm_rows(res);
    let norm = tape.mul_row(norm, params.ln1_gain)?;
    let h1 = tape.add_row(norm, params.ln1_bias)?;

    let ff = tape.matmul(h1, params.ffn_w1)?;
    let ff = tape.add_row(ff, params.ffn_b1)?;
    let ff = tape.relu(ff);
    let ff = tape.matmul(ff, params.ffn_w2)?;
    let ff = tape.add_row(ff, params.ffn_b2)?;

    let res2 = tape.add(h1, ff)?;
    let norm2 = tape.layer_norm_rows(res2);
    let norm2 = tape.mul_row(norm2, params.ln2_gain)?;
    tape.add_row(norm2, params.ln2_bias)
}

/// Sinusoidal positional encoding, one row per timestep.
pub fn positional_encoding<T: Scalar>(n: usize, d_model: usize) -> Tensor<T> {
    let mut out = Tensor::zeros(n, d_model);
    for t in 0..n {
        for j in 0..d_model {
            let pair = (j / 2) as f64;
            let rate = (10000.0f64).powf(2.0 * pair / d_model as f64);
            let angle = t as f64 / rate;
            let v = if j % 2 == 0 { angle.sin() } else { angle.cos() };
            out.set(t, j, T::from_f64(v));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn zero_lstm(tape: &mut Tape<f64>, d: usize, hidden: usize) -> LstmTids {
        LstmTids {
            w_ih: tape.leaf(Tensor::zeros(d, 4 * hidden)),
            w_hh: tape.leaf(Tensor::zeros(hidden, 4 * hidden)),
            bias: tape.leaf(Tensor::zeros(1, 4 * hidden)),
        }
    }

    fn random_lstm(tape: &mut Tape<f64>, d: usize, hidden: usize, rng: &mut ChaCha8Rng) -> LstmTids {
        LstmTids {
            w_ih: tape.leaf(Tensor::xavier_uniform(d, 4 * hidden, rng)),
            w_hh: tape.leaf(Tensor::xavier_uniform(hidden, 4 * hidden, rng)),
            bias: tape.leaf(Tensor::xavier_uniform(1, 4 * hidden, rng)),
        }
    }

    fn random_encoder(
        tape: &mut Tape<f64>,
        d_model: usize,
        rng: &mut ChaCha8Rng,
    ) -> EncoderLayerTids {
        let d_ff = 4 * d_model;
        EncoderLayerTids {
            wq: tape.leaf(Tensor::xavier_uniform(d_model, d_model, rng)),
            bq: tape.leaf(Tensor::zeros(1, d_model)),
            wk: tape.leaf(Tensor::xavier_uniform(d_model, d_model, rng)),
            bk: tape.leaf(Tensor::zeros(1, d_model)),
            wv: tape.leaf(Tensor::xavier_uniform(d_model, d_model, rng)),
            bv: tape.leaf(Tensor::zeros(1, d_model)),
            wo: tape.leaf(Tensor::xavier_uniform(d_model, d_model, rng)),
            bo: tape.leaf(Tensor::zeros(1, d_model)),
            ffn_w1: tape.leaf(Tensor::xavier_uniform(d_model, d_ff, rng)),
            ffn_b1: tape.leaf(Tensor::zeros(1, d_ff)),
            ffn_w2: tape.leaf(Tensor::xavier_uniform(d_ff, d_model, rng)),
            ffn_b2: tape.leaf(Tensor::zeros(1, d_model)),
            ln1_gain: tape.leaf(Tensor::filled(1, d_model, 1.0)),
            ln1_bias: tape.leaf(Tensor::zeros(1, d_model)),
            ln2_gain: tape.leaf(Tensor::filled(1, d_model, 1.0)),
            ln2_bias: tape.leaf(Tensor::zeros(1, d_model)),
        }
    }

    #[test]
    fn lstm_zero_weights_give_zero_hidden() {
        let mut tape = Tape::<f64>::new();
        let params = zero_lstm(&mut tape, 3, 4);
        let x = tape.constant(Tensor::filled(2, 3, 0.7));
        let h0 = tape.constant(Tensor::zeros(2, 4));
        let c0 = tape.constant(Tensor::zeros(2, 4));
        let (h, c) = lstm_cell(&mut tape, x, h0, c0, &params, 4).unwrap();
        assert!(tape.value(h).data().iter().all(|v| *v == 0.0));
        assert!(tape.value(c).data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn bilstm_reversal_swaps_direction_roles() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (n, d, hidden) = (5, 3, 4);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();

        let run = |rows: &[Vec<f64>]| {
            let mut tape = Tape::<f64>::new();
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let fwd = random_lstm(&mut tape, d, hidden, &mut rng);
            let bwd = random_lstm(&mut tape, d, hidden, &mut rng);
            let steps: Vec<Tid> = rows
                .iter()
                .map(|r| tape.constant(Tensor::from_flat(1, d, r.clone())))
                .collect();
            let outs = bilstm_layer(&mut tape, &steps, &fwd, &bwd, hidden, 1).unwrap();
            outs.iter().map(|o| tape.value(*o).data().to_vec()).collect::<Vec<_>>()
        };

        let orig = run(&rows);
        let reversed_rows: Vec<Vec<f64>> = rows.iter().rev().cloned().collect();
        let rev = run(&reversed_rows);

        // output(reversed X)[t] equals output(X)[n-1-t] with the forward
        // and backward halves swapped -- but only when both directions
        // share parameters, which random_lstm does not give us. Instead,
        // rerun with shared parameters for both directions.
        let run_shared = |rows: &[Vec<f64>]| {
            let mut tape = Tape::<f64>::new();
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let shared = random_lstm(&mut tape, d, hidden, &mut rng);
            let steps: Vec<Tid> = rows
                .iter()
                .map(|r| tape.constant(Tensor::from_flat(1, d, r.clone())))
                .collect();
            let outs = bilstm_layer(&mut tape, &steps, &shared, &shared, hidden, 1).unwrap();
            outs.iter().map(|o| tape.value(*o).data().to_vec()).collect::<Vec<_>>()
        };
        let orig_s = run_shared(&rows);
        let rev_s = run_shared(&reversed_rows);
        for t in 0..n {
            let mirrored = &orig_s[n - 1 - t];
            let swapped: Vec<f64> = mirrored[hidden..]
                .iter()
                .chain(&mirrored[..hidden])
                .copied()
                .collect();
            for (a, b) in rev_s[t].iter().zip(&swapped) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        // and with distinct parameters the plain outputs differ
        assert_ne!(orig, rev);
    }

    #[test]
    fn attention_single_timestep_weight_is_one() {
        let mut tape = Tape::<f64>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = random_encoder(&mut tape, 8, &mut rng);
        let x = tape.constant(Tensor::xavier_uniform(1, 8, &mut rng));
        let w = attention_weights(&mut tape, x, &params, 2, 0).unwrap();
        assert_eq!(tape.value(w).shape(), (1, 1));
        assert!((tape.value(w).item() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn attention_without_pe_is_permutation_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (n, d_model) = (6, 8);
        let x = Tensor::<f64>::xavier_uniform(n, d_model, &mut rng);
        let perm = [3usize, 0, 5, 1, 4, 2];

        let run = |input: &Tensor<f64>| {
            let mut tape = Tape::<f64>::new();
            let mut prng = ChaCha8Rng::seed_from_u64(21);
            let params = random_encoder(&mut tape, d_model, &mut prng);
            let xt = tape.constant(input.clone());
            let out = multihead_attention(&mut tape, xt, &params, 2).unwrap();
            tape.value(out).clone()
        };

        let base = run(&x);
        let mut permuted = Tensor::<f64>::zeros(n, d_model);
        for (i, &p) in perm.iter().enumerate() {
            for j in 0..d_model {
                permuted.set(i, j, x.get(p, j));
            }
        }
        let out_perm = run(&permuted);
        for (i, &p) in perm.iter().enumerate() {
            for j in 0..d_model {
                assert!((out_perm.get(i, j) - base.get(p, j)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn positional_encoding_matches_definition() {
        let pe = positional_encoding::<f64>(4, 6);
        assert_eq!(pe.get(0, 0), 0.0);
        assert_eq!(pe.get(0, 1), 1.0);
        let expected = (2.0f64 / 10000.0f64.powf(2.0 / 6.0)).sin();
        assert!((pe.get(2, 2) - expected).abs() < 1e-12);
    }

    #[test]
    fn encoder_layer_shape_and_determinism() {
        let run = || {
            let mut tape = Tape::<f64>::new();
            let mut rng = ChaCha8Rng::seed_from_u64(17);
            let params = random_encoder(&mut tape, 8, &mut rng);
            let x = tape.constant(Tensor::xavier_uniform(10, 8, &mut rng));
            let out = encoder_layer(&mut tape, x, 5, 2, &params, 2).unwrap();
            tape.value(out).clone()
        };
        let a = run();
        assert_eq!(a.shape(), (10, 8));
        assert_eq!(a, run());
    }
}
