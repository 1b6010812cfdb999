//! Central finite-difference gradient checking at f64.

use super::tape::{Tape, Tid};
use super::{NumericError, ParamSet, Tensor};

/// Worst element found by [`grad_check`].
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Default step for central differences.
pub const DEFAULT_STEP: f64 = 1e-5;

/// Compare tape gradients of a scalar-valued function against central
/// finite differences, element by element.
///
/// `f` receives a fresh tape and the leaf ids for `params` (in order)
/// and must return the scalar output node. Relative error uses a guarded
/// denominator `max(|analytic|, |numeric|, 1e-4)` so that finite-
/// difference noise on near-zero gradients does not dominate.
pub fn grad_check<F>(
    params: &ParamSet<f64>,
    h: f64,
    mut f: F,
) -> Result<GradCheckReport, NumericError>
where
    F: FnMut(&mut Tape<f64>, &[Tid]) -> Result<Tid, NumericError>,
{
    // analytic pass
    let mut tape = Tape::new();
    let ids: Vec<Tid> = (0..params.len())
        .map(|i| tape.leaf(params.tensor(i).clone()))
        .collect();
    let out = f(&mut tape, &ids)?;
    if tape.value(out).shape() != (1, 1) {
        return Err(NumericError::InvalidArgument {
            op: "grad_check",
            detail: format!("f must be scalar-valued, got {:?}", tape.value(out).shape()),
        });
    }
    tape.backward(out)?;
    let analytic: Vec<Tensor<f64>> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| {
            tape.grad(*id).cloned().unwrap_or_else(|| {
                let (r, c) = params.tensor(i).shape();
                Tensor::zeros(r, c)
            })
        })
        .collect();

    let eval = |p: &ParamSet<f64>, f: &mut F| -> Result<f64, NumericError> {
        let mut tape = Tape::new();
        let ids: Vec<Tid> = (0..p.len()).map(|i| tape.leaf(p.tensor(i).clone())).collect();
        let out = f(&mut tape, &ids)?;
        Ok(tape.value(out).item())
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
    };

    let mut perturbed = params.clone();
    for i in 0..params.len() {
        for k in 0..params.tensor(i).len() {
            let orig = params.tensor(i).data()[k];
            perturbed.tensor_mut(i).data_mut()[k] = orig + h;
            let up = eval(&perturbed, &mut f)?;
            perturbed.tensor_mut(i).data_mut()[k] = orig - h;
            let down = eval(&perturbed, &mut f)?;
            perturbed.tensor_mut(i).data_mut()[k] = orig;

            let numeric = (up - down) / (2.0 * h);
            let a = analytic[i].data()[k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-4);
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst_param = params.name(i).to_string();
                report.worst_index = k;
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn quadratic_bowl_gradient_is_exact() {
        // f(w) = mean(w * w); df/dw = 2w / n
        let mut params = ParamSet::<f64>::new();
        params.push("w", Tensor::from_flat(1, 4, vec![1.0, -2.0, 0.5, 3.0]));
        let report = grad_check(&params, DEFAULT_STEP, |tape, ids| {
            let sq = tape.mul(ids[0], ids[0])?;
            Ok(tape.mean_all(sq))
        })
        .unwrap();
        assert!(report.max_rel_error <= 1e-8, "{report:?}");
    }

    #[test]
    fn every_primitive_passes_fd_check() {
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut params = ParamSet::<f64>::new();
            params.push("a", Tensor::xavier_uniform(3, 4, &mut rng));
            params.push("b", Tensor::xavier_uniform(4, 3, &mut rng));
            params.push("c", Tensor::xavier_uniform(3, 3, &mut rng));
            params.push("row", Tensor::xavier_uniform(1, 3, &mut rng));

            let report = grad_check(&params, DEFAULT_STEP, |tape, ids| {
                let (a, b, c, row) = (ids[0], ids[1], ids[2], ids[3]);
                let mm = tape.matmul(a, b)?; // 3x3
                let nt = tape.matmul_nt(mm, c)?; // 3x3
                let sum = tape.add(nt, c)?;
                let dif = tape.sub(sum, mm)?;
                let had = tape.mul(dif, mm)?;
                let plus = tape.add_row(had, row)?;
                let times = tape.mul_row(plus, row)?;
                let scaled = tape.scale(times, 0.7);
                let flipped = tape.rsub_scalar(scaled, 1.0);
                let sg = tape.sigmoid(flipped);
                let th = tape.tanh(sg);
                let re = tape.relu(th);
                let sm = tape.softmax_rows(re);
                let ln = tape.layer_norm_rows(sm);
                let cat = tape.concat(&[ln, sm], 1)?; // 3x6
                let rcat = tape.concat(&[cat, cat], 0)?; // 6x6
                let gat = tape.gather_rows(rcat, &[5, 0, 3, 3, 1])?;
                let sc = tape.slice_cols(gat, 1, 4)?;
                let sr = tape.slice_rows(sc, 1, 3)?;
                let rs = tape.reshape(sr, 4, 3)?;
                Ok(tape.mean_all(rs))
            })
            .unwrap();
            assert!(report.max_rel_error <= 1e-4, "seed {seed}: {report:?}");
        }
    }

    #[test]
    fn bce_softmax_composition_passes_fd_check() {
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let mut params = ParamSet::<f64>::new();
            params.push("logits", Tensor::xavier_uniform(5, 7, &mut rng));
            let mut targets = Tensor::<f64>::zeros(5, 7);
            for i in 0..5 {
                let k = (seed as usize + i) % 7;
                targets.set(i, k, 1.0);
            }
            let report = grad_check(&params, DEFAULT_STEP, |tape, ids| {
                let probs = tape.softmax_rows(ids[0]);
                tape.bce_mean(probs, &targets)
            })
            .unwrap();
            assert!(report.max_rel_error <= 1e-4, "seed {seed}: {report:?}");
        }
    }
}
