//! Adam with bias correction.

use super::{NumericError, ParamSet, Scalar, Tensor};

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Per-parameter first/second moment estimates plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
    step: u64,
    pub config: AdamConfig,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &ParamSet<T>, config: AdamConfig) -> AdamState<T> {
        let m = (0..params.len())
            .map(|i| {
                let (r, c) = params.tensor(i).shape();
                Tensor::zeros(r, c)
            })
            .collect::<Vec<_>>();
        AdamState {
            v: m.clone(),
            m,
            step: 0,
            config,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One Adam update. `grads[i]` pairs with parameter `i`; `None` means no
/// gradient flowed this step and the parameter is left untouched.
pub fn adam_step<T: Scalar>(
    params: &mut ParamSet<T>,
    grads: &[Option<Tensor<T>>],
    state: &mut AdamState<T>,
) -> Result<(), NumericError> {
    assert_eq!(grads.len(), params.len(), "gradient/parameter count mismatch");
    for (i, grad) in grads.iter().enumerate() {
        if let Some(g) = grad {
            if !g.is_finite() {
                return Err(NumericError::NonFiniteGrad {
                    param: params.name(i).to_string(),
                });
            }
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let c = state.config;
    let b1 = T::from_f64(c.beta1);
    let b2 = T::from_f64(c.beta2);
    let one = T::one();
    let bias1 = T::from_f64(1.0 - c.beta1.powi(t));
    let bias2 = T::from_f64(1.0 - c.beta2.powi(t));
    let lr = T::from_f64(c.lr);
    let eps = T::from_f64(c.eps);

    for (i, grad) in grads.iter().enumerate() {
        let Some(g) = grad else { continue };
        let m = &mut state.m[i];
        let v = &mut state.v[i];
        let p = params.tensor_mut(i);
        debug_assert_eq!(p.shape(), g.shape());
        for (((pv, gv), mv), vv) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *mv = b1 * *mv + (one - b1) * *gv;
            *vv = b2 * *vv + (one - b2) * *gv * *gv;
            let m_hat = *mv / bias1;
            let v_hat = *vv / bias2;
            *pv = *pv - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut params = ParamSet::<f64>::new();
        params.push("w", Tensor::from_flat(1, 3, vec![1.0, -2.0, 3.0]));
        let before = params.tensor(0).clone();
        let mut state = AdamState::new(&params, AdamConfig::default());
        let grads = vec![Some(Tensor::zeros(1, 3))];
        adam_step(&mut params, &grads, &mut state).unwrap();
        assert_eq!(*params.tensor(0), before);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let lr = 1e-3;
        for g in [0.7, -123.0, 1e-4] {
            let mut params = ParamSet::<f64>::new();
            params.push("w", Tensor::scalar(5.0));
            let mut state = AdamState::new(
                &params,
                AdamConfig {
                    lr,
                    ..AdamConfig::default()
                },
            );
            let grads = vec![Some(Tensor::scalar(g))];
            adam_step(&mut params, &grads, &mut state).unwrap();
            let moved = params.tensor(0).item() - 5.0;
            assert!(
                (moved + lr * g.signum()).abs() < lr * 1e-3,
                "g={g}: moved {moved}"
            );
        }
    }

    #[test]
    fn nan_gradient_names_the_parameter() {
        let mut params = ParamSet::<f64>::new();
        params.push("meta.w2", Tensor::scalar(1.0));
        let mut state = AdamState::new(&params, AdamConfig::default());
        let grads = vec![Some(Tensor::scalar(f64::NAN))];
        let err = adam_step(&mut params, &grads, &mut state).unwrap_err();
        assert!(err.to_string().contains("meta.w2"));
    }

    #[test]
    fn missing_gradient_skips_parameter() {
        let mut params = ParamSet::<f64>::new();
        params.push("w", Tensor::scalar(2.0));
        params.push("u", Tensor::scalar(3.0));
        let mut state = AdamState::new(&params, AdamConfig::default());
        let grads = vec![None, Some(Tensor::scalar(1.0))];
        adam_step(&mut params, &grads, &mut state).unwrap();
        assert_eq!(params.tensor(0).item(), 2.0);
        assert_ne!(params.tensor(1).item(), 3.0);
    }
}
