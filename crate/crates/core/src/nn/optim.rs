use super::{NnError, ParameterStore, Real};
use std::collections::BTreeMap;

/// Adam state: first/second moment estimates per parameter plus the step
/// counter and hyperparameters.
#[derive(Debug, Clone)]
pub struct AdamState<E: Real> {
    moments: BTreeMap<String, (Vec<E>, Vec<E>)>,
    pub step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl<E: Real> AdamState<E> {
    /// Moments start at zero; beta1=0.9, beta2=0.999, eps=1e-8 defaults.
    pub fn new(params: &ParameterStore<E>, learning_rate: f64) -> Self {
        let moments = params
            .iter()
            .map(|(path, t)| (path.clone(), (vec![E::ZERO; t.numel()], vec![E::ZERO; t.numel()])))
            .collect();
        Self { moments, step: 0, learning_rate, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Scale all gradients so their global L2 norm is at most `max_norm`;
/// returns the factor applied (`min(1, max_norm/norm)`).
pub fn clip_global_norm<E: Real>(params: &mut ParameterStore<E>, max_norm: f64) -> f64 {
    let mut sq = 0.0f64;
    for (_, t) in params.iter() {
        if let Some(g) = &t.grad {
            for &v in g {
                let v = v.to_f64();
                sq += v * v;
            }
        }
    }
    let norm = sq.sqrt();
    if norm <= max_norm || norm == 0.0 {
        return 1.0;
    }
    let factor = max_norm / norm;
    let f = E::from_f64(factor);
    for (_, t) in params.iter_mut() {
        if let Some(g) = &mut t.grad {
            for v in g.iter_mut() {
                *v *= f;
            }
        }
    }
    factor
}

/// One Adam update with bias-corrected moments. Gradients must be populated
/// (zero-filled counts); non-finite gradients abort naming the parameter.
pub fn adam_step<E: Real>(params: &mut ParameterStore<E>, state: &mut AdamState<E>) -> Result<(), NnError> {
    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - state.beta1.powi(t);
    let bias2 = 1.0 - state.beta2.powi(t);
    let (b1, b2) = (E::from_f64(state.beta1), E::from_f64(state.beta2));
    let (ob1, ob2) = (E::from_f64(1.0 - state.beta1), E::from_f64(1.0 - state.beta2));
    let lr1 = E::from_f64(state.learning_rate / bias1);
    let inv_bias2 = E::from_f64(1.0 / bias2);
    let eps = E::from_f64(state.epsilon);
    for (path, tensor) in params.iter_mut() {
        let (m, v) = state
            .moments
            .get_mut(path.as_str())
            .ok_or_else(|| NnError::InvalidArgument {
                op: "adam_step",
                message: format!("no optimizer state for {path:?}"),
            })?;
        let (values, grad) = tensor.values_mut_and_grad();
        let grad = grad.ok_or_else(|| NnError::InvalidArgument {
            op: "adam_step",
            message: format!("gradient missing for {path:?}"),
        })?;
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(NnError::NonFinite { context: format!("gradient of {path}") });
        }
        for i in 0..values.len() {
            let g = grad[i];
            m[i] = b1 * m[i] + ob1 * g;
            v[i] = b2 * v[i] + ob2 * g * g;
            let vhat = v[i] * inv_bias2;
            values[i] -= lr1 * m[i] / (vhat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(paths: &[(&str, f64, f64)]) -> ParameterStore<f64> {
        let mut s = ParameterStore::new();
        for &(p, value, grad) in paths {
            s.insert(p, vec![value], &[1]).unwrap();
            s.get_mut(p).unwrap().grad = Some(vec![grad]);
        }
        s
    }

    #[test]
    fn clip_zero_grads_is_identity() {
        let mut s = scalar_store(&[("p", 1.0, 0.0)]);
        assert_eq!(clip_global_norm(&mut s, 1.0), 1.0);
        assert_eq!(s.get("p").unwrap().grad.as_deref().unwrap(), &[0.0]);
    }

    #[test]
    fn clip_scales_three_four_five() {
        // grad [3,4] has norm 5; at max_norm 1 the factor is 0.2.
        let mut s = ParameterStore::new();
        s.insert("p", vec![0.0, 0.0], &[2]).unwrap();
        s.get_mut("p").unwrap().grad = Some(vec![3.0, 4.0]);
        let f = clip_global_norm(&mut s, 1.0);
        assert!((f - 0.2).abs() < 1e-12);
        let g = s.get("p").unwrap().grad.clone().unwrap();
        assert!((g[0] - 0.6).abs() < 1e-12 && (g[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn clip_below_norm_unchanged() {
        let mut s = scalar_store(&[("p", 0.0, 0.5)]);
        assert_eq!(clip_global_norm(&mut s, 1.0), 1.0);
        assert_eq!(s.get("p").unwrap().grad.as_deref().unwrap(), &[0.5]);
    }

    #[test]
    fn adam_zero_grad_is_identity_for_any_t() {
        let mut s = scalar_store(&[("p", 1.25, 0.0)]);
        let mut state = AdamState::new(&s, 0.1);
        for _ in 0..5 {
            adam_step(&mut s, &mut state).unwrap();
            assert_eq!(s.get("p").unwrap().values(), &[1.25]);
        }
        assert_eq!(state.step, 5);
    }

    #[test]
    fn adam_single_step_hand_computed() {
        // p=1, g=1, lr=0.1: mhat=1, vhat=1 -> p = 1 - 0.1/(1 + 1e-8).
        let mut s = scalar_store(&[("p", 1.0, 1.0)]);
        let mut state = AdamState::new(&s, 0.1);
        adam_step(&mut s, &mut state).unwrap();
        let p = s.get("p").unwrap().values()[0];
        assert!((p - (1.0 - 0.1 / (1.0 + 1e-8))).abs() < 1e-12, "p={p}");
        assert_eq!(state.step, 1);
    }

    #[test]
    fn identical_params_receive_identical_updates() {
        let mut s = scalar_store(&[("a", 0.7, 0.3), ("b", 0.7, 0.3)]);
        let mut state = AdamState::new(&s, 0.01);
        for _ in 0..3 {
            s.get_mut("a").unwrap().grad = Some(vec![0.3]);
            s.get_mut("b").unwrap().grad = Some(vec![0.3]);
            adam_step(&mut s, &mut state).unwrap();
        }
        assert_eq!(s.get("a").unwrap().values(), s.get("b").unwrap().values());
    }

    #[test]
    fn non_finite_grad_names_parameter() {
        let mut s = scalar_store(&[("layer.w", 1.0, f64::NAN)]);
        let mut state = AdamState::new(&s, 0.1);
        let err = adam_step(&mut s, &mut state).unwrap_err();
        assert!(err.to_string().contains("layer.w"));
    }
}
