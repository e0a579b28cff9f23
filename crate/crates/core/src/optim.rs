//! AdaDelta optimizer.
//!
//! Per-parameter accumulators of squared gradients and squared updates,
//! keyed by parameter name so state tracks a named tensor store.

use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OptimError {
    #[error("adadelta {name}: non-finite gradient at index {index}, step rejected")]
    NonFiniteGradient { name: String, index: usize },
    #[error("adadelta {name}: gradient length {got} does not match parameter length {expected}")]
    LengthMismatch {
        name: String,
        expected: usize,
        got: usize,
    },
}

#[derive(Debug, Clone)]
pub struct AdaDeltaState {
    pub rho: f64,
    pub epsilon: f64,
    pub lr: f64,
    acc_grad_sq: BTreeMap<String, Vec<f64>>,
    acc_update_sq: BTreeMap<String, Vec<f64>>,
}

impl AdaDeltaState {
    pub fn new(rho: f64, epsilon: f64, lr: f64) -> Self {
        assert!(rho > 0.0 && rho < 1.0, "rho must be in (0,1)");
        assert!(epsilon > 0.0, "epsilon must be positive");
        AdaDeltaState {
            rho,
            epsilon,
            lr,
            acc_grad_sq: BTreeMap::new(),
            acc_update_sq: BTreeMap::new(),
        }
    }

    /// One AdaDelta update for a single named parameter:
    ///
    /// ```text
    /// acc_g = rho * acc_g + (1 - rho) * g^2
    /// delta = -lr * sqrt(acc_u + eps) / sqrt(acc_g + eps) * g
    /// acc_u = rho * acc_u + (1 - rho) * delta^2
    /// param += delta
    /// ```
    ///
    /// Rejects the step (leaving parameter and state untouched) on any
    /// non-finite gradient component.
    pub fn step(&mut self, name: &str, param: &mut [f64], grad: &[f64]) -> Result<(), OptimError> {
        if grad.len() != param.len() {
            return Err(OptimError::LengthMismatch {
                name: name.to_string(),
                expected: param.len(),
                got: grad.len(),
            });
        }
        if let Some(index) = grad.iter().position(|g| !g.is_finite()) {
            return Err(OptimError::NonFiniteGradient {
                name: name.to_string(),
                index,
            });
        }
        let acc_g = self
            .acc_grad_sq
            .entry(name.to_string())
            .or_insert_with(|| vec![0.0; param.len()]);
        let acc_u = self
            .acc_update_sq
            .entry(name.to_string())
            .or_insert_with(|| vec![0.0; param.len()]);
        debug_assert_eq!(acc_g.len(), param.len());
        for i in 0..param.len() {
            let g = grad[i];
            acc_g[i] = self.rho * acc_g[i] + (1.0 - self.rho) * g * g;
            let delta =
                -self.lr * ((acc_u[i] + self.epsilon).sqrt() / (acc_g[i] + self.epsilon).sqrt()) * g;
            acc_u[i] = self.rho * acc_u[i] + (1.0 - self.rho) * delta * delta;
            param[i] += delta;
        }
        Ok(())
    }

    pub fn acc_grad_sq(&self, name: &str) -> Option<&[f64]> {
        self.acc_grad_sq.get(name).map(|v| v.as_slice())
    }

    pub fn acc_update_sq(&self, name: &str) -> Option<&[f64]> {
        self.acc_update_sq.get(name).map(|v| v.as_slice())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Scalar reference AdaDelta, written independently of `step`.
    struct ScalarOracle {
        rho: f64,
        eps: f64,
        lr: f64,
        acc_g: f64,
        acc_u: f64,
    }

    impl ScalarOracle {
        fn update(&mut self, x: f64, g: f64) -> f64 {
            self.acc_g = self.rho * self.acc_g + (1.0 - self.rho) * g * g;
            let delta = -self.lr * (self.acc_u + self.eps).sqrt() / (self.acc_g + self.eps).sqrt() * g;
            self.acc_u = self.rho * self.acc_u + (1.0 - self.rho) * delta * delta;
            x + delta
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut state = AdaDeltaState::new(0.95, 1e-6, 2.0);
        let mut p = vec![1.0, -2.0, 3.0];
        state.step("w", &mut p, &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn first_step_matches_closed_form() {
        // g=1, rho=0.95, eps=1e-6, lr=1:
        // delta = -sqrt(eps) / sqrt(0.05 + eps)
        let mut state = AdaDeltaState::new(0.95, 1e-6, 1.0);
        let mut p = vec![0.0];
        state.step("w", &mut p, &[1.0]).unwrap();
        let expected = -(1e-6f64).sqrt() / (0.05 + 1e-6f64).sqrt();
        assert!((p[0] - expected).abs() < 1e-15, "{} vs {expected}", p[0]);
    }

    #[test]
    fn matches_scalar_oracle_over_many_steps() {
        let mut state = AdaDeltaState::new(0.9, 1e-5, 2.0);
        let mut oracle = ScalarOracle {
            rho: 0.9,
            eps: 1e-5,
            lr: 2.0,
            acc_g: 0.0,
            acc_u: 0.0,
        };
        let mut p = vec![0.7];
        let mut ox = 0.7;
        for step in 0..50 {
            let g = (step as f64 * 0.37).sin();
            state.step("w", &mut p, &[g]).unwrap();
            ox = oracle.update(ox, g);
            assert!((p[0] - ox).abs() < 1e-14);
        }
    }

    #[test]
    fn constant_gradient_updates_grow() {
        let mut state = AdaDeltaState::new(0.95, 1e-6, 1.0);
        let mut p = vec![0.0];
        state.step("w", &mut p, &[1.0]).unwrap();
        let d1 = p[0].abs();
        let before = p[0];
        state.step("w", &mut p, &[1.0]).unwrap();
        let d2 = (p[0] - before).abs();
        assert!(d2 >= d1, "second step {d2} should not shrink below {d1}");
    }

    #[test]
    fn lr_zero_freezes_parameters() {
        let mut state = AdaDeltaState::new(0.95, 1e-6, 0.0);
        let mut p = vec![0.5, -0.5];
        for _ in 0..5 {
            state.step("w", &mut p, &[1.0, -3.0]).unwrap();
        }
        assert_eq!(p, vec![0.5, -0.5]);
    }

    #[test]
    fn non_finite_gradient_rejected_without_touching_state() {
        let mut state = AdaDeltaState::new(0.95, 1e-6, 1.0);
        let mut p = vec![1.0];
        let err = state.step("w", &mut p, &[f64::NAN]).unwrap_err();
        assert!(matches!(err, OptimError::NonFiniteGradient { index: 0, .. }));
        assert_eq!(p, vec![1.0]);
        assert!(state.acc_grad_sq("w").is_none());
    }

    #[test]
    fn accumulators_stay_nonnegative() {
        let mut state = AdaDeltaState::new(0.5, 1e-8, 1.5);
        let mut p = vec![0.0, 1.0];
        for step in 0..20 {
            let g = [(step as f64).cos() * 3.0, -(step as f64).sqrt()];
            state.step("w", &mut p, &g).unwrap();
        }
        assert!(state.acc_grad_sq("w").unwrap().iter().all(|v| *v >= 0.0));
        assert!(state.acc_update_sq("w").unwrap().iter().all(|v| *v >= 0.0));
    }
}
