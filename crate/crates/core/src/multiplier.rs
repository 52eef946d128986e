//! Varying loss weight: each module minimizes `lambda * L + W`, where `W` is
//! the unweighted transport cost, and `lambda` grows by `h` times the current
//! loss every `s` optimizer steps of that module.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Graph, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiplierConfig {
    /// Initial weight, shared by all modules.
    pub lambda_init: f64,
    /// Increase factor.
    pub h: f64,
    /// Steps between increases.
    pub s: usize,
    /// Evaluate the fresh loss on the batch just used instead of the next one.
    #[serde(default)]
    pub same_batch: bool,
}

impl MultiplierConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_init >= 0.0 && self.lambda_init.is_finite()) {
            return Err(Error::Config(format!("lambda_init must be >= 0, got {}", self.lambda_init)));
        }
        // h = 0 is accepted: it pins lambda and is how fixed-weight runs are reproduced
        if !(self.h >= 0.0 && self.h.is_finite()) {
            return Err(Error::Config(format!("h must be >= 0, got {}", self.h)));
        }
        if self.s == 0 {
            return Err(Error::Config("s must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-module weight and step counter (the counter starts at 1).
#[derive(Clone, Debug, PartialEq)]
pub struct MultiplierState {
    lambda: Vec<f64>,
    iter: Vec<usize>,
}

impl MultiplierState {
    pub fn new(config: &MultiplierConfig, modules: usize) -> Self {
        MultiplierState {
            lambda: vec![config.lambda_init; modules],
            iter: vec![1; modules],
        }
    }

    /// Current weight of module `k` (1-based).
    pub fn lambda(&self, k: usize) -> f64 {
        self.lambda[k - 1]
    }

    pub fn iteration(&self, k: usize) -> usize {
        self.iter[k - 1]
    }

    /// Whether the next update of module `k` will consume a fresh loss.
    pub fn due(&self, k: usize, config: &MultiplierConfig) -> bool {
        self.iter[k - 1].is_multiple_of(config.s)
    }

    /// Advances module `k` by one step. `fresh_loss` is only evaluated when
    /// the period gate is open.
    pub fn advance(&mut self, k: usize, config: &MultiplierConfig, fresh_loss: impl FnOnce() -> Result<f64>) -> Result<()> {
        if self.due(k, config) {
            let loss = fresh_loss()?;
            if loss < 0.0 || loss.is_nan() {
                return Err(Error::Contract(format!("multiplier update got loss {loss}; losses are non-negative")));
            }
            self.lambda[k - 1] += config.h * loss;
        }
        self.iter[k - 1] += 1;
        Ok(())
    }
}

/// `lambda * loss + penalty_raw`.
pub fn multiplier_objective(g: &mut Graph, loss: Var, penalty_raw: Var, lambda: f64) -> Result<Var> {
    let weighted = g.scale(loss, lambda)?;
    g.add(weighted, penalty_raw)
}

/// One step of the weight recursion for module `k`.
pub fn multiplier_update(state: &mut MultiplierState, config: &MultiplierConfig, k: usize, fresh_loss: f64) -> Result<()> {
    state.advance(k, config, || Ok(fresh_loss))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{GradMode, Tensor};
    use proptest::prelude::*;

    fn cfg(lambda_init: f64, h: f64, s: usize) -> MultiplierConfig {
        MultiplierConfig {
            lambda_init,
            h,
            s,
            same_batch: false,
        }
    }

    fn objective_value(lambda: f64, l: f64, w: f64) -> f64 {
        let mut g = Graph::new();
        let lv = g.constant(Tensor::scalar(l));
        let wv = g.constant(Tensor::scalar(w));
        let o = multiplier_objective(&mut g, lv, wv, lambda).unwrap();
        g.value(o).item()
    }

    #[test]
    fn zero_weight_leaves_transport_only() {
        assert_eq!(objective_value(0.0, 0.9, 0.2), 0.2);
    }

    #[test]
    fn arithmetic() {
        assert!((objective_value(1.0, 0.5, 0.2) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn gradients_scale_with_lambda() {
        // grad of (lambda L + W) equals lambda * grad of (L + W / lambda)
        let lambda = 2.0 * 0.35;
        let x = Tensor::vector(vec![0.3, -1.2]);
        let grads = |a: f64, b: f64| {
            let mut g = Graph::new();
            let v = g.variable(x.clone());
            let l = g.sum_of_squares(v).unwrap();
            let sh = g.scale(v, 3.0).unwrap();
            let w = g.mean(sh).unwrap();
            let l = g.scale(l, a).unwrap();
            let w = g.scale(w, b).unwrap();
            let o = g.add(l, w).unwrap();
            g.backward(o, GradMode::Zero).unwrap();
            g.grad(v).unwrap().clone()
        };
        let lhs = grads(lambda, 1.0);
        let rhs = grads(1.0, 1.0 / lambda);
        for (a, b) in lhs.data().iter().zip(rhs.data()) {
            assert!((a - lambda * b).abs() < 1e-14);
        }
    }

    #[test]
    fn period_gate() {
        let c = cfg(1.0, 1.0, 50);
        let mut st = MultiplierState::new(&c, 1);
        for _ in 1..50 {
            multiplier_update(&mut st, &c, 1, 0.7).unwrap();
        }
        assert_eq!(st.iteration(1), 50);
        assert_eq!(st.lambda(1), 1.0);
        multiplier_update(&mut st, &c, 1, 0.7).unwrap();
        assert!((st.lambda(1) - 1.7).abs() < 1e-15);
        // i = 51: unchanged
        multiplier_update(&mut st, &c, 1, 0.7).unwrap();
        assert!((st.lambda(1) - 1.7).abs() < 1e-15);
    }

    #[test]
    fn zero_loss_keeps_lambda() {
        let c = cfg(1.0, 1.0, 1);
        let mut st = MultiplierState::new(&c, 2);
        multiplier_update(&mut st, &c, 2, 0.0).unwrap();
        assert_eq!(st.lambda(2), 1.0);
    }

    #[test]
    fn negative_loss_is_contract_error() {
        let c = cfg(1.0, 1.0, 1);
        let mut st = MultiplierState::new(&c, 1);
        assert!(matches!(multiplier_update(&mut st, &c, 1, -0.1), Err(Error::Contract(_))));
    }

    #[test]
    fn fresh_loss_only_evaluated_when_due() {
        let c = cfg(0.5, 1.0, 3);
        let mut st = MultiplierState::new(&c, 1);
        let mut calls = 0;
        for _ in 0..9 {
            st.advance(1, &c, || {
                calls += 1;
                Ok(0.1)
            })
            .unwrap();
        }
        assert_eq!(calls, 3);
    }

    #[test]
    fn modules_are_independent() {
        let c = cfg(1.0, 2.0, 1);
        let mut st = MultiplierState::new(&c, 3);
        multiplier_update(&mut st, &c, 2, 0.25).unwrap();
        assert_eq!((st.lambda(1), st.lambda(2), st.lambda(3)), (1.0, 1.5, 1.0));
    }

    #[test]
    fn validation() {
        assert!(cfg(1.0, 1.0, 50).validate().is_ok());
        assert!(cfg(-1.0, 1.0, 50).validate().is_err());
        assert!(cfg(1.0, 1.0, 0).validate().is_err());
    }

    proptest! {
        #[test]
        fn lambda_never_decreases(losses in proptest::collection::vec(0.0f64..5.0, 1..200), s in 1usize..10, h in 0.0f64..3.0) {
            let c = cfg(1.0, h, s);
            let mut st = MultiplierState::new(&c, 1);
            let mut prev = st.lambda(1);
            for l in losses {
                multiplier_update(&mut st, &c, 1, l).unwrap();
                prop_assert!(st.lambda(1) >= prev);
                prop_assert!(st.lambda(1).is_finite());
                prev = st.lambda(1);
            }
        }
    }
}
