use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

/// A trainable tensor with its gradient accumulator.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Option<Tensor>,
}

impl Param {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        Param {
            name: name.into(),
            value,
            grad: None,
        }
    }

    pub fn numel(&self) -> usize {
        self.value.numel()
    }

    /// Stores `grad`, or adds it to the stored gradient when `accumulate` is set.
    pub fn set_grad(&mut self, grad: &Tensor, accumulate: bool) {
        match (&mut self.grad, accumulate) {
            (Some(g), true) => {
                for (a, b) in g.data_mut().iter_mut().zip(grad.data()) {
                    *a += b;
                }
            }
            (slot, _) => *slot = Some(grad.clone()),
        }
    }
}

/// Learning rate as a function of the optimizer step index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
pub enum LrSchedule {
    Constant { lr: f64 },
    /// `lr * factor^(number of milestones <= step)`.
    StepDecay {
        lr: f64,
        factor: f64,
        milestones: Vec<usize>,
    },
}

impl LrSchedule {
    pub fn at(&self, step: usize) -> f64 {
        match self {
            LrSchedule::Constant { lr } => *lr,
            LrSchedule::StepDecay {
                lr,
                factor,
                milestones,
            } => {
                let passed = milestones.iter().filter(|&&m| m <= step).count();
                lr * factor.powi(passed as i32)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            LrSchedule::Constant { lr } => *lr > 0.0,
            LrSchedule::StepDecay { lr, factor, .. } => *lr > 0.0 && *factor > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("learning rate must be positive: {self:?}")))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgdConfig {
    pub lr: LrSchedule,
    #[serde(default)]
    pub momentum: f64,
    #[serde(default)]
    pub weight_decay: f64,
}

impl SgdConfig {
    pub fn constant(lr: f64, momentum: f64, weight_decay: f64) -> Self {
        SgdConfig {
            lr: LrSchedule::Constant { lr },
            momentum,
            weight_decay,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.lr.validate()?;
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.weight_decay < 0.0 || !self.weight_decay.is_finite() {
            return Err(Error::Config(format!(
                "weight decay must be >= 0, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

/// Optimizer state: configuration plus one velocity buffer per parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct SgdState {
    pub config: SgdConfig,
    velocity: Vec<Tensor>,
}

impl SgdState {
    pub fn new<'a>(config: SgdConfig, params: impl IntoIterator<Item = &'a Param>) -> Self {
        let velocity = params
            .into_iter()
            .map(|p| Tensor::zeros(p.value.shape()))
            .collect();
        SgdState { config, velocity }
    }

    pub fn velocity(&self) -> &[Tensor] {
        &self.velocity
    }
}

/// One momentum-SGD step:
/// `v <- momentum * v + (grad + weight_decay * param)`, `param <- param - lr(step) * v`.
/// Gradients are cleared afterwards.
pub fn sgd_step(params: &mut [&mut Param], state: &mut SgdState, step_index: usize) -> Result<()> {
    if params.len() != state.velocity.len() {
        return Err(Error::Contract(format!(
            "optimizer tracks {} parameters, got {}",
            state.velocity.len(),
            params.len()
        )));
    }
    if let Some(p) = params.iter().find(|p| p.grad.is_none()) {
        return Err(Error::Contract(format!("parameter {} has no gradient", p.name)));
    }
    let lr = state.config.lr.at(step_index);
    let (mu, wd) = (state.config.momentum, state.config.weight_decay);
    for (p, v) in params.iter_mut().zip(state.velocity.iter_mut()) {
        if v.shape() != p.value.shape() {
            return Err(Error::Contract(format!(
                "velocity shape {:?} does not match parameter {} {:?}",
                v.shape(),
                p.name,
                p.value.shape()
            )));
        }
        let grad = p.grad.take().unwrap();
        for ((x, vel), g) in p
            .value
            .data_mut()
            .iter_mut()
            .zip(v.data_mut().iter_mut())
            .zip(grad.data())
        {
            *vel = mu * *vel + (g + wd * *x);
            *x -= lr * *vel;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_param(v: f64) -> Param {
        Param::new("p", Tensor::vector(vec![v]))
    }

    #[test]
    fn plain_sgd_step() {
        let mut p = scalar_param(1.0);
        p.grad = Some(Tensor::vector(vec![2.0]));
        let mut st = SgdState::new(SgdConfig::constant(0.1, 0.0, 0.0), [&p]);
        sgd_step(&mut [&mut p], &mut st, 0).unwrap();
        assert!((p.value.item() - 0.8).abs() < 1e-15);
        assert!(p.grad.is_none());
    }

    #[test]
    fn zero_grad_is_fixed_point() {
        let mut p = scalar_param(0.37);
        p.grad = Some(Tensor::vector(vec![0.0]));
        let mut st = SgdState::new(SgdConfig::constant(0.5, 0.9, 0.0), [&p]);
        sgd_step(&mut [&mut p], &mut st, 0).unwrap();
        assert_eq!(p.value.item(), 0.37);
    }

    #[test]
    fn momentum_unrolls_by_hand() {
        let mut p = scalar_param(0.0);
        let mut st = SgdState::new(SgdConfig::constant(1.0, 0.9, 0.0), [&p]);
        for step in 0..2 {
            p.grad = Some(Tensor::vector(vec![1.0]));
            sgd_step(&mut [&mut p], &mut st, step).unwrap();
        }
        assert!((p.value.item() + 2.9).abs() < 1e-12);
    }

    #[test]
    fn missing_grad_is_contract_error() {
        let mut p = scalar_param(1.0);
        let mut st = SgdState::new(SgdConfig::constant(0.1, 0.0, 0.0), [&p]);
        assert!(matches!(
            sgd_step(&mut [&mut p], &mut st, 0),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn step_decay_schedule() {
        let s = LrSchedule::StepDecay {
            lr: 0.1,
            factor: 0.2,
            milestones: vec![120, 160, 200],
        };
        assert_eq!(s.at(0), 0.1);
        assert!((s.at(120) - 0.02).abs() < 1e-15);
        assert!((s.at(250) - 0.1 * 0.008).abs() < 1e-15);
    }

    #[test]
    fn momentum_out_of_range_rejected() {
        assert!(SgdConfig::constant(0.1, 1.0, 0.0).validate().is_err());
        assert!(SgdConfig::constant(0.1, 0.9, -1.0).validate().is_err());
        assert!(SgdConfig::constant(0.007, 0.9, 1e-4).validate().is_ok());
    }
}
