//! One minimizing-movement step `argmin_nu Z(nu) + W_2^2(nu, rho) / (2 tau)`
//! computed on particles.
//!
//! Particles `y_i` start at `x_i`. We alternate Armijo descent on the
//! positions (classifier fixed) with a warm-started refit of the linear
//! classifier (positions fixed). Both halves decrease
//! `J(y, F) = CE(F; y) + |y - x|^2 / (2 tau n)`, and the reported objective
//! uses the better of two refits for `Z` and the exact `W_2^2`, each of which
//! can only lower `J`, so the step never exceeds `Z(rho)`.

use serde::{Deserialize, Serialize};

use super::linear::{fit_linear, minimize, separability, FitOptions, LinearClassifier};
use super::{exact_w2, DiscreteDistribution};
use crate::error::{Error, Result};
use crate::tensor::{kernels, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MmsConfig {
    pub tau: f64,
    /// Cap on gradient steps per classifier fit.
    #[serde(default = "default_inner")]
    pub inner_iters: usize,
    /// Alternation rounds.
    #[serde(default = "default_outer")]
    pub outer_iters: usize,
    /// Position steps per round.
    #[serde(default = "default_position_steps")]
    pub position_steps: usize,
    /// Gradient-norm tolerance for both halves.
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Frobenius bound on the classifier weights, making the classifier
    /// family compact; `None` leaves it unbounded.
    #[serde(default = "default_radius")]
    pub classifier_radius: Option<f64>,
}

fn default_inner() -> usize {
    300
}
fn default_outer() -> usize {
    40
}
fn default_position_steps() -> usize {
    25
}
fn default_tol() -> f64 {
    1e-7
}
fn default_radius() -> Option<f64> {
    Some(DEFAULT_CLASSIFIER_RADIUS)
}

pub const DEFAULT_CLASSIFIER_RADIUS: f64 = 2.0;

impl MmsConfig {
    pub fn new(tau: f64) -> Self {
        MmsConfig {
            tau,
            inner_iters: default_inner(),
            outer_iters: default_outer(),
            position_steps: default_position_steps(),
            tol: default_tol(),
            classifier_radius: default_radius(),
        }
    }

    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            max_iters: self.inner_iters,
            tol: self.tol,
            radius: self.classifier_radius,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Config(format!("tau must be positive and finite, got {}", self.tau)));
        }
        if let Some(r) = self.classifier_radius {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::Config(format!("classifier radius must be positive, got {r}")));
            }
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::Config(format!("tolerance must be positive, got {}", self.tol)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct MmsStepResult {
    pub output: DiscreteDistribution,
    /// `Z(output) + W_2^2(output, input) / (2 tau)`.
    pub objective: f64,
    /// `Z` of the input, by the same solver (the value at `nu = rho`).
    pub z_input: f64,
    pub z_output: f64,
    /// Exact `W_2^2(output, input)`.
    pub transport: f64,
    /// Classifier attaining `z_output`.
    pub classifier: LinearClassifier,
}

impl MmsStepResult {
    pub fn mean_displacement(&self, input: &DiscreteDistribution) -> f64 {
        kernels::mean_sq_distance(&self.output.points, &input.points).sqrt()
    }
}

fn proximal(y: &[f64], x: &[f64], n: usize, tau: f64) -> (f64, Vec<f64>) {
    let d = y.len() / n;
    let mut total = 0.0;
    for i in 0..n {
        total += super::assignment::sq_dist(&y[i * d..(i + 1) * d], &x[i * d..(i + 1) * d]);
    }
    let c = 1.0 / (2.0 * tau * n as f64);
    let grad = y.iter().zip(x).map(|(a, b)| 2.0 * c * (a - b)).collect();
    (c * total, grad)
}

/// One proximal step from `rho`. `warm` seeds the classifier used to
/// evaluate `Z(rho)`; chains pass the previous step's classifier.
pub fn mms_oracle(rho: &DiscreteDistribution, cfg: &MmsConfig, warm: Option<&LinearClassifier>) -> Result<MmsStepResult> {
    cfg.validate()?;
    let labels = rho.require_labels("mms_oracle")?.to_vec();
    let classes = rho.classes().unwrap().max(2);
    if let Some(w) = warm {
        if w.dim() != rho.dim() || w.classes() != classes {
            return Err(Error::dim("mms_oracle", format!("warm classifier is {}x{}", w.dim(), w.classes())));
        }
    }
    let (n, d) = (rho.len(), rho.dim());
    let x = rho.points.data().to_vec();
    let (mut f, z_input) = separability(&rho.points, &labels, classes, warm, cfg.fit_options());

    let mut y = x.clone();
    for _ in 0..cfg.outer_iters {
        let fixed = f.clone();
        let (next, _) = minimize(
            y.clone(),
            |v| {
                let yt = Tensor::matrix(n, d, v.to_vec()).unwrap();
                let (ce, _, _, dy) = fixed.loss_and_grads(&yt, &labels);
                let (p, mut g) = proximal(v, &x, n, cfg.tau);
                for (a, b) in g.iter_mut().zip(dy.data()) {
                    *a += b;
                }
                (ce + p, g)
            },
            cfg.position_steps,
            cfg.tol,
        );
        let moved = next != y;
        y = next;
        let yt = Tensor::matrix(n, d, y.clone())?;
        let (refit, _) = fit_linear(&yt, &labels, &f, cfg.fit_options());
        let refit_changed = refit != f;
        f = refit;
        if !moved && !refit_changed {
            break;
        }
    }

    let output = rho.with_points(Tensor::matrix(n, d, y)?)?;
    let (classifier, z_output) = separability(&output.points, &labels, classes, Some(&f), cfg.fit_options());
    let (transport, _) = exact_w2(&output, rho)?;
    Ok(MmsStepResult {
        objective: z_output + transport / (2.0 * cfg.tau),
        output,
        z_input,
        z_output,
        transport,
        classifier,
    })
}

/// `steps` chained proximal steps, each warm-started from the previous
/// classifier so that step `k + 1`'s `z_input` is step `k`'s `z_output`.
pub fn mms_chain(rho: &DiscreteDistribution, cfg: &MmsConfig, steps: usize) -> Result<Vec<MmsStepResult>> {
    let mut out: Vec<MmsStepResult> = Vec::with_capacity(steps);
    for _ in 0..steps {
        let step = match out.last() {
            None => mms_oracle(rho, cfg, None)?,
            Some(prev) => mms_oracle(&prev.output, cfg, Some(&prev.classifier))?,
        };
        out.push(step);
    }
    Ok(out)
}
