//! Desk check that a single regularized residual module, trained to
//! optimality, pushes the data to (nearly) the same cloud as one
//! minimizing-movement step at the same `tau`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::linear::{minimize_projected, project_ball, separability};
use super::mms::{mms_oracle, MmsConfig};
use super::{w2, DiscreteDistribution};
use crate::error::{Error, Result};
use crate::greedy::{transport_penalty, PenaltyForm};
use crate::net::{AuxiliaryClassifier, Binder, Linear, ModuleTrace, ResidualBlock};
use crate::tensor::{GradMode, Graph, Param, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Prop1Config {
    pub tau: f64,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    /// Full-batch descent steps on the module objective.
    #[serde(default = "default_train_iters")]
    pub train_iters: usize,
    #[serde(default = "default_gain")]
    pub init_gain: f64,
    #[serde(default)]
    pub seed: u64,
    /// Oracle settings; its `tau` must equal `tau`. Defaults to
    /// `MmsConfig::new(tau)`.
    #[serde(default)]
    pub oracle: Option<MmsConfig>,
}

fn default_hidden() -> usize {
    32
}
fn default_train_iters() -> usize {
    3000
}
fn default_gain() -> f64 {
    0.1
}

impl Prop1Config {
    pub fn new(tau: f64, seed: u64) -> Self {
        Prop1Config {
            tau,
            hidden: default_hidden(),
            train_iters: default_train_iters(),
            init_gain: default_gain(),
            seed,
            oracle: None,
        }
    }

    fn oracle_config(&self) -> Result<MmsConfig> {
        match &self.oracle {
            Some(o) if o.tau != self.tau => Err(Error::Config(format!(
                "module tau {} and oracle tau {} must match",
                self.tau, o.tau
            ))),
            Some(o) => Ok(o.clone()),
            None => Ok(MmsConfig::new(self.tau)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prop1Report {
    pub tau: f64,
    pub n: usize,
    pub d: usize,
    pub seed: u64,
    pub w2_to_oracle: f64,
    pub w2_input_to_oracle: f64,
    /// `None` when the oracle barely moved (denominator `<= 1e-6`).
    pub ratio: Option<f64>,
    pub module_objective: f64,
    pub oracle_objective: f64,
}

impl Prop1Report {
    pub fn degenerate(&self) -> bool {
        self.ratio.is_none()
    }

    pub fn below(&self, threshold: f64) -> bool {
        self.ratio.is_some_and(|r| r < threshold)
    }
}

fn params(block: &ResidualBlock, head: &AuxiliaryClassifier) -> Vec<Param> {
    block.params().into_iter().chain(head.fc.params()).cloned().collect()
}

fn unflatten(block: &mut ResidualBlock, head: &mut AuxiliaryClassifier, v: &[f64]) {
    let mut at = 0;
    for p in block.params_mut().into_iter().chain(head.fc.params_mut()) {
        let k = p.value.numel();
        p.value.data_mut().copy_from_slice(&v[at..at + k]);
        at += k;
    }
}

/// `CE(head(T x)) + (1/(2 tau)) mean |r(x)|^2` and its gradient.
fn module_objective(block: &ResidualBlock, head: &AuxiliaryClassifier, x: &Tensor, labels: &[usize], tau: f64) -> Result<(f64, Vec<f64>)> {
    let mut g = Graph::new();
    let xv = g.constant(x.clone());
    let mut binder = Binder::trainable();
    let (out, r) = block.forward(&mut g, xv, &mut binder)?;
    let (loss, _) = head.classify(&mut g, out, labels, &mut binder)?;
    let trace = ModuleTrace {
        states: vec![xv, out],
        residues: vec![r],
    };
    let pen = transport_penalty(&mut g, &trace, tau, PenaltyForm::ResidueSum)?;
    let obj = g.add(loss, pen)?;
    g.backward(obj, GradMode::Zero)?;
    let mut grad = Vec::new();
    for &v in binder.vars() {
        grad.extend_from_slice(g.grad(v).expect("trainable").data());
    }
    Ok((g.value(obj).item(), grad))
}

/// Trains one residual block plus linear head on `rho` and compares its
/// output cloud with the oracle step.
pub fn verify_prop1(rho: &DiscreteDistribution, cfg: &Prop1Config) -> Result<Prop1Report> {
    if !(cfg.tau > 0.0 && cfg.tau.is_finite()) {
        return Err(Error::Config(format!("tau must be positive and finite, got {}", cfg.tau)));
    }
    let oracle_cfg = cfg.oracle_config()?;
    let labels = rho.require_labels("verify_prop1")?.to_vec();
    let classes = rho.classes().unwrap().max(2);
    let (n, d) = (rho.len(), rho.dim());
    let x = &rho.points;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut block = ResidualBlock::init("prop1.block", d, cfg.hidden, cfg.init_gain, &mut rng)?;
    // head starts at the best linear classifier of the input, as the oracle does
    let (f0, _) = separability(x, &labels, classes, None, oracle_cfg.fit_options());
    let mut head = AuxiliaryClassifier {
        fc: Linear {
            weight: Param::new("prop1.head.weight", f0.weight),
            bias: Param::new("prop1.head.bias", f0.bias),
        },
    };

    let flat: Vec<f64> = params(&block, &head).iter().flat_map(|p| p.value.data().to_vec()).collect();
    // the head weight follows the block parameters and obeys the oracle's bound
    let head_at = block.params().iter().map(|p| p.numel()).sum::<usize>();
    let head_len = d * classes;
    let mut scratch = (block.clone(), head.clone());
    let mut failure = None;
    let (best, module_objective) = minimize_projected(
        flat,
        |v| {
            unflatten(&mut scratch.0, &mut scratch.1, v);
            match module_objective(&scratch.0, &scratch.1, x, &labels, cfg.tau) {
                Ok(r) => r,
                Err(e) => {
                    failure.get_or_insert(e);
                    (f64::NAN, vec![0.0; v.len()])
                }
            }
        },
        |v| project_ball(&mut v[head_at..], head_len, oracle_cfg.classifier_radius),
        cfg.train_iters,
        oracle_cfg.tol,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    unflatten(&mut block, &mut head, &best);

    let pushed = rho.with_points(block.apply(x))?;
    let oracle = mms_oracle(rho, &oracle_cfg, None)?;
    let w2_to_oracle = w2(&pushed, &oracle.output)?;
    let w2_input_to_oracle = w2(rho, &oracle.output)?;
    let ratio = (w2_input_to_oracle > 1e-6).then(|| w2_to_oracle / w2_input_to_oracle);
    Ok(Prop1Report {
        tau: cfg.tau,
        n,
        d,
        seed: cfg.seed,
        w2_to_oracle,
        w2_input_to_oracle,
        ratio,
        module_objective,
        oracle_objective: oracle.objective,
    })
}
