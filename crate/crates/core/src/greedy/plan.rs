use serde::{Deserialize, Serialize};

use super::PenaltyForm;
use crate::error::{Error, Result};
use crate::multiplier::MultiplierConfig;
use crate::tensor::SgdConfig;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
pub enum Regime {
    /// Modules trained one after another, each to completion.
    Sequential,
    /// All modules trained batch-wise at once, with a gradient cut between them.
    Parallel,
    /// `laps` sequential sweeps, each giving module `k` a share of `epochs(k)`.
    MultiLap { laps: usize },
}

impl Regime {
    pub fn name(&self) -> &'static str {
        match self {
            Regime::Sequential => "sequential",
            Regime::Parallel => "parallel",
            Regime::MultiLap { .. } => "multi-lap",
        }
    }
}

/// Total epochs given to module `k` (1-based).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
pub enum EpochSchedule {
    Uniform { epochs: usize },
    /// `base + per_module * k`.
    Affine { base: usize, per_module: usize },
    PerModule { epochs: Vec<usize> },
}

impl EpochSchedule {
    pub fn epochs(&self, k: usize) -> usize {
        match self {
            EpochSchedule::Uniform { epochs } => *epochs,
            EpochSchedule::Affine { base, per_module } => base + per_module * k,
            EpochSchedule::PerModule { epochs } => epochs.get(k.wrapping_sub(1)).copied().unwrap_or(0),
        }
    }
}

/// Epochs module `k` trains during lap `lap` (1-based) of `laps`: an even
/// share, with the remainder going to the last lap.
pub fn lap_epochs(total: usize, laps: usize, lap: usize) -> usize {
    let share = total / laps;
    if lap == laps {
        share + total % laps
    } else {
        share
    }
}

/// How strongly each module's displacement is penalized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
pub enum TauSchedule {
    /// `tau_k = tau`.
    Fixed { tau: f64 },
    /// `tau_k = 2 tau` for modules past the midpoint (`k > K / 2`).
    MidpointDoubled { tau: f64 },
    /// Penalty kept in the objective with weight exactly 0.
    Disabled,
    /// Objective `lambda_k L + W` with a growing `lambda_k`.
    Multiplier(MultiplierConfig),
    /// Objective `lambda L + W` with a constant `lambda`.
    FixedLambda { lambda: f64 },
}

/// Per-module objective derived from the schedule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum Weighting {
    /// `L + weight * W`.
    Penalty(f64),
    /// `lambda L + W`.
    Lambda(f64),
    /// `lambda L + W`, `lambda` read from the multiplier state.
    Multiplier,
}

impl TauSchedule {
    /// Effective `tau_k` for the tau-based modes.
    pub fn tau(&self, k: usize, modules: usize) -> Option<f64> {
        match self {
            TauSchedule::Fixed { tau } => Some(*tau),
            TauSchedule::MidpointDoubled { tau } => Some(if 2 * k > modules { 2.0 * tau } else { *tau }),
            _ => None,
        }
    }

    pub(crate) fn weighting(&self, k: usize, modules: usize) -> Weighting {
        match self {
            TauSchedule::Fixed { .. } | TauSchedule::MidpointDoubled { .. } => {
                Weighting::Penalty(1.0 / (2.0 * self.tau(k, modules).unwrap()))
            }
            TauSchedule::Disabled => Weighting::Penalty(0.0),
            TauSchedule::FixedLambda { lambda } => Weighting::Lambda(*lambda),
            TauSchedule::Multiplier(_) => Weighting::Multiplier,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            TauSchedule::Fixed { tau } | TauSchedule::MidpointDoubled { tau } => {
                if !(*tau > 0.0 && tau.is_finite()) {
                    return Err(Error::Config(format!("tau must be positive and finite, got {tau}")));
                }
            }
            TauSchedule::FixedLambda { lambda } => {
                if !(*lambda >= 0.0 && lambda.is_finite()) {
                    return Err(Error::Config(format!("lambda must be >= 0, got {lambda}")));
                }
            }
            TauSchedule::Multiplier(c) => c.validate()?,
            TauSchedule::Disabled => {}
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Regularizer {
    pub tau: TauSchedule,
    #[serde(default)]
    pub form: PenaltyForm,
}

/// Everything that determines a training run besides the network and data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainPlan {
    pub regime: Regime,
    pub epochs: EpochSchedule,
    pub batch_size: usize,
    pub optimizer: SgdConfig,
    /// `None` trains without any transport term (vanilla greedy learning).
    #[serde(default)]
    pub regularizer: Option<Regularizer>,
    pub seed: u64,
    /// Keep the encoder at its initialization instead of training it with module 1.
    #[serde(default)]
    pub freeze_encoder: bool,
}

impl TrainPlan {
    pub fn validate(&self, modules: usize) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        self.optimizer.validate()?;
        if let Some(r) = &self.regularizer {
            r.tau.validate()?;
        }
        if let EpochSchedule::PerModule { epochs } = &self.epochs {
            if epochs.len() != modules {
                return Err(Error::Config(format!(
                    "per-module epoch list has {} entries for {modules} modules",
                    epochs.len()
                )));
            }
        }
        for k in 1..=modules {
            let e = self.epochs.epochs(k);
            if e == 0 {
                return Err(Error::Config(format!("module {k} is scheduled for 0 epochs")));
            }
            if let Regime::MultiLap { laps } = self.regime {
                if laps == 0 {
                    return Err(Error::Config("laps must be >= 1".into()));
                }
                if e < laps {
                    return Err(Error::Config(format!(
                        "module {k} has {e} epochs for {laps} laps; a lap would be empty"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn is_multiplier(&self) -> bool {
        matches!(
            self.regularizer,
            Some(Regularizer {
                tau: TauSchedule::Multiplier(_),
                ..
            })
        )
    }
}
