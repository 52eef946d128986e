//! Experiment configuration files (TOML).
//!
//! A config names a dataset, a trunk, a base training plan, the seeds, and
//! a list of variants. Each variant overrides parts of the base plan, so one
//! file can hold e.g. a vanilla and a regularized run, or a sweep over `tau`.
//!
//! ```toml
//! name = "moons"
//! seeds = [0, 1, 2]
//!
//! [dataset]
//! kind = "two-moons"
//! n = 1000
//! noise = 0.25
//! train_size = 200
//!
//! [network]
//! modules = 8
//! blocks_per_module = 1
//! width = 32
//! input_dim = 2
//! classes = 2
//! init_gain = 0.05
//!
//! [plan]
//! regime = { kind = "sequential" }
//! epochs = { kind = "uniform", epochs = 100 }
//! batch_size = 32
//! optimizer = { lr = { kind = "constant", lr = 0.03 }, momentum = 0.9 }
//!
//! [[variants]]
//! name = "vanilla"
//! regularizer = "none"
//!
//! [[variants]]
//! name = "trgl"
//! tau = { kind = "fixed", tau = 1.0 }
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{self, gen_gaussian_mixture, gen_two_moons, load_mnist, prepare_splits, Splits};
use crate::error::{Error, Result};
use crate::greedy::{EpochSchedule, PenaltyForm, Regime, Regularizer, TauSchedule, TrainPlan};
use crate::greedy::HeadPolicy;
use crate::net::PartitionSpec;
use crate::tensor::SgdConfig;

/// Generated sets draw their training pool with seed `POOL_SEED_BASE + s`
/// and their test set with `TEST_SEED_BASE + s` for run seed `s`, so pool,
/// test set and initialization never share a stream.
pub const POOL_SEED_BASE: u64 = 100;
pub const TEST_SEED_BASE: u64 = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
pub enum DatasetSpec {
    TwoMoons {
        n: usize,
        noise: f64,
        #[serde(default = "default_test_n")]
        test_n: usize,
        #[serde(default)]
        train_size: Option<usize>,
        #[serde(default = "default_val_fraction")]
        val_fraction: f64,
    },
    GaussianMixture {
        n: usize,
        centers: Vec<[f64; 2]>,
        sigma: f64,
        #[serde(default = "default_test_n")]
        test_n: usize,
        #[serde(default)]
        train_size: Option<usize>,
        #[serde(default = "default_val_fraction")]
        val_fraction: f64,
    },
    /// IDX files under `dir`, or under the data directory when absent.
    Mnist {
        #[serde(default)]
        dir: Option<PathBuf>,
        #[serde(default)]
        train_size: Option<usize>,
        #[serde(default = "default_val_fraction")]
        val_fraction: f64,
    },
}

fn default_test_n() -> usize {
    1000
}
fn default_val_fraction() -> f64 {
    0.1
}

impl DatasetSpec {
    pub fn input_dim(&self) -> usize {
        match self {
            DatasetSpec::Mnist { .. } => 784,
            _ => 2,
        }
    }

    pub fn classes(&self) -> usize {
        match self {
            DatasetSpec::TwoMoons { .. } => 2,
            DatasetSpec::GaussianMixture { centers, .. } => centers.len(),
            DatasetSpec::Mnist { .. } => 10,
        }
    }

    /// Train / validation / test data for run seed `seed`.
    pub fn splits(&self, seed: u64) -> Result<Splits> {
        match self {
            DatasetSpec::TwoMoons {
                n,
                noise,
                test_n,
                train_size,
                val_fraction,
            } => {
                let pool = gen_two_moons(*n, *noise, POOL_SEED_BASE + seed)?;
                let test = gen_two_moons(*test_n, *noise, TEST_SEED_BASE + seed)?;
                prepare_splits(&pool, test, *val_fraction, *train_size, seed)
            }
            DatasetSpec::GaussianMixture {
                n,
                centers,
                sigma,
                test_n,
                train_size,
                val_fraction,
            } => {
                let pool = gen_gaussian_mixture(*n, centers, *sigma, POOL_SEED_BASE + seed)?;
                let test = gen_gaussian_mixture(*test_n, centers, *sigma, TEST_SEED_BASE + seed)?;
                prepare_splits(&pool, test, *val_fraction, *train_size, seed)
            }
            DatasetSpec::Mnist {
                dir,
                train_size,
                val_fraction,
            } => {
                let dir = dir.clone().unwrap_or_else(data::mnist_dir);
                let (pool, test) = load_mnist(&dir)?;
                prepare_splits(&pool, test, *val_fraction, *train_size, seed)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let check_common = |n: usize, test_n: usize, vf: f64, ts: Option<usize>| -> Result<()> {
            if n < 2 || test_n < 2 {
                return Err(Error::Config(format!("dataset.n and dataset.test_n must be >= 2, got {n} and {test_n}")));
            }
            if !(vf > 0.0 && vf < 1.0) {
                return Err(Error::Config(format!("dataset.val_fraction must lie in (0, 1), got {vf}")));
            }
            if ts == Some(0) {
                return Err(Error::Config("dataset.train_size must be >= 1".into()));
            }
            Ok(())
        };
        match self {
            DatasetSpec::TwoMoons {
                n,
                noise,
                test_n,
                train_size,
                val_fraction,
            } => {
                if !(*noise >= 0.0 && noise.is_finite()) {
                    return Err(Error::Config(format!("dataset.noise must be >= 0, got {noise}")));
                }
                check_common(*n, *test_n, *val_fraction, *train_size)
            }
            DatasetSpec::GaussianMixture {
                n,
                centers,
                sigma,
                test_n,
                train_size,
                val_fraction,
            } => {
                if centers.len() < 2 {
                    return Err(Error::Config("dataset.centers needs at least 2 entries".into()));
                }
                if !(*sigma > 0.0 && sigma.is_finite()) {
                    return Err(Error::Config(format!("dataset.sigma must be positive, got {sigma}")));
                }
                check_common(*n, *test_n, *val_fraction, *train_size)
            }
            DatasetSpec::Mnist {
                train_size,
                val_fraction,
                ..
            } => check_common(2, 2, *val_fraction, *train_size),
        }
    }
}

/// Whether a variant changes the base plan's regularizer.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegularizerMode {
    /// Keep the base plan's regularizer (possibly replaced via `tau`).
    #[default]
    Inherit,
    /// Vanilla greedy training: no transport term at all.
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub name: String,
    #[serde(default)]
    pub regime: Option<Regime>,
    #[serde(default)]
    pub epochs: Option<EpochSchedule>,
    #[serde(default)]
    pub regularizer: RegularizerMode,
    /// Replaces (or adds) the transport weighting.
    #[serde(default)]
    pub tau: Option<TauSchedule>,
    #[serde(default)]
    pub form: Option<PenaltyForm>,
    #[serde(default)]
    pub optimizer: Option<SgdConfig>,
}

impl Variant {
    pub fn named(name: &str) -> Self {
        Variant {
            name: name.to_string(),
            regime: None,
            epochs: None,
            regularizer: RegularizerMode::Inherit,
            tau: None,
            form: None,
            optimizer: None,
        }
    }
}

/// The base plan, without its seed (runs supply it).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanSpec {
    pub regime: Regime,
    pub epochs: EpochSchedule,
    pub batch_size: usize,
    pub optimizer: SgdConfig,
    #[serde(default)]
    pub regularizer: Option<Regularizer>,
    #[serde(default)]
    pub freeze_encoder: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportOptions {
    /// Also write SVG line charts next to the tables.
    #[serde(default)]
    pub svg: bool,
    /// Which head's accuracy stands for a run in comparisons.
    #[serde(default = "default_head")]
    pub head: HeadPolicy,
}

fn default_head() -> HeadPolicy {
    HeadPolicy::Last
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            svg: false,
            head: default_head(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub seeds: Vec<u64>,
    pub dataset: DatasetSpec,
    pub network: PartitionSpec,
    pub plan: PlanSpec,
    /// Empty means a single variant named `default` using the base plan.
    #[serde(default)]
    pub variants: Vec<Variant>,
    #[serde(default)]
    pub report: ReportOptions,
    /// Write a checkpoint per run.
    #[serde(default = "default_true")]
    pub checkpoints: bool,
}

fn default_true() -> bool {
    true
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))
    }

    /// The variants actually run.
    pub fn resolved_variants(&self) -> Vec<Variant> {
        if self.variants.is_empty() {
            vec![Variant::named("default")]
        } else {
            self.variants.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must list at least one seed".into()));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(s) = self.seeds.iter().find(|s| !seen.insert(**s)) {
            return Err(Error::Config(format!("seed {s} listed twice")));
        }
        self.dataset.validate()?;
        if self.network.input_dim != self.dataset.input_dim() {
            return Err(Error::Config(format!(
                "network.input_dim is {} but the dataset has {} features",
                self.network.input_dim,
                self.dataset.input_dim()
            )));
        }
        if self.network.classes != self.dataset.classes() {
            return Err(Error::Config(format!(
                "network.classes is {} but the dataset has {} classes",
                self.network.classes,
                self.dataset.classes()
            )));
        }
        self.network.validate()?;
        let mut names = std::collections::HashSet::new();
        for v in self.resolved_variants() {
            if v.name.is_empty() || !v.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
                return Err(Error::Config(format!(
                    "variant name {:?} must be non-empty and use only [A-Za-z0-9_-]",
                    v.name
                )));
            }
            if !names.insert(v.name.clone()) {
                return Err(Error::Config(format!("variant {:?} defined twice", v.name)));
            }
            if v.regularizer == RegularizerMode::None && (v.tau.is_some() || v.form.is_some()) {
                return Err(Error::Config(format!(
                    "variant {:?} sets regularizer = \"none\" together with tau/form",
                    v.name
                )));
            }
            self.plan_for(&v, 0)?.validate(self.network.modules)?;
        }
        Ok(())
    }

    /// Trunk for run seed `seed`.
    pub fn network_for(&self, seed: u64) -> PartitionSpec {
        PartitionSpec {
            seed,
            ..self.network.clone()
        }
    }

    /// Training plan of `variant` for run seed `seed`.
    pub fn plan_for(&self, variant: &Variant, seed: u64) -> Result<TrainPlan> {
        let base = &self.plan;
        let regularizer = match variant.regularizer {
            RegularizerMode::None => None,
            RegularizerMode::Inherit => match (&variant.tau, &base.regularizer) {
                (Some(tau), base_reg) => Some(Regularizer {
                    tau: tau.clone(),
                    form: variant.form.or(base_reg.as_ref().map(|r| r.form)).unwrap_or_default(),
                }),
                (None, Some(r)) => Some(Regularizer {
                    tau: r.tau.clone(),
                    form: variant.form.unwrap_or(r.form),
                }),
                (None, None) => {
                    if variant.form.is_some() {
                        return Err(Error::Config(format!(
                            "variant {:?} sets form but there is no regularizer",
                            variant.name
                        )));
                    }
                    None
                }
            },
        };
        Ok(TrainPlan {
            regime: variant.regime.clone().unwrap_or_else(|| base.regime.clone()),
            epochs: variant.epochs.clone().unwrap_or_else(|| base.epochs.clone()),
            batch_size: base.batch_size,
            optimizer: variant.optimizer.clone().unwrap_or_else(|| base.optimizer.clone()),
            regularizer,
            seed,
            freeze_encoder: base.freeze_encoder,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const SAMPLE: &str = r#"
name = "moons"
seeds = [1, 2, 3]

[dataset]
kind = "two-moons"
n = 400
noise = 0.2
train_size = 100

[network]
modules = 3
blocks_per_module = 1
width = 8
input_dim = 2
classes = 2
init_gain = 0.05

[plan]
regime = { kind = "sequential" }
epochs = { kind = "uniform", epochs = 2 }
batch_size = 16
optimizer = { lr = { kind = "constant", lr = 0.05 }, momentum = 0.9 }
regularizer = { tau = { kind = "fixed", tau = 1.0 } }

[[variants]]
name = "vanilla"
regularizer = "none"

[[variants]]
name = "trgl"

[[variants]]
name = "mult"
regime = { kind = "multi-lap", laps = 2 }
tau = { kind = "multiplier", lambda_init = 1.0, h = 1.0, s = 50 }
"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = ExperimentConfig::from_toml(SAMPLE).unwrap();
        assert_eq!(cfg.resolved_variants().len(), 3);
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn variants_resolve() {
        let cfg = ExperimentConfig::from_toml(SAMPLE).unwrap();
        let v = cfg.resolved_variants();
        assert!(cfg.plan_for(&v[0], 7).unwrap().regularizer.is_none());
        let t = cfg.plan_for(&v[1], 7).unwrap();
        assert_eq!(t.regularizer.unwrap().tau, TauSchedule::Fixed { tau: 1.0 });
        assert_eq!(t.seed, 7);
        let m = cfg.plan_for(&v[2], 7).unwrap();
        assert!(m.is_multiplier());
        assert_eq!(m.regime, Regime::MultiLap { laps: 2 });
    }

    #[test]
    fn unknown_key_rejected_with_location() {
        let bad = SAMPLE.replace("batch_size = 16", "batch_sise = 16");
        let err = ExperimentConfig::from_toml(&bad).unwrap_err().to_string();
        assert!(err.contains("batch_sise"), "{err}");
        assert!(err.contains("line"), "{err}");
    }

    #[test]
    fn mismatched_shapes_rejected() {
        let bad = SAMPLE.replace("classes = 2", "classes = 3");
        assert!(matches!(ExperimentConfig::from_toml(&bad), Err(Error::Config(_))));
        let bad = SAMPLE.replace("seeds = [1, 2, 3]", "seeds = [1, 1]");
        assert!(matches!(ExperimentConfig::from_toml(&bad), Err(Error::Config(_))));
        let bad = SAMPLE.replace("tau = 1.0", "tau = -1.0");
        assert!(matches!(ExperimentConfig::from_toml(&bad), Err(Error::Config(_))));
    }

    #[test]
    fn splits_are_deterministic() {
        let cfg = ExperimentConfig::from_toml(SAMPLE).unwrap();
        let a = cfg.dataset.splits(4).unwrap();
        let b = cfg.dataset.splits(4).unwrap();
        assert!(a.train.features.bit_eq(&b.train.features));
        assert_eq!(a.train.len(), 100);
        assert_eq!(a.test.len(), 1000);
    }
}
