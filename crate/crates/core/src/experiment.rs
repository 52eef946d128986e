//! Running a config end to end and recording what was produced.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Variant};
use crate::data::{sha256_hex, Splits};
use crate::error::{Error, Result};
use crate::greedy::{memory_account, train, MemoryAccount, MetricsRecord};
use crate::net::{build_partition, load_checkpoint, save_checkpoint, NetworkPartition};

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST_FILE: &str = "manifest.json";

/// One trained (variant, seed) pair.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub variant: String,
    pub seed: u64,
    pub metrics: MetricsRecord,
    pub network: NetworkPartition,
    pub seconds: f64,
}

/// Identifier of a resolved config: the first 16 hex digits of the SHA-256
/// of its canonical TOML form.
pub fn run_id(cfg: &ExperimentConfig) -> Result<String> {
    Ok(sha256_hex(cfg.to_toml()?.as_bytes())[..16].to_string())
}

pub fn run_variant(cfg: &ExperimentConfig, variant: &Variant, seed: u64, splits: &Splits) -> Result<RunResult> {
    let start = Instant::now();
    let mut network = build_partition(&cfg.network_for(seed))?;
    let plan = cfg.plan_for(variant, seed)?;
    let metrics = train(&mut network, &plan, splits)?;
    Ok(RunResult {
        variant: variant.name.clone(),
        seed,
        metrics,
        network,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Every variant on every seed, seeds outermost; the data for a seed is
/// built once and shared by its variants.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RunResult>> {
    cfg.validate()?;
    let variants = cfg.resolved_variants();
    let mut out = Vec::with_capacity(cfg.seeds.len() * variants.len());
    for &seed in &cfg.seeds {
        let splits = cfg.dataset.splits(seed)?;
        for v in &variants {
            out.push(run_variant(cfg, v, seed, &splits)?);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub variant: String,
    pub seed: u64,
    pub regime: String,
    /// Relative to the manifest's directory.
    pub metrics: String,
    pub checkpoint: Option<String>,
    pub seconds: f64,
    pub final_test_acc: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub toolkit_version: String,
    pub config: ExperimentConfig,
    pub runs: Vec<RunEntry>,
    pub memory: MemoryAccount,
    pub total_seconds: f64,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Writes `dir/manifest.json` through a temporary file and a rename, so
    /// readers never see a partial manifest.
    pub fn write_atomic(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(MANIFEST_FILE);
        let tmp = dir.join(format!(".{MANIFEST_FILE}.{}.tmp", std::process::id()));
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn metrics_path(&self, dir: &Path, entry: &RunEntry) -> PathBuf {
        dir.join(&entry.metrics)
    }

    /// Every referenced artifact exists and carries this manifest's run id
    /// (in its file name, and in the header of checkpoints).
    pub fn check_artifacts(&self, dir: &Path) -> Result<()> {
        for e in &self.runs {
            let mut files = vec![e.metrics.clone()];
            files.extend(e.checkpoint.clone());
            for f in &files {
                if !f.starts_with(&self.run_id) {
                    return Err(Error::Report(format!("artifact {f} does not carry run id {}", self.run_id)));
                }
                if !dir.join(f).is_file() {
                    return Err(Error::Report(format!("artifact {f} is missing")));
                }
            }
            if let Some(c) = &e.checkpoint {
                let ck = load_checkpoint(&dir.join(c))?;
                if ck.run_id != self.run_id {
                    return Err(Error::Report(format!("checkpoint {c} belongs to run {}", ck.run_id)));
                }
            }
        }
        Ok(())
    }
}

fn artifact_stem(run_id: &str, variant: &str, seed: u64) -> String {
    format!("{run_id}-{variant}-seed{seed}")
}

/// Runs `cfg` and writes metrics, checkpoints and the manifest into `out`.
pub fn run_to_dir(cfg: &ExperimentConfig, out: &Path) -> Result<(RunManifest, PathBuf)> {
    cfg.validate()?;
    let start = Instant::now();
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let id = run_id(cfg)?;
    let mut runs = Vec::new();
    for r in run_experiment(cfg)? {
        let stem = artifact_stem(&id, &r.variant, r.seed);
        let metrics = format!("{stem}.metrics.csv");
        r.metrics.write_csv(&out.join(&metrics))?;
        let checkpoint = if cfg.checkpoints {
            let name = format!("{stem}.ckpt");
            save_checkpoint(&out.join(&name), &r.network, &id)?;
            Some(name)
        } else {
            None
        };
        runs.push(RunEntry {
            regime: r.metrics.rows.first().map(|row| row.regime.clone()).unwrap_or_default(),
            final_test_acc: r.metrics.final_test_acc(),
            variant: r.variant,
            seed: r.seed,
            metrics,
            checkpoint,
            seconds: r.seconds,
        });
    }
    let manifest = RunManifest {
        run_id: id,
        toolkit_version: TOOLKIT_VERSION.to_string(),
        config: cfg.clone(),
        runs,
        memory: memory_account(&cfg.network, cfg.plan.batch_size),
        total_seconds: start.elapsed().as_secs_f64(),
    };
    let path = manifest.write_atomic(out)?;
    Ok((manifest, path))
}
