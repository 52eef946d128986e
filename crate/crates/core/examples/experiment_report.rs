//! Config in, artifacts and report tables out: what `trgl train` followed by
//! `trgl report` does.

use trgl::config::ExperimentConfig;
use trgl::experiment::run_to_dir;
use trgl::report::{write_report, ReportKind};

fn main() -> trgl::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/moons-regimes.toml");
    let cfg = ExperimentConfig::load(path.as_ref())?;
    let out = std::env::temp_dir().join(format!("trgl-{}", cfg.name));
    let (manifest, manifest_path) = run_to_dir(&cfg, &out)?;
    println!("run {} -> {}", manifest.run_id, manifest_path.display());
    for kind in [ReportKind::PerModuleCurve, ReportKind::RegimeComparison, ReportKind::Memory] {
        for file in write_report(&manifest_path, kind, None)? {
            println!("  {}", file.display());
            if file.extension().is_some_and(|e| e == "csv") {
                print!("{}", std::fs::read_to_string(&file).map_err(|e| trgl::Error::io(&file, e))?);
            }
        }
    }
    Ok(())
}
