//! Parallel VanGL vs TRGL on 600 MNIST digits, one seed. The full 5-seed
//! comparison is `configs/mnist600-parallel.toml`.

use trgl::config::ExperimentConfig;
use trgl::experiment::run_experiment;

fn main() -> trgl::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/mnist600-parallel.toml");
    let mut cfg = ExperimentConfig::load(path.as_ref())?;
    cfg.seeds = vec![0];
    cfg.variants.retain(|v| v.name != "multiplier");
    for r in run_experiment(&cfg)? {
        let acc: Vec<String> = r.metrics.final_test_acc().iter().map(|a| format!("{a:.3}")).collect();
        println!("{:<8} {}  ({:.1}s)", r.variant, acc.join(" "), r.seconds);
    }
    Ok(())
}
