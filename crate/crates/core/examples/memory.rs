//! Stored-scalar accounting of a 16-block trunk split into K modules.

use trgl::greedy::{memory_account, Regime};
use trgl::net::PartitionSpec;

fn main() {
    println!("{:>3} {:>12} {:>12} {:>12} {:>9} {:>9}", "K", "end-to-end", "sequential", "parallel", "seq save", "par save");
    for k in [1, 2, 4, 8, 16] {
        let spec = PartitionSpec {
            modules: k,
            blocks_per_module: 16 / k,
            width: 64,
            hidden: None,
            input_dim: 784,
            classes: 10,
            init_gain: 0.1,
            encoder_gain: None,
            seed: 0,
        };
        let a = memory_account(&spec, 256);
        println!(
            "{k:>3} {:>12} {:>12} {:>12} {:>8.1}% {:>8.1}%",
            a.e2e.total(),
            a.sequential.total(),
            a.parallel.total(),
            a.saved_pct(&Regime::Sequential),
            a.saved_pct(&Regime::Parallel)
        );
    }
}
