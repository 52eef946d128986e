//! Minimizing-movement steps on a labelled cloud: each step trades
//! separability against squared transport cost.

use trgl::ot::{mms_chain, MmsConfig};
use trgl::verify::moons_cloud;

fn main() -> trgl::Result<()> {
    let rho = moons_cloud(128, 0.1, 0)?;
    for tau in [0.1, 0.5, 2.0] {
        println!("tau = {tau}");
        let chain = mms_chain(&rho, &MmsConfig::new(tau), 4)?;
        let mut prev = &rho;
        for (i, step) in chain.iter().enumerate() {
            println!(
                "  step {}: Z {:.4} -> {:.4}, objective {:.4}, mean displacement {:.4}",
                i + 1,
                step.z_input,
                step.z_output,
                step.objective,
                step.mean_displacement(prev)
            );
            prev = &step.output;
        }
    }
    Ok(())
}
