//! A single regularized residual module against the minimizing-movement step
//! it should approximate.

use trgl::ot::{verify_prop1, Prop1Config};
use trgl::verify::moons_cloud;

fn main() -> trgl::Result<()> {
    for seed in 0..3 {
        let rho = moons_cloud(128, 0.1, seed)?;
        let r = verify_prop1(&rho, &Prop1Config::new(0.5, seed))?;
        println!(
            "seed {seed}: W2(module, oracle) {:.4}, W2(input, oracle) {:.4}, ratio {}",
            r.w2_to_oracle,
            r.w2_input_to_oracle,
            r.ratio.map_or("degenerate".into(), |x| format!("{x:.3}"))
        );
    }
    Ok(())
}
