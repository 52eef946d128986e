//! Finite-difference check of every differentiable op in the graph.

use trgl::gradcheck::{op_suite, DEFAULT_TOLERANCE};

fn main() -> trgl::Result<()> {
    let checks = op_suite(5, 1)?;
    for c in &checks {
        let mark = if c.passed(DEFAULT_TOLERANCE) { "ok" } else { "FAIL" };
        println!("{:<28} {:.2e}  {mark}", c.label, c.max_rel_error);
    }
    Ok(())
}
