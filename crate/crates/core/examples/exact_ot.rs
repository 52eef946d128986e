//! Exact W2 between two point clouds with the assignment solver, checked
//! against enumeration of all permutations.

use trgl::ot::{brute_force_w2, exact_w2, w2, DiscreteDistribution};
use trgl::tensor::Tensor;

fn main() -> trgl::Result<()> {
    let a = DiscreteDistribution::new(
        Tensor::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![2.0, 2.0]])?,
        None,
    )?;
    let b = DiscreteDistribution::new(
        Tensor::from_rows(&[vec![1.1, 0.1], vec![2.0, 1.8], vec![0.1, -0.1], vec![-0.2, 1.2]])?,
        None,
    )?;
    let (cost, plan) = exact_w2(&a, &b)?;
    let (brute, _) = brute_force_w2(&a, &b)?;
    println!("assignment  {:?}", plan.perm);
    println!("W2^2 = {cost:.6} (brute force {brute:.6}), W2 = {:.6}", w2(&a, &b)?);

    // larger clouds: only the assignment solver is feasible
    let ds = trgl::data::gen_two_moons(300, 0.1, 0)?;
    let moons = DiscreteDistribution::from_dataset(&ds)?;
    let shifted = moons.with_points(Tensor::matrix(
        300,
        2,
        moons.points.data().iter().map(|v| v + 0.5).collect(),
    )?)?;
    println!("two moons vs shifted by (0.5, 0.5): W2^2 = {:.6}", exact_w2(&moons, &shifted)?.0);
    Ok(())
}
