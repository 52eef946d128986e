//! Exact transport between equal-size uniform clouds, which reduces to a
//! linear assignment problem.

use super::{DiscreteDistribution, TransportPlan};
use crate::error::{Error, Result};

/// Minimum-cost perfect matching for a square cost matrix (row-major,
/// `n x n`), by shortest augmenting paths with potentials. `O(n^3)`.
/// Returns `assign[i]` = column matched to row `i`.
pub fn hungarian(cost: &[f64], n: usize) -> Vec<usize> {
    assert_eq!(cost.len(), n * n, "cost matrix must be n x n");
    // 1-based with a virtual column 0, following the classical formulation
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1]; // p[j]: row matched to column j
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=n {
        assign[p[j] - 1] = j - 1;
    }
    assign
}

fn sq_cost_matrix(a: &DiscreteDistribution, b: &DiscreteDistribution) -> Vec<f64> {
    let n = a.len();
    let mut c = Vec::with_capacity(n * n);
    for i in 0..n {
        let ai = a.points.row(i);
        for j in 0..n {
            c.push(sq_dist(ai, b.points.row(j)));
        }
    }
    c
}

pub(crate) fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

fn check_pair(a: &DiscreteDistribution, b: &DiscreteDistribution) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Unsupported(format!(
            "exact transport needs equal cardinalities, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.dim() != b.dim() {
        return Err(Error::dim("exact_w2", format!("clouds live in R^{} and R^{}", a.dim(), b.dim())));
    }
    Ok(())
}

/// Squared 2-Wasserstein distance between equal-size uniform clouds and a
/// permutation attaining it.
pub fn exact_w2(a: &DiscreteDistribution, b: &DiscreteDistribution) -> Result<(f64, TransportPlan)> {
    check_pair(a, b)?;
    let n = a.len();
    let perm = hungarian(&sq_cost_matrix(a, b), n);
    let plan = TransportPlan::new(perm, a, b)?;
    Ok((plan.cost, plan))
}

/// The same quantity by enumerating all `n!` permutations (Heap's algorithm).
/// Only meant as an oracle for small `n`.
pub fn brute_force_w2(a: &DiscreteDistribution, b: &DiscreteDistribution) -> Result<(f64, TransportPlan)> {
    check_pair(a, b)?;
    let n = a.len();
    if n > 10 {
        return Err(Error::Unsupported(format!("brute force over {n}! permutations")));
    }
    let cost = sq_cost_matrix(a, b);
    let eval = |perm: &[usize]| perm.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum::<f64>() / n as f64;
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = (eval(&perm), perm.clone());
    let mut c = vec![0usize; n];
    let mut i = 1;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            let v = eval(&perm);
            if v < best.0 {
                best = (v, perm.clone());
            }
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    let plan = TransportPlan::new(best.1, a, b)?;
    Ok((plan.cost, plan))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn cloud(rows: &[[f64; 2]]) -> DiscreteDistribution {
        DiscreteDistribution::new(Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap(), None).unwrap()
    }

    #[test]
    fn single_pair() {
        let (w, plan) = exact_w2(&cloud(&[[0.0, 0.0]]), &cloud(&[[3.0, 4.0]])).unwrap();
        assert_eq!(w, 25.0);
        assert_eq!(plan.perm, vec![0]);
    }

    #[test]
    fn identical_clouds_cost_zero() {
        let a = cloud(&[[0.0, 1.0], [2.0, -1.0], [5.0, 5.0]]);
        let (w, plan) = exact_w2(&a, &a).unwrap();
        assert_eq!(w, 0.0);
        assert_eq!(plan.perm, vec![0, 1, 2]);
    }

    #[test]
    fn crossing_is_uncrossed() {
        let a = cloud(&[[0.0, 0.0], [1.0, 0.0]]);
        let b = cloud(&[[1.1, 0.0], [0.1, 0.0]]);
        let (w, plan) = exact_w2(&a, &b).unwrap();
        assert_eq!(plan.perm, vec![1, 0]);
        assert!((w - 0.01).abs() < 1e-15);
    }

    #[test]
    fn hungarian_on_textbook_matrix() {
        // optimum 1 + 2 + 2 via rows 0->1, 1->0, 2->2
        let c = [4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0];
        let a = hungarian(&c, 3);
        let total: f64 = a.iter().enumerate().map(|(i, &j)| c[i * 3 + j]).sum();
        assert_eq!(total, 5.0);
    }

    #[test]
    fn unequal_sizes_unsupported() {
        let a = cloud(&[[0.0, 0.0]]);
        let b = cloud(&[[0.0, 0.0], [1.0, 1.0]]);
        assert!(matches!(exact_w2(&a, &b), Err(Error::Unsupported(_))));
    }
}
