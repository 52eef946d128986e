//! Empirical Hölder estimate `|T(x) - T(y)| ~ C |x - y|^eta` from sampled
//! support pairs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::assignment::sq_dist;
use super::DiscreteDistribution;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderProbeReport {
    /// Slope of `log |T(x) - T(y)|` against `log |x - y|`.
    pub eta: f64,
    /// `exp` of the intercept.
    pub c: f64,
    pub max_ratio: f64,
    pub pairs: usize,
}

/// Samples `pairs` pairs of distinct points from `support`, maps them with
/// `map` (applied to the whole support at once) and fits the log-log line.
pub fn holder_probe<F>(map: F, support: &DiscreteDistribution, pairs: usize, seed: u64) -> Result<HolderProbeReport>
where
    F: Fn(&Tensor) -> Result<Tensor>,
{
    if pairs < 10 {
        return Err(Error::Config(format!("holder probe needs at least 10 pairs, got {pairs}")));
    }
    let n = support.len();
    let pts = &support.points;
    let distinct = (1..n).any(|i| pts.row(i) != pts.row(0));
    if !distinct {
        return Err(Error::Data("holder probe support has no two distinct points".into()));
    }
    let mapped = map(pts)?;
    if mapped.rows() != n {
        return Err(Error::dim("holder_probe", format!("map returned {} rows for {n}", mapped.rows())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xs = Vec::with_capacity(pairs);
    let mut ys = Vec::with_capacity(pairs);
    let mut max_ratio: f64 = 0.0;
    while xs.len() < pairs {
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        let din = sq_dist(pts.row(i), pts.row(j)).sqrt();
        if din == 0.0 {
            continue;
        }
        let dout = sq_dist(mapped.row(i), mapped.row(j)).sqrt();
        if dout == 0.0 {
            // log undefined; still counts toward the expansion ratio
            continue;
        }
        max_ratio = max_ratio.max(dout / din);
        xs.push(din.ln());
        ys.push(dout.ln());
    }
    let m = pairs as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Data("all sampled pairs are equidistant; slope undefined".into()));
    }
    let eta = sxy / sxx;
    Ok(HolderProbeReport {
        eta,
        c: (my - eta * mx).exp(),
        max_ratio,
        pairs,
    })
}
