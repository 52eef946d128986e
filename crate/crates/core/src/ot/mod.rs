//! Discrete optimal transport between uniform point clouds, a particle
//! minimizing-movement oracle, and empirical probes of trained modules.

mod assignment;
mod holder;
mod linear;
mod mms;
mod prop1;

use std::path::Path;

pub use assignment::{brute_force_w2, exact_w2, hungarian};
pub use holder::{holder_probe, HolderProbeReport};
pub use linear::{fit_linear, minimize, minimize_projected, separability, FitOptions, LinearClassifier};
pub use mms::{mms_chain, mms_oracle, MmsConfig, MmsStepResult, DEFAULT_CLASSIFIER_RADIUS};
pub use prop1::{verify_prop1, Prop1Config, Prop1Report};

use crate::data::{read_points, write_points, Dataset};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `n` points of `R^d` with uniform weights and optional class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteDistribution {
    pub points: Tensor,
    pub labels: Option<Vec<usize>>,
}

impl DiscreteDistribution {
    pub fn new(points: Tensor, labels: Option<Vec<usize>>) -> Result<Self> {
        if points.shape().len() != 2 || points.rows() == 0 {
            return Err(Error::Data(format!("a cloud needs n >= 1 points, got shape {:?}", points.shape())));
        }
        if !points.all_finite() {
            return Err(Error::Data("cloud has non-finite coordinates".into()));
        }
        if let Some(l) = &labels {
            if l.len() != points.rows() {
                return Err(Error::Data(format!("{} labels for {} points", l.len(), points.rows())));
            }
        }
        Ok(DiscreteDistribution { points, labels })
    }

    pub fn from_dataset(ds: &Dataset) -> Result<Self> {
        Self::new(ds.features.clone(), Some(ds.labels.clone()))
    }

    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.cols()
    }

    /// Number of classes implied by the labels (max label + 1).
    pub fn classes(&self) -> Option<usize> {
        self.labels.as_ref().map(|l| l.iter().max().map_or(0, |m| m + 1))
    }

    pub(crate) fn require_labels(&self, op: &str) -> Result<&[usize]> {
        self.labels
            .as_deref()
            .ok_or_else(|| Error::Data(format!("{op} needs a labeled cloud")))
    }

    /// Per-coordinate `(min, max)` of the support. The compact domain the
    /// theory assumes is only checked after the fact against such boxes.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        let d = self.dim();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for row in self.points.data().chunks(d) {
            for (j, &v) in row.iter().enumerate() {
                lo[j] = lo[j].min(v);
                hi[j] = hi[j].max(v);
            }
        }
        (lo, hi)
    }

    /// Whether every point lies in `other`'s bounding box grown by `margin`
    /// on each side.
    pub fn within_box_of(&self, other: &DiscreteDistribution, margin: f64) -> bool {
        let (lo, hi) = other.bounding_box();
        self.points
            .data()
            .chunks(self.dim())
            .all(|row| row.iter().enumerate().all(|(j, &v)| v >= lo[j] - margin && v <= hi[j] + margin))
    }

    /// Same labels, new positions.
    pub fn with_points(&self, points: Tensor) -> Result<Self> {
        Self::new(points, self.labels.clone())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_points(path, &self.points, self.labels.as_deref())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (points, labels) = read_points(path)?;
        Self::new(points, labels)
    }
}

/// A permutation coupling two equal-size uniform clouds, with its cost
/// `(1/n) sum_i |a_i - b_perm[i]|^2`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransportPlan {
    pub perm: Vec<usize>,
    pub cost: f64,
}

impl TransportPlan {
    pub fn new(perm: Vec<usize>, a: &DiscreteDistribution, b: &DiscreteDistribution) -> Result<Self> {
        let n = a.len();
        if perm.len() != n || b.len() != n {
            return Err(Error::Contract(format!("plan of length {} for clouds of {} and {}", perm.len(), n, b.len())));
        }
        let mut seen = vec![false; n];
        for &j in &perm {
            if j >= n || std::mem::replace(&mut seen[j], true) {
                return Err(Error::Contract("transport plan is not a bijection".into()));
            }
        }
        let cost = Self::recompute(&perm, a, b);
        Ok(TransportPlan { perm, cost })
    }

    /// Cost of `perm`. The terms are summed in sorted order, so the value
    /// depends only on the multiset of matched distances: swapping or
    /// relabeling the clouds gives the same bits.
    pub fn recompute(perm: &[usize], a: &DiscreteDistribution, b: &DiscreteDistribution) -> f64 {
        let mut terms: Vec<f64> = perm
            .iter()
            .enumerate()
            .map(|(i, &j)| assignment::sq_dist(a.points.row(i), b.points.row(j)))
            .collect();
        terms.sort_by(f64::total_cmp);
        terms.iter().sum::<f64>() / a.len() as f64
    }
}

/// `W_2` itself (square root of [`exact_w2`]).
pub fn w2(a: &DiscreteDistribution, b: &DiscreteDistribution) -> Result<f64> {
    Ok(exact_w2(a, b)?.0.sqrt())
}
