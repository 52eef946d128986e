//! Central finite-difference checks for the differentiation graph.
//!
//! The numerical side only ever calls the forward pass, so it is independent
//! of the backward rules it checks. Errors are norm-wise relative:
//! `||analytic - numeric|| / max(||analytic||, ||numeric||)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::tensor::{gaussian, GradMode, Graph, Tensor, Var};

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-6;

/// Outcome of one finite-difference comparison.
#[derive(Clone, Debug)]
pub struct GradCheck {
    pub label: String,
    pub max_rel_error: f64,
}

impl GradCheck {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_rel_error <= tol
    }
}

/// Central differences of a scalar function of several tensors.
pub fn numerical_grads<F>(f: F, inputs: &[Tensor], step: f64) -> Vec<Tensor>
where
    F: Fn(&[Tensor]) -> f64,
{
    let mut work = inputs.to_vec();
    let mut grads = Vec::with_capacity(inputs.len());
    for t in 0..inputs.len() {
        let mut g = Tensor::zeros(inputs[t].shape());
        for i in 0..inputs[t].numel() {
            let orig = work[t].data()[i];
            work[t].data_mut()[i] = orig + step;
            let up = f(&work);
            work[t].data_mut()[i] = orig - step;
            let down = f(&work);
            work[t].data_mut()[i] = orig;
            g.data_mut()[i] = (up - down) / (2.0 * step);
        }
        grads.push(g);
    }
    grads
}

pub fn relative_error(analytic: &Tensor, numeric: &Tensor) -> f64 {
    let diff: f64 = analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(a, n)| (a - n).powi(2))
        .sum::<f64>()
        .sqrt();
    let scale = norm(analytic).max(norm(numeric));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

fn norm(t: &Tensor) -> f64 {
    t.data().iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Compares the graph gradient of `build` against central differences.
///
/// `build` receives the graph and one variable per input and must return a
/// scalar. It is called once for the analytic pass and twice per input entry
/// for the numeric pass.
pub fn check<B>(label: impl Into<String>, inputs: &[Tensor], step: f64, build: B) -> Result<GradCheck>
where
    B: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.variable(t.clone())).collect();
    let loss = build(&mut g, &vars)?;
    g.backward(loss, GradMode::Zero)?;
    let analytic: Vec<Tensor> = vars.iter().map(|&v| g.grad(v).unwrap().clone()).collect();

    let eval = |xs: &[Tensor]| -> f64 {
        let mut g = Graph::new();
        let vars: Vec<Var> = xs.iter().map(|t| g.constant(t.clone())).collect();
        let loss = build(&mut g, &vars).expect("forward succeeded once already");
        g.value(loss).item()
    };
    let numeric = numerical_grads(eval, inputs, step);
    let max_rel_error = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| relative_error(a, n))
        .fold(0.0, f64::max);
    Ok(GradCheck {
        label: label.into(),
        max_rel_error,
    })
}

/// Every differentiable op, each composed with a random projection so that
/// non-scalar outputs reach a scalar through a non-trivial path.
pub fn op_suite(instances: usize, seed: u64) -> Result<Vec<GradCheck>> {
    let mut out = Vec::new();
    for i in 0..instances {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
        let n = rng.random_range(1..=5);
        let k = rng.random_range(1..=5);
        let m = rng.random_range(1..=5);

        let a = gaussian(n, k, &mut rng);
        let b = gaussian(k, m, &mut rng);
        let proj = gaussian(m, 2, &mut rng);
        out.push(check(format!("matmul #{i}"), &[a.clone(), b], DEFAULT_STEP, |g, v| {
            let y = g.matmul(v[0], v[1])?;
            project(g, y, &proj)
        })?);

        let c = gaussian(n, k, &mut rng);
        let proj_k = gaussian(k, 2, &mut rng);
        out.push(check(format!("add #{i}"), &[a.clone(), c], DEFAULT_STEP, |g, v| {
            let y = g.add(v[0], v[1])?;
            project(g, y, &proj_k)
        })?);

        let bias = Tensor::vector(gaussian(1, k, &mut rng).into_data());
        out.push(check(format!("add-bias #{i}"), &[a.clone(), bias], DEFAULT_STEP, |g, v| {
            let y = g.add_bias(v[0], v[1])?;
            project(g, y, &proj_k)
        })?);

        // keep relu inputs away from the kink, where differences are meaningless
        let r = away_from_zero(gaussian(n, k, &mut rng), 1e-2);
        out.push(check(format!("relu #{i}"), &[r], DEFAULT_STEP, |g, v| {
            let y = g.relu(v[0])?;
            project(g, y, &proj_k)
        })?);

        let c: f64 = rng.random_range(-3.0..3.0);
        out.push(check(format!("scale #{i}"), std::slice::from_ref(&a), DEFAULT_STEP, |g, v| {
            let y = g.scale(v[0], c)?;
            project(g, y, &proj_k)
        })?);

        out.push(check(format!("sum-of-squares #{i}"), std::slice::from_ref(&a), DEFAULT_STEP, |g, v| {
            g.sum_of_squares(v[0])
        })?);

        out.push(check(format!("mean #{i}"), std::slice::from_ref(&a), DEFAULT_STEP, |g, v| {
            let s = project(g, v[0], &proj_k)?;
            let t = g.scale(v[0], c)?;
            let m = g.mean(t)?;
            g.add(s, m)
        })?);

        let classes = rng.random_range(2..=6);
        let logits = gaussian(n, classes, &mut rng);
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
        out.push(check(format!("softmax-cross-entropy #{i}"), &[logits], DEFAULT_STEP, |g, v| {
            g.softmax_cross_entropy(v[0], &labels)
        })?);

        let chain = [
            gaussian(3, 3, &mut rng),
            gaussian(3, 3, &mut rng),
            gaussian(3, 3, &mut rng),
        ];
        out.push(check(format!("matmul chain 3x3 #{i}"), &chain, DEFAULT_STEP, |g, v| {
            let ab = g.matmul(v[0], v[1])?;
            let abc = g.matmul(ab, v[2])?;
            g.sum_of_squares(abc)
        })?);
    }
    Ok(out)
}

/// `sum((y * proj)^2)`: a scalar that depends on every entry of `y`.
fn project(g: &mut Graph, y: Var, proj: &Tensor) -> Result<Var> {
    let p = g.constant(proj.clone());
    let z = g.matmul(y, p)?;
    g.sum_of_squares(z)
}

fn away_from_zero(mut t: Tensor, margin: f64) -> Tensor {
    for v in t.data_mut() {
        if v.abs() < margin {
            *v = if *v < 0.0 { -margin - v.abs() } else { margin + *v };
        }
    }
    t
}
