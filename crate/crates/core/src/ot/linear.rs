//! Linear softmax classifiers and the separability functional
//! `Z(mu) = min_F mean CE(F, mu)` over affine `F`.

use crate::tensor::{kernels, Tensor};

/// Gradient descent with Barzilai-Borwein trial steps and Armijo
/// backtracking. Every accepted step strictly decreases `f`, so the returned
/// value never exceeds `f(x0)`. Stops when `|grad| < tol`, after `max_iters`
/// steps, or when no decreasing step can be found.
pub fn minimize<F>(x: Vec<f64>, f: F, max_iters: usize, tol: f64) -> (Vec<f64>, f64)
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    minimize_projected(x, f, |_| {}, max_iters, tol)
}

/// [`minimize`] over a convex set given by its projection; the stopping
/// rule uses the projected-gradient residual `|x - P(x - grad)|`.
pub fn minimize_projected<F, P>(x: Vec<f64>, mut f: F, project: P, max_iters: usize, tol: f64) -> (Vec<f64>, f64)
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
    P: Fn(&mut [f64]),
{
    let mut x = x;
    project(&mut x);
    let (mut fx, mut g) = f(&x);
    let mut step = 1.0;
    let trial = |x: &[f64], g: &[f64], t: f64| {
        let mut c: Vec<f64> = x.iter().zip(g).map(|(a, b)| a - t * b).collect();
        project(&mut c);
        c
    };
    for _ in 0..max_iters {
        if !fx.is_finite() {
            break;
        }
        let unit = trial(&x, &g, 1.0);
        let residual: f64 = unit.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if residual < tol {
            break;
        }
        let mut t = step;
        let mut accepted = None;
        for _ in 0..80 {
            let cand = trial(&x, &g, t);
            let moved: f64 = cand.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum();
            let (fc, gc) = f(&cand);
            if fc.is_finite() && fc <= fx - 1e-4 * moved / t && fc < fx {
                accepted = Some((cand, fc, gc));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, fc, gc)) = accepted else { break };
        // BB1 step from the accepted move
        let s: Vec<f64> = cand.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = gc.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&yv).map(|(a, b)| a * b).sum();
        let ss: f64 = s.iter().map(|v| v * v).sum();
        step = if sy > 0.0 { (ss / sy).clamp(1e-12, 1e12) } else { (2.0 * t).min(1e12) };
        x = cand;
        fx = fc;
        g = gc;
    }
    (x, fx)
}

/// Projects the leading `len` coordinates of `v` onto the Euclidean ball of
/// `radius`, leaving the rest alone.
pub(crate) fn project_ball(v: &mut [f64], len: usize, radius: Option<f64>) {
    if let Some(r) = radius {
        let norm = v[..len].iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > r {
            let c = r / norm;
            v[..len].iter_mut().for_each(|a| *a *= c);
        }
    }
}

/// Settings of a classifier fit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitOptions {
    pub max_iters: usize,
    /// Projected-gradient tolerance.
    pub tol: f64,
    /// Frobenius bound on the weight matrix; `None` fits over all of it.
    pub radius: Option<f64>,
}

/// Affine classifier `y W + b`, `W` stored `d x C`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearClassifier {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl LinearClassifier {
    pub fn zeros(dim: usize, classes: usize) -> Self {
        LinearClassifier {
            weight: Tensor::zeros(&[dim, classes]),
            bias: Tensor::zeros(&[classes]),
        }
    }

    pub fn dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn classes(&self) -> usize {
        self.weight.cols()
    }

    pub fn logits(&self, y: &Tensor) -> Tensor {
        kernels::add_bias(&kernels::matmul(y, &self.weight), &self.bias)
    }

    pub fn loss(&self, y: &Tensor, labels: &[usize]) -> f64 {
        kernels::cross_entropy(&self.logits(y), labels)
    }

    /// Mean cross-entropy with gradients w.r.t. `W`, `b` and the points.
    pub fn loss_and_grads(&self, y: &Tensor, labels: &[usize]) -> (f64, Tensor, Tensor, Tensor) {
        let logits = self.logits(y);
        let loss = kernels::cross_entropy(&logits, labels);
        let n = y.rows();
        let mut dlogits = kernels::softmax_rows(&logits);
        let c = self.classes();
        for (i, &l) in labels.iter().enumerate() {
            dlogits.data_mut()[i * c + l] -= 1.0;
        }
        let dlogits = kernels::scale(&dlogits, 1.0 / n as f64);
        let dw = kernels::matmul_tn(y, &dlogits);
        let mut db = vec![0.0; c];
        for i in 0..n {
            for (acc, v) in db.iter_mut().zip(dlogits.row(i)) {
                *acc += v;
            }
        }
        let dy = kernels::matmul_nt(&dlogits, &self.weight);
        (loss, dw, Tensor::vector(db), dy)
    }

    fn flat(&self) -> Vec<f64> {
        let mut v = self.weight.data().to_vec();
        v.extend_from_slice(self.bias.data());
        v
    }

    fn from_flat(dim: usize, classes: usize, v: &[f64]) -> Self {
        LinearClassifier {
            weight: Tensor::matrix(dim, classes, v[..dim * classes].to_vec()).unwrap(),
            bias: Tensor::vector(v[dim * classes..].to_vec()),
        }
    }
}

/// Fits a linear classifier to `(y, labels)` starting from `init`
/// (projected into the admissible set first). Returns the classifier and its
/// mean cross-entropy.
pub fn fit_linear(y: &Tensor, labels: &[usize], init: &LinearClassifier, opts: FitOptions) -> (LinearClassifier, f64) {
    let (d, c) = (init.dim(), init.classes());
    let (v, loss) = minimize_projected(
        init.flat(),
        |v| {
            let f = LinearClassifier::from_flat(d, c, v);
            let (l, dw, db, _) = f.loss_and_grads(y, labels);
            let mut g = dw.into_data();
            g.extend_from_slice(db.data());
            (l, g)
        },
        |v| project_ball(v, d * c, opts.radius),
        opts.max_iters,
        opts.tol,
    );
    (LinearClassifier::from_flat(d, c, &v), loss)
}

/// Estimate of `Z`: the better of a fit from zero and, when given, a fit
/// warm-started from `warm`. Returns the winning classifier and its loss.
pub fn separability(
    y: &Tensor,
    labels: &[usize],
    classes: usize,
    warm: Option<&LinearClassifier>,
    opts: FitOptions,
) -> (LinearClassifier, f64) {
    let cold = fit_linear(y, labels, &LinearClassifier::zeros(y.cols(), classes), opts);
    match warm {
        Some(w) => {
            let hot = fit_linear(y, labels, w, opts);
            if hot.1 < cold.1 {
                hot
            } else {
                cold
            }
        }
        None => cold,
    }
}
