use rand::Rng;
use rand_distr::StandardNormal;

use super::Tensor;
use crate::error::{Error, Result};

/// Matrix of i.i.d. standard normal draws.
pub fn gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    Tensor::matrix(rows, cols, data).expect("gaussian shape")
}

/// `gain * Q`, with `Q` the orthonormal factor of a Gaussian matrix.
///
/// For `rows >= cols` the columns of `Q` are orthonormal; otherwise its rows
/// are. The Householder QR is sign-corrected so that `R` has a positive
/// diagonal, which makes the factor a deterministic function of the draw.
pub fn orthogonal_init<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    gain: f64,
    rng: &mut R,
) -> Result<Tensor> {
    if rows == 0 || cols == 0 {
        return Err(Error::Config(format!(
            "orthogonal init needs positive extents, got {rows}x{cols}"
        )));
    }
    if !(gain > 0.0 && gain.is_finite()) {
        return Err(Error::Config(format!("init gain must be positive, got {gain}")));
    }
    let a = gaussian(rows, cols, rng);
    let q = if rows >= cols {
        thin_q(&a)
    } else {
        thin_q(&a.transpose()).transpose()
    };
    let data = q.data().iter().map(|v| v * gain).collect();
    Tensor::matrix(rows, cols, data)
}

/// Thin Q factor (`m x n`, `m >= n`) of a Householder QR, with `diag(R) > 0`.
fn thin_q(a: &Tensor) -> Tensor {
    let (m, n) = (a.rows(), a.cols());
    let mut r: Vec<f64> = a.data().to_vec();
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut signs = vec![1.0; n];

    for k in 0..n {
        let norm: f64 = (k..m).map(|i| r[i * n + k].powi(2)).sum::<f64>().sqrt();
        let mut v = vec![0.0; m];
        if norm == 0.0 {
            reflectors.push(v);
            continue;
        }
        let alpha = if r[k * n + k] >= 0.0 { -norm } else { norm };
        for i in k..m {
            v[i] = r[i * n + k];
        }
        v[k] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 > 0.0 {
            for j in k..n {
                let dot: f64 = (k..m).map(|i| v[i] * r[i * n + j]).sum();
                let f = 2.0 * dot / vnorm2;
                for i in k..m {
                    r[i * n + j] -= f * v[i];
                }
            }
        }
        // R[k][k] == alpha now
        signs[k] = if r[k * n + k] < 0.0 { -1.0 } else { 1.0 };
        reflectors.push(v);
    }

    // Q = H_0 H_1 ... H_{n-1} applied to the first n columns of the identity.
    let mut q = vec![0.0; m * n];
    for j in 0..n {
        q[j * n + j] = 1.0;
    }
    for k in (0..n).rev() {
        let v = &reflectors[k];
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        for j in 0..n {
            let dot: f64 = (k..m).map(|i| v[i] * q[i * n + j]).sum();
            let f = 2.0 * dot / vnorm2;
            for i in k..m {
                q[i * n + j] -= f * v[i];
            }
        }
    }
    // flip columns so that diag(R) is positive
    for i in 0..m {
        for j in 0..n {
            q[i * n + j] *= signs[j];
        }
    }
    Tensor::matrix(m, n, q).unwrap()
}
