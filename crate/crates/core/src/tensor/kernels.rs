//! Raw numeric kernels shared by the differentiation graph and the
//! graph-free evaluation paths, so both produce identical bits.

use super::Tensor;

/// `a (n x k) * b (k x m)`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Tensor {
    let (n, k, m) = (a.rows(), a.cols(), b.cols());
    debug_assert_eq!(b.rows(), k);
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let orow = &mut out[i * m..(i + 1) * m];
        for p in 0..k {
            let av = ad[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &bd[p * m..(p + 1) * m];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Tensor::matrix(n, m, out).expect("matmul shape")
}

/// `a (n x m) * b^T` where `b` is `k x m`.
pub fn matmul_nt(a: &Tensor, b: &Tensor) -> Tensor {
    let (n, m, k) = (a.rows(), a.cols(), b.rows());
    debug_assert_eq!(b.cols(), m);
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![0.0; n * k];
    for i in 0..n {
        let arow = &ad[i * m..(i + 1) * m];
        for j in 0..k {
            let brow = &bd[j * m..(j + 1) * m];
            out[i * k + j] = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    Tensor::matrix(n, k, out).expect("matmul_nt shape")
}

/// `a^T * b` where `a` is `n x k` and `b` is `n x m`.
pub fn matmul_tn(a: &Tensor, b: &Tensor) -> Tensor {
    let (n, k, m) = (a.rows(), a.cols(), b.cols());
    debug_assert_eq!(b.rows(), n);
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![0.0; k * m];
    for i in 0..n {
        let brow = &bd[i * m..(i + 1) * m];
        for p in 0..k {
            let av = ad[i * k + p];
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[p * m..(p + 1) * m];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Tensor::matrix(k, m, out).expect("matmul_tn shape")
}

pub fn add(a: &Tensor, b: &Tensor) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
    Tensor::new(a.shape().to_vec(), data).expect("add shape")
}

/// Adds a length-`m` bias to every row of an `n x m` matrix.
pub fn add_bias(x: &Tensor, bias: &Tensor) -> Tensor {
    let m = x.cols();
    let mut out = x.clone();
    for row in out.data_mut().chunks_mut(m) {
        for (o, b) in row.iter_mut().zip(bias.data()) {
            *o += b;
        }
    }
    out
}

pub fn relu(x: &Tensor) -> Tensor {
    let data = x
        .data()
        .iter()
        .map(|&v| if v > 0.0 { v } else { 0.0 })
        .collect();
    Tensor::new(x.shape().to_vec(), data).expect("relu shape")
}

pub fn scale(x: &Tensor, c: f64) -> Tensor {
    let data = x.data().iter().map(|v| v * c).collect();
    Tensor::new(x.shape().to_vec(), data).expect("scale shape")
}

pub fn sum_of_squares(x: &Tensor) -> f64 {
    x.data().iter().map(|v| v * v).sum()
}

pub fn mean(x: &Tensor) -> f64 {
    x.data().iter().sum::<f64>() / x.numel() as f64
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &Tensor) -> Tensor {
    let c = logits.cols();
    let mut out = logits.clone();
    for row in out.data_mut().chunks_mut(c) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            z += *v;
        }
        for v in row.iter_mut() {
            *v /= z;
        }
    }
    out
}

/// Per-row cross-entropy `-log softmax(logits)[label]`, computed by log-sum-exp.
pub fn cross_entropy_rows(logits: &Tensor, labels: &[usize]) -> Vec<f64> {
    let c = logits.cols();
    logits
        .data()
        .chunks(c)
        .zip(labels)
        .map(|(row, &y)| {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            lse - row[y]
        })
        .collect()
}

/// Mean cross-entropy over the rows.
pub fn cross_entropy(logits: &Tensor, labels: &[usize]) -> f64 {
    let per_row = cross_entropy_rows(logits, labels);
    per_row.iter().sum::<f64>() / per_row.len() as f64
}

/// Index of the largest entry of each row; ties go to the lowest index.
pub fn argmax_rows(x: &Tensor) -> Vec<usize> {
    let c = x.cols();
    x.data()
        .chunks(c)
        .map(|row| {
            let mut best = 0;
            for j in 1..c {
                if row[j] > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Fraction of rows whose argmax equals the label.
pub fn accuracy(logits: &Tensor, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = argmax_rows(logits)
        .iter()
        .zip(labels)
        .filter(|(p, y)| p == y)
        .count();
    hits as f64 / labels.len() as f64
}

/// Squared Euclidean norm of each row.
pub fn row_sq_norms(x: &Tensor) -> Vec<f64> {
    x.data()
        .chunks(x.cols())
        .map(|r| r.iter().map(|v| v * v).sum())
        .collect()
}

/// Mean over rows of `||a_i - b_i||^2`.
pub fn mean_sq_distance(a: &Tensor, b: &Tensor) -> f64 {
    let c = a.cols();
    let total: f64 = a
        .data()
        .chunks(c)
        .zip(b.data().chunks(c))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>())
        .sum();
    total / a.rows() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transposed_products_agree_with_explicit_transpose() {
        let a = Tensor::matrix(2, 3, vec![1.0, -2.0, 0.5, 3.0, 0.0, 4.0]).unwrap();
        let b = Tensor::matrix(4, 3, (0..12).map(|v| v as f64 * 0.3 - 1.0).collect()).unwrap();
        let nt = matmul_nt(&a, &b);
        let explicit = matmul(&a, &b.transpose());
        assert!(nt.max_abs_diff(&explicit) < 1e-14);

        let c = Tensor::matrix(2, 4, vec![1.0, 2.0, 3.0, 4.0, -1.0, 0.0, 2.0, 0.5]).unwrap();
        let tn = matmul_tn(&a, &c);
        let explicit = matmul(&a.transpose(), &c);
        assert!(tn.max_abs_diff(&explicit) < 1e-14);
    }

    #[test]
    fn argmax_breaks_ties_low() {
        let x = Tensor::matrix(2, 3, vec![1.0, 1.0, 0.0, 0.0, 2.0, 2.0]).unwrap();
        assert_eq!(argmax_rows(&x), vec![0, 1]);
    }

    #[test]
    fn cross_entropy_is_stable_for_large_logits() {
        let x = Tensor::matrix(1, 2, vec![1000.0, 0.0]).unwrap();
        let ce = cross_entropy(&x, &[0]);
        assert!(ce.abs() < 1e-300 || ce == 0.0);
        let ce = cross_entropy(&x, &[1]);
        assert!((ce - 1000.0).abs() < 1e-9);
    }
}
