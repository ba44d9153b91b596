//! Dense helpers with a fixed summation order.
//!
//! Products always accumulate over the inner index in ascending order so
//! results are reproducible bit for bit regardless of execution mode.

use ndarray::{Array2, ArrayView2};

/// `a · b`, summing the inner dimension in ascending order.
pub fn matmul(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    let (n, k) = a.dim();
    let (k2, m) = b.dim();
    assert_eq!(k, k2, "inner dimensions differ");
    let mut out = Array2::<f64>::zeros((n, m));
    for i in 0..n {
        for j in 0..m {
            let mut acc = 0.0;
            for l in 0..k {
                acc += a[[i, l]] * b[[l, j]];
            }
            out[[i, j]] = acc;
        }
    }
    out
}

/// `aᵀ · b` without materializing the transpose.
pub fn matmul_tn(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    matmul(a.t(), b)
}

/// `a · bᵀ` without materializing the transpose.
pub fn matmul_nt(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    matmul(a, b.t())
}

pub fn frobenius_sq(a: ArrayView2<f64>) -> f64 {
    a.iter().map(|x| x * x).sum()
}

pub fn l1(a: ArrayView2<f64>) -> f64 {
    a.iter().map(|x| x.abs()).sum()
}

pub fn min_entry(a: ArrayView2<f64>) -> f64 {
    a.iter().copied().fold(f64::INFINITY, f64::min)
}

pub fn max_abs(a: ArrayView2<f64>) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn small_product() {
        let w = array![[1.0, 2.0], [3.0, 4.0]];
        let h = array![[5.0, 6.0], [7.0, 8.0]];
        assert_eq!(matmul(w.view(), h.view()), array![[19.0, 22.0], [43.0, 50.0]]);
        assert_eq!(matmul_tn(w.view(), h.view()), matmul(w.t().to_owned().view(), h.view()));
        assert_eq!(matmul_nt(w.view(), h.view()), matmul(w.view(), h.t().to_owned().view()));
    }
}
