use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::symmetric_eigen;

/// Gauss–Hermite nodes and weights by Golub–Welsch, weights normalized to sum to one so
/// that `E[f(X)] ≈ Σ wᵢ f(√2·σ·tᵢ)` for X ~ N(0, σ²).
pub fn gauss_hermite(order: usize) -> (Vec<f64>, Vec<f64>) {
    let n = order.max(1);
    let mut jacobi = vec![0.0; n * n];
    for k in 1..n {
        let b = libm::sqrt(k as f64 / 2.0);
        jacobi[(k - 1) * n + k] = b;
        jacobi[k * n + k - 1] = b;
    }
    let (vals, vecs) = symmetric_eigen(&jacobi, n);
    let mut pairs: Vec<(f64, f64)> = (0..n).map(|k| (vals[k], vecs[k] * vecs[k])).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_of_standard_normal() {
        let (t, w) = gauss_hermite(10);
        let moment = |p: i32| -> f64 {
            t.iter()
                .zip(&w)
                .map(|(x, wi)| wi * (core::f64::consts::SQRT_2 * x).powi(p))
                .sum()
        };
        assert!((moment(0) - 1.0).abs() < 1e-13);
        assert!(moment(1).abs() < 1e-13);
        assert!((moment(2) - 1.0).abs() < 1e-12);
        assert!((moment(4) - 3.0).abs() < 1e-11);
        assert!((moment(6) - 15.0).abs() < 1e-10);
    }
}
