//! Small dense linear algebra: row-major matrices, a handful of unknowns at most.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Solve `a · x = b` in place for complex `a` (n×n row-major) with partial pivoting.
/// `b` holds `nrhs` right-hand sides as an n×nrhs row-major block and is overwritten by `x`.
pub fn solve_complex(
    a: &mut [Complex64],
    b: &mut [Complex64],
    n: usize,
    nrhs: usize,
) -> Result<()> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n * nrhs);
    let scale = a.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    if scale == 0.0 {
        return Err(Error::Singular);
    }
    for col in 0..n {
        let (pivot, pmag) =
            (col..n)
                .map(|r| (r, a[r * n + col].norm()))
                .fold(
                    (col, -1.0),
                    |best, cur| if cur.1 > best.1 { cur } else { best },
                );
        if pmag <= scale * 1e-300 {
            return Err(Error::Singular);
        }
        if pivot != col {
            for k in 0..n {
                a.swap(pivot * n + k, col * n + k);
            }
            for k in 0..nrhs {
                b.swap(pivot * nrhs + k, col * nrhs + k);
            }
        }
        let inv = a[col * n + col].inv();
        for r in (col + 1)..n {
            let f = a[r * n + col] * inv;
            if f == Complex64::new(0.0, 0.0) {
                continue;
            }
            for k in col..n {
                let v = a[col * n + k];
                a[r * n + k] -= f * v;
            }
            for k in 0..nrhs {
                let v = b[col * nrhs + k];
                b[r * nrhs + k] -= f * v;
            }
        }
    }
    for col in (0..n).rev() {
        let inv = a[col * n + col].inv();
        for k in 0..nrhs {
            let mut acc = b[col * nrhs + k];
            for j in (col + 1)..n {
                acc -= a[col * n + j] * b[j * nrhs + k];
            }
            b[col * nrhs + k] = acc * inv;
        }
    }
    Ok(())
}

/// Solve a real system by Gaussian elimination with partial pivoting.
pub fn solve_real(a: &[f64], b: &[f64], n: usize) -> Result<Vec<f64>> {
    let mut m = a.to_vec();
    let mut x = b.to_vec();
    let scale = m.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    if scale == 0.0 {
        return Err(Error::Singular);
    }
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i * n + col].abs().total_cmp(&m[j * n + col].abs()))
            .unwrap_or(col);
        if m[pivot * n + col].abs() <= scale * 1e-15 {
            return Err(Error::Singular);
        }
        if pivot != col {
            for k in 0..n {
                m.swap(pivot * n + k, col * n + k);
            }
            x.swap(pivot, col);
        }
        for r in (col + 1)..n {
            let f = m[r * n + col] / m[col * n + col];
            for k in col..n {
                m[r * n + k] -= f * m[col * n + k];
            }
            x[r] -= f * x[col];
        }
    }
    for col in (0..n).rev() {
        let mut acc = x[col];
        for j in (col + 1)..n {
            acc -= m[col * n + j] * x[j];
        }
        x[col] = acc / m[col * n + col];
    }
    Ok(x)
}

/// Eigen-decomposition of a real symmetric matrix by cyclic Jacobi rotations.
/// Returns `(eigenvalues, eigenvectors)` with eigenvectors stored as columns (row-major n×n).
pub fn symmetric_eigen(a: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut m = a.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i * n + j] * m[i * n + j])
            .sum();
        let diag: f64 = (0..n).map(|i| m[i * n + i] * m[i * n + i]).sum();
        if off <= 1e-30 * diag || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + libm::sqrt(theta * theta + 1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| m[i * n + i]).collect(), v)
}

/// Moore–Penrose pseudo-inverse of a symmetric positive semidefinite matrix.
/// Eigenvalues below `rcond · λ_max` are treated as zero. Also returns the numerical rank.
pub fn pinv_symmetric(a: &[f64], n: usize, rcond: f64) -> (Vec<f64>, usize) {
    let (vals, vecs) = symmetric_eigen(a, n);
    let vmax = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut out = vec![0.0; n * n];
    let mut rank = 0;
    for (k, &lam) in vals.iter().enumerate() {
        if vmax == 0.0 || lam <= rcond * vmax {
            continue;
        }
        rank += 1;
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] += vecs[i * n + k] * vecs[j * n + k] / lam;
            }
        }
    }
    (out, rank)
}
