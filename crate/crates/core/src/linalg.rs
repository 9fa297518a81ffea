//! Small dense linear algebra for d x d coefficient matrices.
//!
//! Matrices are row-major `&[f64]` slices of length d*d. The dimensions in
//! play are tiny (state dimensions of the catalog models), so everything is
//! written directly rather than pulling in a matrix crate.

use crate::{Error, Result};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a)
}

pub fn norm(a: &[f64]) -> f64 {
    norm2(a).sqrt()
}

/// y = A x for row-major A (d x d).
pub fn matvec(a: &[f64], x: &[f64], y: &mut [f64]) {
    let d = x.len();
    debug_assert_eq!(a.len(), d * d);
    for i in 0..d {
        y[i] = dot(&a[i * d..(i + 1) * d], x);
    }
}

/// C = A A^T (row-major, d x d).
pub fn a_at(a: &[f64], d: usize, c: &mut [f64]) {
    for i in 0..d {
        for j in 0..d {
            let mut s = 0.0;
            for k in 0..d {
                s += a[i * d + k] * a[j * d + k];
            }
            c[i * d + j] = s;
        }
    }
}

/// C = A^T A (row-major, d x d).
pub fn at_a(a: &[f64], d: usize, c: &mut [f64]) {
    for i in 0..d {
        for j in 0..d {
            let mut s = 0.0;
            for k in 0..d {
                s += a[k * d + i] * a[k * d + j];
            }
            c[i * d + j] = s;
        }
    }
}

pub fn trace(a: &[f64], d: usize) -> f64 {
    (0..d).map(|i| a[i * d + i]).sum()
}

/// Largest eigenvalue of a symmetric matrix by cyclic Jacobi rotations.
///
/// Sweeps annihilate off-diagonal entries in row order until the
/// off-diagonal Frobenius norm drops below `tol` (relative to the matrix
/// scale). Foolproof for real symmetric input; the matrices here are at
/// most a handful of rows.
pub fn sym_eigen_max(mat: &[f64], d: usize, tol: f64) -> f64 {
    debug_assert_eq!(mat.len(), d * d);
    if d == 1 {
        return mat[0];
    }
    let mut a = mat.to_vec();
    let scale = a.iter().map(|x| x.abs()).fold(0.0, f64::max).max(1.0);
    for _sweep in 0..64 {
        let mut off = 0.0;
        for i in 0..d {
            for j in (i + 1)..d {
                off += a[i * d + j] * a[i * d + j];
            }
        }
        if off.sqrt() <= tol * scale {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = a[p * d + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * d + p];
                let aqq = a[q * d + q];
                let theta = (aqq - app) / (2.0 * apq);
                // stable tangent of the rotation angle
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let akp = a[k * d + p];
                    let akq = a[k * d + q];
                    a[k * d + p] = c * akp - s * akq;
                    a[k * d + q] = s * akp + c * akq;
                }
                for k in 0..d {
                    let apk = a[p * d + k];
                    let aqk = a[q * d + k];
                    a[p * d + k] = c * apk - s * aqk;
                    a[q * d + k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..d)
        .map(|i| a[i * d + i])
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Cholesky factorization of a symmetric positive definite matrix.
///
/// Returns the lower factor L with A = L L^T, or an error naming the pivot
/// that failed (the SPD check used by the Laplace-bound and exponential
/// recursive-control checkers).
pub fn cholesky(mat: &[f64], d: usize) -> Result<Vec<f64>> {
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut s = mat[i * d + j];
            for k in 0..j {
                s -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if s <= 0.0 {
                    return Err(Error::input(format!(
                        "matrix not positive definite (pivot {i} = {s:e})"
                    )));
                }
                l[i * d + i] = s.sqrt();
            } else {
                l[i * d + j] = s / l[j * d + j];
            }
        }
    }
    Ok(l)
}

/// log det of an SPD matrix via its Cholesky factor.
pub fn spd_log_det(mat: &[f64], d: usize) -> Result<f64> {
    let l = cholesky(mat, d)?;
    Ok((0..d).map(|i| 2.0 * l[i * d + i].ln()).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_matches_closed_form_2x2() {
        // eigenvalues of [[2,1],[1,2]] are 1 and 3
        let a = [2.0, 1.0, 1.0, 2.0];
        let lmax = sym_eigen_max(&a, 2, 1e-12);
        assert!((lmax - 3.0).abs() < 1e-12);
    }

    #[test]
    fn jacobi_3x3_diagonal_dominant() {
        let a = [4.0, 0.1, 0.0, 0.1, 3.0, 0.2, 0.0, 0.2, 1.0];
        let lmax = sym_eigen_max(&a, 3, 1e-12);
        // characteristic polynomial root computed independently by bisection
        let f = |x: f64| (4.0 - x) * ((3.0 - x) * (1.0 - x) - 0.04) - 0.1 * (0.1 * (1.0 - x));
        let (mut lo, mut hi) = (3.9, 4.2);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if f(lo) * f(mid) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        assert!((lmax - 0.5 * (lo + hi)).abs() < 1e-10);
    }

    #[test]
    fn cholesky_log_det_matches_direct_2x2() {
        let a = [2.0, 0.3, 0.3, 1.5];
        let det: f64 = 2.0 * 1.5 - 0.09;
        assert!((spd_log_det(&a, 2).unwrap() - det.ln()).abs() < 1e-13);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = [1.0, 2.0, 2.0, 1.0];
        assert!(cholesky(&a, 2).is_err());
    }
}
