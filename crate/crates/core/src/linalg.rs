//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{config_err, Result};

pub type Matrix = DMatrix<f64>;

pub const POWER_TOL: f64 = 1e-10;
pub const POWER_MAX_ITERS: usize = 10_000;

/// Largest-magnitude eigenvalue of a symmetric matrix by power iteration.
///
/// Stops when the Rayleigh quotient changes by less than `1e-10` relative,
/// or after `10^4` iterations.
pub fn spectral_norm_sym(m: &Matrix) -> f64 {
    let d = m.nrows();
    if d == 0 {
        return 0.0;
    }
    // deterministic start with no special alignment to coordinate axes
    let mut v = nalgebra::DVector::from_fn(d, |j, _| 1.0 + 0.5 * ((j as f64 + 1.0) * 0.7548776662).fract());
    v.normalize_mut();
    let mut lambda = 0.0f64;
    for _ in 0..POWER_MAX_ITERS {
        let w = m * &v;
        let next = v.dot(&w);
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        v = w / norm;
        if (next - lambda).abs() <= POWER_TOL * next.abs().max(f64::MIN_POSITIVE) {
            lambda = next;
            break;
        }
        lambda = next;
    }
    // Rayleigh quotient tracks the dominant eigenvalue; for a dominant negative
    // eigenvalue the iterate flips sign each step but the quotient is stable.
    lambda.abs().max((m * &v).norm())
}

pub fn check_symmetric(m: &Matrix, tol: f64, what: &str) -> Result<()> {
    if !m.is_square() {
        return Err(config_err(format!("{what} must be square, got {}x{}", m.nrows(), m.ncols())));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(config_err(format!("{what} has non-finite entries")));
    }
    let d = m.nrows();
    for i in 0..d {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > tol {
                return Err(config_err(format!(
                    "{what} is not symmetric at ({i},{j}): {} vs {}",
                    m[(i, j)],
                    m[(j, i)]
                )));
            }
        }
    }
    Ok(())
}

/// Accepts `m` iff its smallest eigenvalue is at least `-1e-8`, certified by
/// a Cholesky factorization of `m + 1e-8 I`.
pub fn check_psd(m: &Matrix, what: &str) -> Result<()> {
    let shifted = m + Matrix::identity(m.nrows(), m.ncols()) * 1e-8;
    if nalgebra::Cholesky::new(shifted).is_none() {
        return Err(config_err(format!("{what} is not positive semidefinite")));
    }
    Ok(())
}

pub fn check_orthogonal(a: &Matrix, tol: f64) -> Result<()> {
    if !a.is_square() {
        return Err(config_err("orthogonal matrix must be square"));
    }
    let gram = a.transpose() * a;
    let dev = (gram - Matrix::identity(a.nrows(), a.ncols())).abs().max();
    if dev > tol {
        return Err(config_err(format!("matrix is not orthogonal (max |AᵀA - I| = {dev:e})")));
    }
    Ok(())
}

/// Orthogonal factor of a QR decomposition with the signs of `R`'s diagonal
/// made positive, which makes the factor unique.
pub fn orthogonal_factor(m: Matrix) -> Matrix {
    let qr = m.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..q.ncols() {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Random orthogonal matrix from the QR factor of a seeded Gaussian.
///
/// With `mixing = None` the Gaussian matrix is used as is (Haar measure).
/// With `Some(k)` the factor of `I + k G` is returned: a random rotation
/// close to the identity whose entries are all nonzero.
pub fn random_orthogonal<R: Rng + ?Sized>(d: usize, mixing: Option<f64>, rng: &mut R) -> Matrix {
    // column-major fill: consumption order of draws is part of the contract
    let g = Matrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let base = match mixing {
        None => g,
        Some(k) => Matrix::identity(d, d) + g * k,
    };
    orthogonal_factor(base)
}

/// `n` points `lo·(hi/lo)^{j/(n-1)}`.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|j| {
            if j == 0 {
                lo
            } else if j == n - 1 {
                hi
            } else {
                (a + (b - a) * j as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

/// `y = M x` for a row slice `x`.
pub fn mat_vec(m: &Matrix, x: &[f64], out: &mut [f64]) {
    let d = m.nrows();
    for (r, o) in out.iter_mut().enumerate().take(d) {
        let mut s = 0.0;
        for (c, xc) in x.iter().enumerate() {
            s += m[(r, c)] * xc;
        }
        *o = s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{stream_rng, RngStream};

    #[test]
    fn power_iteration_matches_closed_form() {
        let m = Matrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        assert!((spectral_norm_sym(&m) - 3.0).abs() < 1e-9);
        let m = Matrix::from_row_slice(2, 2, &[-5.0, 0.0, 0.0, 1.0]);
        assert!((spectral_norm_sym(&m) - 5.0).abs() < 1e-9);
    }

    #[test]
    fn haar_and_mixing_are_orthogonal() {
        let mut rng = stream_rng(3, RngStream::ProblemData);
        let q = random_orthogonal(12, None, &mut rng);
        check_orthogonal(&q, 1e-12).unwrap();
        let q = random_orthogonal(12, Some(0.01), &mut rng);
        check_orthogonal(&q, 1e-12).unwrap();
        assert!(q.iter().all(|v| *v != 0.0));
        assert!((q.clone() - Matrix::identity(12, 12)).abs().max() < 0.2);
    }

    #[test]
    fn psd_and_symmetry_checks() {
        let ok = Matrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        check_symmetric(&ok, 1e-10, "P").unwrap();
        check_psd(&ok, "P").unwrap();
        let indefinite = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(check_psd(&indefinite, "P").is_err());
        let asym = Matrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(check_symmetric(&asym, 1e-10, "P").is_err());
    }

    #[test]
    fn log_spacing_endpoints() {
        let v = log_spaced(1.0, 1000.0, 4);
        assert_eq!(v[0], 1.0);
        assert_eq!(v[3], 1000.0);
        assert!((v[1] - 10.0).abs() < 1e-12 && (v[2] - 100.0).abs() < 1e-10);
    }
}
