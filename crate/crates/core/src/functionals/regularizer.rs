//! Smoothed, rotated ℓ1 regularizer `V_ε(x) = Σ_j r_j sqrt((Ax)_j² + ε²)`.

use std::sync::Arc;

use super::{PointPotential, PotentialEnergy};
use crate::error::{config_err, Result};
use crate::linalg::{check_orthogonal, mat_vec, Matrix};

#[derive(Debug, Clone)]
pub struct SmoothedL1 {
    weights: Vec<f64>,
    rotation: Matrix,
    eps: f64,
}

/// Builds `Ψ[μ] = ∫ V_ε dμ`. `A` must be orthogonal (`AᵀA = I` to 1e-8).
pub fn smoothed_l1_potential(weights: Vec<f64>, rotation: Matrix, eps: f64) -> Result<PotentialEnergy> {
    Ok(PotentialEnergy::new(Arc::new(SmoothedL1::new(weights, rotation, eps)?)))
}

impl SmoothedL1 {
    pub fn new(weights: Vec<f64>, rotation: Matrix, eps: f64) -> Result<Self> {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(config_err(format!("smoothing eps must be > 0, got {eps}")));
        }
        check_orthogonal(&rotation, 1e-8)?;
        if weights.len() != rotation.nrows() {
            return Err(config_err("regularizer weights and rotation differ in dimension"));
        }
        if weights.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) {
            return Err(config_err("regularizer weights must be finite and >= 0"));
        }
        Ok(Self { weights, rotation, eps })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn rotation(&self) -> &Matrix {
        &self.rotation
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    fn rotate(&self, x: &[f64]) -> Vec<f64> {
        let mut u = vec![0.0; x.len()];
        mat_vec(&self.rotation, x, &mut u);
        u
    }

    /// `r_j u_j / sqrt(u_j² + ε²)` for `u = Ax`.
    fn slopes(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(&self.weights)
            .map(|(uj, r)| r * uj / uj.hypot(self.eps))
            .collect()
    }
}

impl PointPotential for SmoothedL1 {
    fn name(&self) -> String {
        "smoothed_l1".into()
    }

    fn dim(&self) -> usize {
        self.weights.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let u = self.rotate(x);
        u.iter().zip(&self.weights).map(|(uj, r)| r * uj.hypot(self.eps)).sum()
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let w = self.slopes(&self.rotate(x));
        // Aᵀ w
        for (i, o) in out.iter_mut().enumerate() {
            *o = w.iter().enumerate().fold(0.0, |acc, (j, wj)| acc + self.rotation[(j, i)] * wj);
        }
    }

    fn partial(&self, x: &[f64], i: usize) -> f64 {
        let w = self.slopes(&self.rotate(x));
        w.iter().enumerate().fold(0.0, |acc, (j, wj)| acc + self.rotation[(j, i)] * wj)
    }

    /// `Aᵀ diag(r_j ε² / (u_j² + ε²)^{3/2}) A`.
    fn hessian(&self, x: &[f64]) -> Matrix {
        let u = self.rotate(x);
        let e2 = self.eps * self.eps;
        let curv: Vec<f64> = u
            .iter()
            .zip(&self.weights)
            .map(|(uj, r)| r * e2 / (uj * uj + e2).powf(1.5))
            .collect();
        let d = self.dim();
        let mut h = Matrix::zeros(d, d);
        for a in 0..d {
            for b in a..d {
                let mut s = 0.0;
                for (j, c) in curv.iter().enumerate() {
                    s += self.rotation[(j, a)] * c * self.rotation[(j, b)];
                }
                h[(a, b)] = s;
                h[(b, a)] = s;
            }
        }
        h
    }

    fn coordinate_line<'a>(&'a self, x: &[f64], i: usize) -> Box<dyn Fn(f64) -> [f64; 3] + 'a> {
        let u = self.rotate(x);
        let e2 = self.eps * self.eps;
        Box::new(move |s| {
            let (mut v, mut d1, mut d2) = (0.0, 0.0, 0.0);
            for (j, (uj, r)) in u.iter().zip(&self.weights).enumerate() {
                let a = self.rotation[(j, i)];
                let t = uj + s * a;
                let root = t.hypot(self.eps);
                v += r * root;
                d1 += r * a * t / root;
                d2 += r * a * a * e2 / (root * root * root);
            }
            [v, d1, d2]
        })
    }

    /// `H = ε⁻¹ max_j r_j`.
    fn global_smoothness(&self) -> f64 {
        self.weights.iter().cloned().fold(0.0, f64::max) / self.eps
    }

    /// `H_i = ε⁻¹ Σ_j r_j A_ji²`.
    fn coordinate_smoothness(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|i| {
                self.weights
                    .iter()
                    .enumerate()
                    .fold(0.0, |acc, (j, r)| acc + r * self.rotation[(j, i)].powi(2))
                    / self.eps
            })
            .collect()
    }

    /// `ε Σ_j r_j`, attained at the origin.
    fn minimum(&self) -> Option<f64> {
        Some(self.eps * self.weights.iter().sum::<f64>())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::ParticleEnsemble;
    use crate::functionals::EnergyFunctional;

    #[test]
    fn minimum_at_origin() {
        let r = vec![0.5, 2.0, 1.0];
        let pot = SmoothedL1::new(r.clone(), Matrix::identity(3, 3), 0.01).unwrap();
        let at0 = pot.value(&[0.0; 3]);
        assert!((at0 - 0.01 * 3.5).abs() < 1e-15);
        assert_eq!(pot.minimum(), Some(0.01 * 3.5));
        let mut g = [1.0; 3];
        pot.gradient(&[0.0; 3], &mut g);
        assert_eq!(g, [0.0; 3]);
    }

    #[test]
    fn identity_rotation_constants() {
        let eps = 0.05;
        let pot = SmoothedL1::new(vec![1.0; 4], Matrix::identity(4, 4), eps).unwrap();
        assert!(pot.coordinate_smoothness().iter().all(|h| (h - 1.0 / eps).abs() < 1e-12));
        assert!((pot.global_smoothness() - 1.0 / eps).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_orthogonal() {
        let a = Matrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(smoothed_l1_potential(vec![1.0, 1.0], a, 0.1).is_err());
        assert!(smoothed_l1_potential(vec![1.0, 1.0], Matrix::identity(2, 2), 0.0).is_err());
    }

    #[test]
    fn line_matches_pointwise_evaluation() {
        let c = (0.3f64).cos();
        let s = (0.3f64).sin();
        let a = Matrix::from_row_slice(2, 2, &[c, -s, s, c]);
        let pot = SmoothedL1::new(vec![1.5, 0.7], a, 0.02).unwrap();
        let x = [0.12, -0.4];
        let line = pot.coordinate_line(&x, 1);
        for t in [-0.3, 0.0, 0.05, 0.9] {
            let [v, d1, d2] = line(t);
            let xt = [x[0], x[1] + t];
            assert!((v - pot.value(&xt)).abs() < 1e-14);
            assert!((d1 - pot.partial(&xt, 1)).abs() < 1e-13);
            assert!((d2 - pot.hessian(&xt)[(1, 1)]).abs() < 1e-10);
        }
    }

    #[test]
    fn energy_is_mean_potential() {
        let e = smoothed_l1_potential(vec![1.0, 2.0], Matrix::identity(2, 2), 0.1).unwrap();
        let mu = ParticleEnsemble::new(vec![0.0, 0.0, 0.0, 0.0], 2, 2).unwrap();
        assert!((e.energy(&mu).unwrap() - 0.3).abs() < 1e-15);
    }
}
