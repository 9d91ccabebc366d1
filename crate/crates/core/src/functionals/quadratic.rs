//! Quadratic potential `½ xᵀPx` and quadratic interaction
//! `(1/8) ∬ (x-y)ᵀQ(x-y) dμ dμ`.

use std::sync::Arc;

use super::{check_coord, check_dim, EnergyFunctional, PointPotential, PotentialEnergy, SmoothnessProfile};
use crate::ensemble::{GradientField, ParticleEnsemble};
use crate::error::Result;
use crate::linalg::{check_psd, check_symmetric, mat_vec, spectral_norm_sym, Matrix};

const SYMMETRY_TOL: f64 = 1e-10;

fn validated(m: &Matrix, what: &str) -> Result<f64> {
    check_symmetric(m, SYMMETRY_TOL, what)?;
    check_psd(m, what)?;
    Ok(spectral_norm_sym(m))
}

#[derive(Debug, Clone)]
pub struct QuadraticPotential {
    p: Matrix,
    norm: f64,
}

impl QuadraticPotential {
    pub fn new(p: Matrix) -> Result<Self> {
        let norm = validated(&p, "potential matrix P")?;
        Ok(Self { p, norm })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.p
    }
}

impl PointPotential for QuadraticPotential {
    fn name(&self) -> String {
        "quadratic_potential".into()
    }

    fn dim(&self) -> usize {
        self.p.nrows()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let mut px = vec![0.0; x.len()];
        mat_vec(&self.p, x, &mut px);
        0.5 * x.iter().zip(&px).map(|(a, b)| a * b).sum::<f64>()
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        mat_vec(&self.p, x, out);
    }

    fn partial(&self, x: &[f64], i: usize) -> f64 {
        x.iter().enumerate().fold(0.0, |acc, (j, xj)| acc + self.p[(i, j)] * xj)
    }

    fn hessian(&self, _x: &[f64]) -> Matrix {
        self.p.clone()
    }

    fn coordinate_line<'a>(&'a self, x: &[f64], i: usize) -> Box<dyn Fn(f64) -> [f64; 3] + 'a> {
        let v0 = self.value(x);
        let g = self.partial(x, i);
        let pii = self.p[(i, i)];
        Box::new(move |s| [v0 + s * g + 0.5 * pii * s * s, g + pii * s, pii])
    }

    fn global_smoothness(&self) -> f64 {
        self.norm
    }

    fn coordinate_smoothness(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.p[(i, i)]).collect()
    }

    fn minimum(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// `E[μ] = ∫ ½ xᵀPx dμ` for a symmetric positive semidefinite `P`.
pub fn quadratic_potential(p: Matrix) -> Result<PotentialEnergy> {
    Ok(PotentialEnergy::new(Arc::new(QuadraticPotential::new(p)?)))
}

/// `E[μ] = (1/8) ∬ (x-y)ᵀQ(x-y) dμ(x) dμ(y)`.
///
/// For the empirical measure the double sum (self-pairs included) equals
/// `(1/4N) Σ_n (x_n - m)ᵀQ(x_n - m)` with `m` the barycenter, and the
/// gradient `(1/2N) Σ_m Q(x_n - x_m)` equals `½ Q(x_n - m)`; both are
/// evaluated in the centered form, which is O(N d²) rather than O(N² d²).
#[derive(Debug, Clone)]
pub struct QuadraticInteraction {
    q: Matrix,
    norm: f64,
}

impl QuadraticInteraction {
    pub fn new(q: Matrix) -> Result<Self> {
        let norm = validated(&q, "interaction matrix Q")?;
        Ok(Self { q, norm })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.q
    }

    fn centered(&self, mu: &ParticleEnsemble) -> Vec<f64> {
        let m = mu.barycenter();
        let mut c = mu.points().to_vec();
        for row in c.chunks_exact_mut(mu.dim()) {
            row.iter_mut().zip(&m).for_each(|(x, mj)| *x -= mj);
        }
        c
    }
}

pub fn quadratic_interaction(q: Matrix) -> Result<QuadraticInteraction> {
    QuadraticInteraction::new(q)
}

impl EnergyFunctional for QuadraticInteraction {
    fn name(&self) -> String {
        "quadratic_interaction".into()
    }

    fn dim(&self) -> usize {
        self.q.nrows()
    }

    fn energy(&self, mu: &ParticleEnsemble) -> Result<f64> {
        check_dim(mu, self.dim())?;
        let d = self.dim();
        let c = self.centered(mu);
        let mut qc = vec![0.0; d];
        let mut total = 0.0;
        for row in c.chunks_exact(d) {
            mat_vec(&self.q, row, &mut qc);
            total += row.iter().zip(&qc).map(|(a, b)| a * b).sum::<f64>();
        }
        Ok(0.25 * total / mu.n_particles() as f64)
    }

    fn grad(&self, mu: &ParticleEnsemble) -> Result<GradientField> {
        check_dim(mu, self.dim())?;
        let d = self.dim();
        let c = self.centered(mu);
        let mut g = GradientField::zeros_like(mu);
        for (n, row) in c.chunks_exact(d).enumerate() {
            let out = g.row_mut(n);
            for (i, o) in out.iter_mut().enumerate() {
                *o = 0.5 * row.iter().enumerate().fold(0.0, |acc, (j, cj)| acc + self.q[(i, j)] * cj);
            }
        }
        Ok(g)
    }

    fn coord_grad(&self, mu: &ParticleEnsemble, i: usize) -> Result<Vec<f64>> {
        check_coord(mu, self.dim(), i)?;
        let m = mu.barycenter();
        Ok(mu
            .rows()
            .map(|x| {
                0.5 * x
                    .iter()
                    .zip(&m)
                    .enumerate()
                    .fold(0.0, |acc, (j, (xj, mj))| acc + self.q[(i, j)] * (xj - mj))
            })
            .collect())
    }

    fn smoothness(&self) -> SmoothnessProfile {
        SmoothnessProfile::new(self.norm, (0..self.dim()).map(|i| self.q[(i, i)]).collect())
    }

    fn known_minimum(&self) -> Option<f64> {
        Some(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::ParticleEnsemble;

    fn example1_matrix() -> Matrix {
        let off = 11100.0 / 1111.0;
        Matrix::from_row_slice(2, 2, &[1000.0, off, off, 1.0])
    }

    #[test]
    fn example1_diagonal_constants() {
        let e = quadratic_potential(example1_matrix()).unwrap();
        let prof = e.smoothness();
        assert_eq!(prof.l_coord, vec![1000.0, 1.0]);
        assert!(prof.l_coord.iter().all(|l| *l <= prof.l_global * (1.0 + 1e-9)));
    }

    #[test]
    fn potential_at_origin_and_identity() {
        let e = quadratic_potential(Matrix::identity(2, 2)).unwrap();
        let origin = ParticleEnsemble::new(vec![0.0, 0.0], 1, 2).unwrap();
        assert_eq!(e.energy(&origin).unwrap(), 0.0);
        assert_eq!(e.grad(&origin).unwrap().values(), &[0.0, 0.0]);
        let mu = ParticleEnsemble::new(vec![3.0, 4.0], 1, 2).unwrap();
        assert_eq!(e.energy(&mu).unwrap(), 12.5);
        assert_eq!(e.grad(&mu).unwrap().values(), &[3.0, 4.0]);
    }

    #[test]
    fn rejects_bad_matrices() {
        let asym = Matrix::from_row_slice(2, 2, &[1.0, 0.2, 0.1, 1.0]);
        assert!(quadratic_potential(asym).is_err());
        let indef = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(quadratic_interaction(indef).is_err());
    }

    #[test]
    fn interaction_identical_particles() {
        let e = quadratic_interaction(example1_matrix()).unwrap();
        let mu = ParticleEnsemble::new(vec![0.7, -0.2, 0.7, -0.2, 0.7, -0.2], 3, 2).unwrap();
        assert!(e.energy(&mu).unwrap().abs() < 1e-15);
        assert!(e.grad(&mu).unwrap().values().iter().all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn interaction_two_points_by_hand() {
        // (1/(8·4))·(2·(2·4)) = 0.5, gradients ∓1
        let e = quadratic_interaction(Matrix::from_element(1, 1, 2.0)).unwrap();
        let mu = ParticleEnsemble::new(vec![0.0, 2.0], 2, 1).unwrap();
        assert!((e.energy(&mu).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(e.grad(&mu).unwrap().values(), &[-1.0, 1.0]);
    }

    #[test]
    fn interaction_gradient_is_mean_zero() {
        let q = Matrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.0, -0.2, 0.1, -0.2, 0.5]);
        let e = quadratic_interaction(q).unwrap();
        let mu = ParticleEnsemble::new(
            vec![0.1, 2.0, -1.0, 3.0, 0.4, 0.2, -2.0, 1.1, 0.9, 0.5, -0.5, 0.0],
            4,
            3,
        )
        .unwrap();
        let g = e.grad(&mu).unwrap();
        for i in 0..3 {
            assert!(g.column(i).iter().sum::<f64>().abs() < 1e-13);
            assert_eq!(g.column(i), e.coord_grad(&mu, i).unwrap());
        }
    }

    #[test]
    fn interaction_matches_literal_double_sum() {
        let q = Matrix::from_row_slice(2, 2, &[3.0, 0.5, 0.5, 1.0]);
        let e = quadratic_interaction(q.clone()).unwrap();
        let pts = [[0.3, -1.0], [1.5, 0.2], [-0.7, 0.8]];
        let mu = ParticleEnsemble::from_rows(&pts.iter().map(|p| p.to_vec()).collect::<Vec<_>>()).unwrap();
        let mut s = 0.0;
        for a in &pts {
            for b in &pts {
                let z = [a[0] - b[0], a[1] - b[1]];
                s += z[0] * (q[(0, 0)] * z[0] + q[(0, 1)] * z[1]) + z[1] * (q[(1, 0)] * z[0] + q[(1, 1)] * z[1]);
            }
        }
        let literal = s / (8.0 * 9.0);
        assert!((e.energy(&mu).unwrap() - literal).abs() < 1e-14);
    }
}
