use super::{check_coord, check_dim, EnergyFunctional, SmoothnessProfile};
use crate::ensemble::{GradientField, ParticleEnsemble};
use crate::error::Result;
use crate::linalg::{check_symmetric, mat_vec, spectral_norm_sym, Matrix};

/// `E[μ] = φ(m(μ))` with `φ(m) = ½ mᵀAm` and `m(μ)` the barycenter.
///
/// The gradient field is `A m(μ)` at every particle.
#[derive(Debug, Clone)]
pub struct FunctionOfMean {
    a: Matrix,
    norm: f64,
}

pub fn function_of_mean(a: Matrix) -> Result<FunctionOfMean> {
    check_symmetric(&a, 1e-10, "mean-functional matrix A")?;
    let norm = spectral_norm_sym(&a);
    Ok(FunctionOfMean { a, norm })
}

impl EnergyFunctional for FunctionOfMean {
    fn name(&self) -> String {
        "function_of_mean".into()
    }

    fn dim(&self) -> usize {
        self.a.nrows()
    }

    fn energy(&self, mu: &ParticleEnsemble) -> Result<f64> {
        check_dim(mu, self.dim())?;
        let m = mu.barycenter();
        let mut am = vec![0.0; m.len()];
        mat_vec(&self.a, &m, &mut am);
        Ok(0.5 * m.iter().zip(&am).map(|(x, y)| x * y).sum::<f64>())
    }

    fn grad(&self, mu: &ParticleEnsemble) -> Result<GradientField> {
        check_dim(mu, self.dim())?;
        let m = mu.barycenter();
        let mut am = vec![0.0; m.len()];
        mat_vec(&self.a, &m, &mut am);
        let mut g = GradientField::zeros_like(mu);
        for n in 0..mu.n_particles() {
            g.row_mut(n).copy_from_slice(&am);
        }
        Ok(g)
    }

    fn coord_grad(&self, mu: &ParticleEnsemble, i: usize) -> Result<Vec<f64>> {
        check_coord(mu, self.dim(), i)?;
        let m = mu.barycenter();
        let v = m.iter().enumerate().fold(0.0, |acc, (j, mj)| acc + self.a[(i, j)] * mj);
        Ok(vec![v; mu.n_particles()])
    }

    /// `L_i = |A_ii|`, `L = ‖A‖₂`.
    fn smoothness(&self) -> SmoothnessProfile {
        SmoothnessProfile::new(self.norm, (0..self.dim()).map(|i| self.a[(i, i)].abs()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_zero_gives_zero() {
        let e = function_of_mean(Matrix::identity(2, 2)).unwrap();
        let mu = ParticleEnsemble::new(vec![1.0, -2.0, -1.0, 2.0], 2, 2).unwrap();
        assert_eq!(e.energy(&mu).unwrap(), 0.0);
        assert!(e.grad(&mu).unwrap().values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn identity_with_unit_mean() {
        let e = function_of_mean(Matrix::identity(2, 2)).unwrap();
        let mu = ParticleEnsemble::new(vec![0.0, 2.0, 2.0, 0.0, 1.0, 1.0], 3, 2).unwrap();
        assert!((e.energy(&mu).unwrap() - 1.0).abs() < 1e-15);
        let g = e.grad(&mu).unwrap();
        for row in g.rows() {
            assert!((row[0] - 1.0).abs() < 1e-15 && (row[1] - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn rows_are_constant_and_columns_consistent() {
        let a = Matrix::from_row_slice(2, 2, &[2.0, -0.5, -0.5, 1.0]);
        let e = function_of_mean(a).unwrap();
        let mu = ParticleEnsemble::new(vec![0.3, 1.0, -2.0, 0.5, 4.0, 0.25], 3, 2).unwrap();
        let g = e.grad(&mu).unwrap();
        let first = g.row(0).to_vec();
        assert!(g.rows().all(|r| r == first.as_slice()));
        for i in 0..2 {
            assert_eq!(g.column(i), e.coord_grad(&mu, i).unwrap());
        }
    }

    #[test]
    fn rejects_asymmetric() {
        assert!(function_of_mean(Matrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0])).is_err());
    }
}
