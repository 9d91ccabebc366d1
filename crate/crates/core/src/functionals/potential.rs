use std::sync::Arc;

use super::{check_coord, check_dim, EnergyFunctional, SmoothnessProfile};
use crate::ensemble::{GradientField, ParticleEnsemble};
use crate::error::Result;
use crate::linalg::Matrix;

/// A pointwise potential `V: R^d -> R`.
///
/// Proximal solvers evaluate `V` and its derivatives at arbitrary points, so
/// regularizers are built from this trait rather than from
/// [`EnergyFunctional`] alone.
pub trait PointPotential: Send + Sync + std::fmt::Debug {
    fn name(&self) -> String;

    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    fn gradient(&self, x: &[f64], out: &mut [f64]);

    fn partial(&self, x: &[f64], i: usize) -> f64 {
        let mut g = vec![0.0; self.dim()];
        self.gradient(x, &mut g);
        g[i]
    }

    fn hessian(&self, x: &[f64]) -> Matrix;

    /// `s ↦ [V, V', V'']` of `V(x + s e_i)`, with any per-point setup done once.
    fn coordinate_line<'a>(&'a self, x: &[f64], i: usize) -> Box<dyn Fn(f64) -> [f64; 3] + 'a>;

    /// Bound on `‖∇²V‖₂`.
    fn global_smoothness(&self) -> f64;

    /// Bounds on `|∂_ii V|`.
    fn coordinate_smoothness(&self) -> Vec<f64>;

    fn minimum(&self) -> Option<f64> {
        None
    }
}

/// `E[μ] = ∫ V dμ`, whose Wasserstein gradient is `∇V`.
#[derive(Debug, Clone)]
pub struct PotentialEnergy {
    potential: Arc<dyn PointPotential>,
}

impl PotentialEnergy {
    pub fn new(potential: Arc<dyn PointPotential>) -> Self {
        Self { potential }
    }

    pub fn potential(&self) -> &dyn PointPotential {
        self.potential.as_ref()
    }
}

impl EnergyFunctional for PotentialEnergy {
    fn name(&self) -> String {
        self.potential.name()
    }

    fn dim(&self) -> usize {
        self.potential.dim()
    }

    fn energy(&self, mu: &ParticleEnsemble) -> Result<f64> {
        check_dim(mu, self.dim())?;
        let total = mu.rows().fold(0.0, |acc, x| acc + self.potential.value(x));
        Ok(total / mu.n_particles() as f64)
    }

    fn grad(&self, mu: &ParticleEnsemble) -> Result<GradientField> {
        check_dim(mu, self.dim())?;
        let mut g = GradientField::zeros_like(mu);
        for (n, x) in mu.rows().enumerate() {
            self.potential.gradient(x, g.row_mut(n));
        }
        Ok(g)
    }

    fn coord_grad(&self, mu: &ParticleEnsemble, i: usize) -> Result<Vec<f64>> {
        check_coord(mu, self.dim(), i)?;
        Ok(mu.rows().map(|x| self.potential.partial(x, i)).collect())
    }

    fn smoothness(&self) -> SmoothnessProfile {
        SmoothnessProfile::new(
            self.potential.global_smoothness(),
            self.potential.coordinate_smoothness(),
        )
    }

    fn known_minimum(&self) -> Option<f64> {
        self.potential.minimum()
    }
}
