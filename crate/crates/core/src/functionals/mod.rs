//! Energy functionals on particle ensembles.
//!
//! Every functional exposes its particle energy, the Wasserstein gradient at
//! each particle, a single gradient column (the cheap path used by the
//! coordinate methods) and analytic smoothness constants.

mod composite;
mod mean;
mod mmd;
mod nn;
mod potential;
mod quadratic;
mod regularizer;

pub use composite::{composite, sum, CompositeFunctional, SumFunctional};
pub use mean::{function_of_mean, FunctionOfMean};
pub use mmd::{mmd_energy, MmdEnergy};
pub use nn::{
    m2_sup, nn_smoothness, two_layer_nn_energy, NeuronRegion, NnSmoothness, TwoLayerNnEnergy,
    M1_GRID_POINTS,
};
pub use potential::{PointPotential, PotentialEnergy};
pub use quadratic::{quadratic_interaction, quadratic_potential, QuadraticInteraction, QuadraticPotential};
pub use regularizer::{smoothed_l1_potential, SmoothedL1};

use serde::{Deserialize, Serialize};

use crate::ensemble::{GradientField, ParticleEnsemble};
use crate::error::{dim_err, Result};

/// Global and per-coordinate smoothness constants.
///
/// `h_*` are present only for composite problems, where they describe the
/// regularizer part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessProfile {
    pub l_global: f64,
    pub l_coord: Vec<f64>,
    pub l_sum: f64,
    pub h_global: Option<f64>,
    pub h_coord: Option<Vec<f64>>,
}

impl SmoothnessProfile {
    pub fn new(l_global: f64, l_coord: Vec<f64>) -> Self {
        let l_sum = index_order_sum(&l_coord);
        Self { l_global, l_coord, l_sum, h_global: None, h_coord: None }
    }

    pub fn with_regularizer(mut self, h_global: f64, h_coord: Vec<f64>) -> Self {
        self.h_global = Some(h_global);
        self.h_coord = Some(h_coord);
        self
    }

    pub fn dim(&self) -> usize {
        self.l_coord.len()
    }

    pub fn h(&self, i: usize) -> f64 {
        self.h_coord.as_ref().map_or(0.0, |h| h[i])
    }

    /// Proximal parameters `η_i = L_i + sqrt(H_i² + L_i²)`.
    pub fn eta(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|i| {
                let (l, h) = (self.l_coord[i], self.h(i));
                l + h.hypot(l)
            })
            .collect()
    }

    /// Global analogue `L + sqrt(H² + L²)`, the default WPG parameter.
    pub fn eta_global(&self) -> f64 {
        let h = self.h_global.unwrap_or(0.0);
        self.l_global + h.hypot(self.l_global)
    }

    /// `𝒞 = 8 Σ_j η_j`.
    pub fn complexity_constant(&self) -> f64 {
        8.0 * index_order_sum(&self.eta())
    }
}

fn index_order_sum(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, x| acc + x)
}

/// An energy `E[μ]` over empirical measures in `R^d`.
pub trait EnergyFunctional: Send + Sync {
    fn name(&self) -> String;

    fn dim(&self) -> usize;

    fn energy(&self, mu: &ParticleEnsemble) -> Result<f64>;

    /// `∇_W E[μ](x_n)` for every particle.
    fn grad(&self, mu: &ParticleEnsemble) -> Result<GradientField>;

    /// Column `i` of [`grad`](Self::grad), computed without the other columns.
    fn coord_grad(&self, mu: &ParticleEnsemble, i: usize) -> Result<Vec<f64>>;

    fn smoothness(&self) -> SmoothnessProfile;

    fn known_minimum(&self) -> Option<f64> {
        None
    }
}

pub(crate) fn check_dim(mu: &ParticleEnsemble, d: usize) -> Result<()> {
    if mu.dim() != d {
        return Err(dim_err(format!("ensemble has dimension {}, functional expects {d}", mu.dim())));
    }
    Ok(())
}

pub(crate) fn check_coord(mu: &ParticleEnsemble, d: usize, i: usize) -> Result<()> {
    check_dim(mu, d)?;
    mu.check_coordinate(i)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eta_and_constant_with_zero_regularizer() {
        let p = SmoothnessProfile::new(5.0, vec![1.0, 2.0, 3.0]).with_regularizer(0.0, vec![0.0; 3]);
        assert_eq!(p.eta(), vec![2.0, 4.0, 6.0]);
        assert_eq!(p.complexity_constant(), 16.0 * p.l_sum);
    }

    #[test]
    fn eta_with_unit_constants() {
        let d = 7;
        let p = SmoothnessProfile::new(1.0, vec![1.0; d]).with_regularizer(1.0, vec![1.0; d]);
        let expected = 1.0 + 2f64.sqrt();
        assert!(p.eta().iter().all(|e| (e - expected).abs() < 1e-15));
        assert!((p.complexity_constant() - 8.0 * d as f64 * expected).abs() < 1e-12);
    }

    #[test]
    fn l_sum_is_index_order_sum() {
        let l = vec![0.1, 0.2, 0.3, 1e16, -1e16];
        let p = SmoothnessProfile::new(1.0, l.clone());
        assert_eq!(p.l_sum, (((0.1 + 0.2) + 0.3) + 1e16) + -1e16);
    }
}
