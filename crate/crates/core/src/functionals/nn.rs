//! Mean-field two-layer network energy.
//!
//! A particle is one neuron `z = (α, β, w_1, …, w_d, b)` in `R^{d+3}` (that
//! layout is fixed), the network output is `g(x; μ) = (1/N) Σ_n V(x, z_n)` with
//! `V(x, z) = α tanh(wᵀx + b) + β`, and the energy is the half mean squared
//! residual over a fixed data sample `x_1, …, x_K`.

use serde::{Deserialize, Serialize};

use super::{check_coord, check_dim, EnergyFunctional, SmoothnessProfile};
use crate::ensemble::{GradientField, ParticleEnsemble};
use crate::error::{config_err, dim_err, Result};

/// Grid resolution for the supremum inside `M_1(x)`.
pub const M1_GRID_POINTS: usize = 4096;

/// The box `|α| ≤ A, |β| ≤ B, ‖w‖₂ ≤ W, |b| ≤ C` on which the smoothness
/// constants hold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeuronRegion {
    pub a: f64,
    pub b: f64,
    pub w: f64,
    pub c: f64,
}

impl NeuronRegion {
    pub fn validate(&self) -> Result<()> {
        if [self.a, self.b, self.w, self.c].iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(config_err("neuron region bounds must be positive"));
        }
        Ok(())
    }

    pub fn contains(&self, z: &[f64]) -> bool {
        let d = z.len() - 3;
        let w_norm = z[2..2 + d].iter().map(|v| v * v).sum::<f64>().sqrt();
        z[0].abs() <= self.a && z[1].abs() <= self.b && w_norm <= self.w && z[d + 2].abs() <= self.c
    }
}

#[derive(Debug, Clone)]
pub struct TwoLayerNnEnergy {
    data: Vec<f64>,
    n_data: usize,
    input_dim: usize,
    targets: Vec<f64>,
    region: NeuronRegion,
    known_min: Option<f64>,
    constants: NnSmoothness,
}

/// Smoothness constants on the region, integrated over the data sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NnSmoothness {
    pub profile: SmoothnessProfile,
    pub l_alpha: f64,
    pub l_beta: f64,
    pub l_b: f64,
    pub l_w: Vec<f64>,
}

/// Builds the energy from `K` input rows (`data`, row-major `K × d`) and
/// target values `f(x_k)`.
pub fn two_layer_nn_energy(
    data: Vec<f64>,
    input_dim: usize,
    targets: Vec<f64>,
    region: NeuronRegion,
) -> Result<TwoLayerNnEnergy> {
    TwoLayerNnEnergy::new(data, input_dim, targets, region)
}

impl TwoLayerNnEnergy {
    pub fn new(data: Vec<f64>, input_dim: usize, targets: Vec<f64>, region: NeuronRegion) -> Result<Self> {
        if targets.is_empty() {
            return Err(config_err("two-layer energy needs K >= 1 data samples"));
        }
        if input_dim == 0 || data.len() != targets.len() * input_dim {
            return Err(dim_err(format!(
                "data buffer of length {} does not hold {} samples of dimension {input_dim}",
                data.len(),
                targets.len()
            )));
        }
        if data.iter().chain(&targets).any(|v| !v.is_finite()) {
            return Err(config_err("data and targets must be finite"));
        }
        region.validate()?;
        let n_data = targets.len();
        let mut me = Self {
            data,
            n_data,
            input_dim,
            targets,
            region,
            known_min: None,
            constants: NnSmoothness {
                profile: SmoothnessProfile::new(0.0, vec![]),
                l_alpha: 0.0,
                l_beta: 0.0,
                l_b: 0.0,
                l_w: vec![],
            },
        };
        me.constants = nn_smoothness(&me);
        Ok(me)
    }

    /// Declares the minimum value, for targets the network can represent.
    pub fn with_known_minimum(mut self, e_star: f64) -> Self {
        self.known_min = Some(e_star);
        self
    }

    pub fn region(&self) -> NeuronRegion {
        self.region
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn n_data(&self) -> usize {
        self.n_data
    }

    pub fn sample(&self, k: usize) -> &[f64] {
        &self.data[k * self.input_dim..(k + 1) * self.input_dim]
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn constants(&self) -> &NnSmoothness {
        &self.constants
    }

    pub fn contains(&self, mu: &ParticleEnsemble) -> bool {
        mu.dim() == self.input_dim + 3 && mu.rows().all(|z| self.region.contains(z))
    }

    fn preact(&self, z: &[f64], k: usize) -> f64 {
        let d = self.input_dim;
        let x = self.sample(k);
        z[2..2 + d].iter().zip(x).fold(0.0, |acc, (w, xi)| acc + w * xi) + z[d + 2]
    }

    /// `g(x_k; μ)` for every sample.
    pub fn outputs(&self, mu: &ParticleEnsemble) -> Vec<f64> {
        let mut g = vec![0.0; self.n_data];
        for z in mu.rows() {
            for (k, gk) in g.iter_mut().enumerate() {
                *gk += z[0] * self.preact(z, k).tanh() + z[1];
            }
        }
        let inv = 1.0 / mu.n_particles() as f64;
        g.iter_mut().for_each(|v| *v *= inv);
        g
    }

    /// `r_μ(x_k) = g(x_k; μ) - f(x_k)`.
    pub fn residuals(&self, mu: &ParticleEnsemble) -> Vec<f64> {
        self.outputs(mu).iter().zip(&self.targets).map(|(g, f)| g - f).collect()
    }

    /// Component `i` of `φ(z; x_k) = ∇_z V(x_k, z)` given `t = tanh(s)`.
    #[inline]
    fn phi(&self, i: usize, alpha: f64, t: f64, k: usize) -> f64 {
        let d = self.input_dim;
        match i {
            0 => t,
            1 => 1.0,
            _ if i == d + 2 => alpha * (1.0 - t * t),
            _ => alpha * (1.0 - t * t) * self.data[k * d + (i - 2)],
        }
    }
}

impl EnergyFunctional for TwoLayerNnEnergy {
    fn name(&self) -> String {
        "two_layer_nn".into()
    }

    fn dim(&self) -> usize {
        self.input_dim + 3
    }

    fn energy(&self, mu: &ParticleEnsemble) -> Result<f64> {
        check_dim(mu, self.dim())?;
        let r = self.residuals(mu);
        Ok(0.5 * r.iter().map(|v| v * v).sum::<f64>() / self.n_data as f64)
    }

    fn grad(&self, mu: &ParticleEnsemble) -> Result<GradientField> {
        check_dim(mu, self.dim())?;
        let r = self.residuals(mu);
        let dz = self.dim();
        let inv_k = 1.0 / self.n_data as f64;
        let mut g = GradientField::zeros_like(mu);
        for (n, z) in mu.rows().enumerate() {
            let row = g.row_mut(n);
            for (k, rk) in r.iter().enumerate() {
                let t = self.preact(z, k).tanh();
                for (i, gi) in row.iter_mut().enumerate().take(dz) {
                    *gi += rk * self.phi(i, z[0], t, k);
                }
            }
            row.iter_mut().for_each(|v| *v *= inv_k);
        }
        Ok(g)
    }

    fn coord_grad(&self, mu: &ParticleEnsemble, i: usize) -> Result<Vec<f64>> {
        check_coord(mu, self.dim(), i)?;
        let r = self.residuals(mu);
        let inv_k = 1.0 / self.n_data as f64;
        Ok(mu
            .rows()
            .map(|z| {
                let mut acc = 0.0;
                for (k, rk) in r.iter().enumerate() {
                    let t = if i == 1 { 0.0 } else { self.preact(z, k).tanh() };
                    acc += rk * self.phi(i, z[0], t, k);
                }
                acc * inv_k
            })
            .collect())
    }

    fn smoothness(&self) -> SmoothnessProfile {
        self.constants.profile.clone()
    }

    fn known_minimum(&self) -> Option<f64> {
        self.known_min
    }
}

/// `sup_{|u| ≤ S} 2|tanh u|(1 - tanh² u)`.
///
/// `g(t) = 2t(1 - t²)` peaks at `t = 1/√3` with value `4/(3√3)`, so the
/// supremum is that peak once `tanh S` passes it and `g(tanh S)` before.
pub fn m2_sup(s_bound: f64) -> f64 {
    let t = s_bound.tanh();
    if t >= 1.0 / 3f64.sqrt() {
        4.0 / (3.0 * 3f64.sqrt())
    } else {
        2.0 * t * (1.0 - t * t)
    }
}

/// `M_0(x)² = sup_{|u|≤S} 1 + tanh² u + A² sech⁴ u K²`.
///
/// In `y = tanh² u ∈ [0, tanh² S]` the expression is a convex quadratic, so
/// the supremum sits at an endpoint.
fn m0_sq(a: f64, k: f64, s_bound: f64) -> f64 {
    let y = s_bound.tanh().powi(2);
    let at0 = 1.0 + a * a * k * k;
    let at_end = 1.0 + y + a * a * k * k * (1.0 - y).powi(2);
    at0.max(at_end)
}

/// `M_1(x) = (K/2) sup_{|u|≤S} { A|σ''|K + sqrt(A²σ''²K² + 4σ'²) }` on a
/// uniform grid of `M1_GRID_POINTS` nodes over `[0, S]` (even in `u`).
fn m1(a: f64, k: f64, s_bound: f64) -> f64 {
    let mut best = 0.0f64;
    for j in 0..M1_GRID_POINTS {
        let u = s_bound * j as f64 / (M1_GRID_POINTS - 1) as f64;
        let t = u.tanh();
        let d1 = 1.0 - t * t;
        let d2 = 2.0 * t * d1;
        let v = a * d2 * k + (a * a * d2 * d2 * k * k + 4.0 * d1 * d1).sqrt();
        best = best.max(v);
    }
    0.5 * k * best
}

/// Global and coordinate-wise smoothness constants on the neuron region,
/// with integrals against the data distribution replaced by sample means over
/// the functional's own data.
pub fn nn_smoothness(f: &TwoLayerNnEnergy) -> NnSmoothness {
    let NeuronRegion { a, b, w, c } = f.region;
    let d = f.input_dim;
    let inv = 1.0 / f.n_data as f64;
    let (mut l_alpha, mut l_b, mut l_global) = (0.0, 0.0, 0.0);
    let mut l_w = vec![0.0; d];
    for k in 0..f.n_data {
        let x = f.sample(k);
        let norm_sq: f64 = x.iter().map(|v| v * v).sum();
        let kx = (1.0 + norm_sq).sqrt();
        let s = w * norm_sq.sqrt() + c;
        let m0 = s.tanh();
        let m1_local = 1.0;
        let m2 = m2_sup(s);
        let r = a * m0 + b + f.targets[k].abs();
        let inner = a * a * m1_local * m1_local + a * r * m2;
        l_alpha += m0 * m0;
        l_b += inner;
        for (lw, xi) in l_w.iter_mut().zip(x) {
            *lw += xi * xi * inner;
        }
        l_global += m0_sq(a, kx, s) + r * m1(a, kx, s);
    }
    l_alpha *= inv;
    l_b *= inv;
    l_global *= inv;
    l_w.iter_mut().for_each(|v| *v *= inv);
    let l_beta = 1.0;
    let mut coords = Vec::with_capacity(d + 3);
    coords.push(l_alpha);
    coords.push(l_beta);
    coords.extend_from_slice(&l_w);
    coords.push(l_b);
    NnSmoothness { profile: SmoothnessProfile::new(l_global, coords), l_alpha, l_beta, l_b, l_w }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn region() -> NeuronRegion {
        NeuronRegion { a: 3.0, b: 3.0, w: 8.0, c: 3.0 }
    }

    fn realizable(w_star: &[f64], data: &[f64]) -> Vec<f64> {
        data.chunks(w_star.len())
            .map(|x| (w_star.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + 0.2).tanh() + 0.1)
            .collect()
    }

    #[test]
    fn dirac_at_teacher_is_stationary() {
        let w_star = [0.6, 0.8];
        let data = vec![0.5, -1.0, 1.2, 0.3, -0.7, 2.0, 0.0, 0.1];
        let f = realizable(&w_star, &data);
        let e = two_layer_nn_energy(data, 2, f, region()).unwrap();
        let mu = ParticleEnsemble::new(vec![1.0, 0.1, 0.6, 0.8, 0.2], 1, 5).unwrap();
        assert!(e.energy(&mu).unwrap() < 1e-30);
        assert!(e.grad(&mu).unwrap().values().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn beta_component_is_mean_residual() {
        let data = vec![0.5, -1.0, 1.2, 0.3, -0.7, 2.0];
        let e = two_layer_nn_energy(data, 2, vec![0.3, -0.2, 0.9], region()).unwrap();
        let mu = ParticleEnsemble::new(
            vec![0.2, -0.1, 0.3, 0.1, 0.05, -0.25, 0.2, -0.4, 0.6, 0.1],
            2,
            5,
        )
        .unwrap();
        let r = e.residuals(&mu);
        let mean_r = r.iter().sum::<f64>() / r.len() as f64;
        let g = e.grad(&mu).unwrap();
        for row in g.rows() {
            assert!((row[1] - mean_r).abs() < 1e-15);
        }
        for i in 0..5 {
            let col = e.coord_grad(&mu, i).unwrap();
            for (a, b) in col.iter().zip(g.column(i)) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn beta_constant_is_one() {
        let e = two_layer_nn_energy(vec![1.0, 2.0], 1, vec![0.0, 0.5], region()).unwrap();
        assert_eq!(e.constants().l_beta, 1.0);
        assert_eq!(e.smoothness().l_coord[1], 1.0);
    }

    #[test]
    fn m2_closed_form_matches_dense_scan() {
        // brute force over t = tanh(u) on a fine grid
        for s in [0.1, 0.3, 0.5, 0.6585, 0.7, 1.0, 3.0, 19.0] {
            let t_max = f64::tanh(s);
            let scan = (0..=200_000)
                .map(|j| {
                    let t = t_max * j as f64 / 200_000.0;
                    2.0 * t * (1.0 - t * t)
                })
                .fold(0.0, f64::max);
            assert!((m2_sup(s) - scan).abs() < 1e-9, "s = {s}");
        }
    }

    #[test]
    fn m0_endpoint_rule_matches_scan() {
        for (a, k, s) in [(3.0, 2.0, 19.0), (0.1, 1.0, 0.5), (0.3, 1.2, 5.0)] {
            let scan = (0..=100_000)
                .map(|j| {
                    let t = (s * j as f64 / 100_000.0).tanh();
                    1.0 + t * t + a * a * (1.0 - t * t).powi(2) * k * k
                })
                .fold(0.0, f64::max);
            assert!((m0_sq(a, k, s) - scan).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_empty_data_and_bad_dimension() {
        assert!(matches!(
            two_layer_nn_energy(vec![], 2, vec![], region()),
            Err(crate::error::Error::Config(_))
        ));
        let e = two_layer_nn_energy(vec![1.0, 2.0], 2, vec![0.5], region()).unwrap();
        let wrong = ParticleEnsemble::new(vec![0.0; 4], 1, 4).unwrap();
        assert!(matches!(e.energy(&wrong), Err(crate::error::Error::Dimension(_))));
    }
}
