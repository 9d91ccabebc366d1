//! Squared MMD to a fixed target ensemble with an anisotropic Gaussian kernel
//! `k(z) = exp(-½ Σ_i λ_i z_i²)`.

use super::{check_coord, check_dim, EnergyFunctional, SmoothnessProfile};
use crate::ensemble::{GradientField, ParticleEnsemble};
use crate::error::{config_err, Result};

#[derive(Debug, Clone)]
pub struct MmdEnergy {
    target: ParticleEnsemble,
    rates: Vec<f64>,
    /// `(1/M²) Σ Σ k(y_n - y_m)`, fixed for the lifetime of the functional.
    target_self: f64,
}

pub fn mmd_energy(target: ParticleEnsemble, rates: Vec<f64>) -> Result<MmdEnergy> {
    MmdEnergy::new(target, rates)
}

impl MmdEnergy {
    pub fn new(target: ParticleEnsemble, rates: Vec<f64>) -> Result<Self> {
        if rates.len() != target.dim() {
            return Err(config_err(format!(
                "{} kernel rates for a {}-dimensional target",
                rates.len(),
                target.dim()
            )));
        }
        if let Some(bad) = rates.iter().find(|l| !(**l > 0.0) || !l.is_finite()) {
            return Err(config_err(format!("kernel rates must be positive, got {bad}")));
        }
        let mut me = Self { target, rates, target_self: 0.0 };
        me.target_self = me.self_sum(&me.target);
        Ok(me)
    }

    pub fn target(&self) -> &ParticleEnsemble {
        &self.target
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    #[inline]
    fn kernel(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut q = 0.0;
        for ((x, y), l) in a.iter().zip(b).zip(&self.rates) {
            let z = x - y;
            q += l * z * z;
        }
        (-0.5 * q).exp()
    }

    /// `(1/K²) Σ_a Σ_b k(a - b)` over one ensemble, self-pairs included.
    fn self_sum(&self, e: &ParticleEnsemble) -> f64 {
        let n = e.n_particles();
        let mut off = 0.0;
        for a in 0..n {
            for b in 0..a {
                off += self.kernel(e.point(a), e.point(b));
            }
        }
        // k(0) = 1 on the diagonal
        (n as f64 + 2.0 * off) / (n * n) as f64
    }

    fn cross_sum(&self, mu: &ParticleEnsemble) -> f64 {
        let mut s = 0.0;
        for x in mu.rows() {
            for y in self.target.rows() {
                s += self.kernel(x, y);
            }
        }
        s / (mu.n_particles() * self.target.n_particles()) as f64
    }

    /// Accumulates `(1/N) Σ_m ∇k(x - x_m) - (1/M) Σ_m ∇k(x - y_m)` restricted
    /// to the coordinates in `coords`, writing into `out` (one slot per coord).
    fn accumulate(&self, mu: &ParticleEnsemble, x: &[f64], coords: &[usize], out: &mut [f64]) {
        let inv_n = 1.0 / mu.n_particles() as f64;
        let inv_m = 1.0 / self.target.n_particles() as f64;
        let mut own = vec![0.0; coords.len()];
        for xm in mu.rows() {
            let k = self.kernel(x, xm);
            for (o, &i) in own.iter_mut().zip(coords) {
                *o += -self.rates[i] * (x[i] - xm[i]) * k;
            }
        }
        let mut tgt = vec![0.0; coords.len()];
        for ym in self.target.rows() {
            let k = self.kernel(x, ym);
            for (t, &i) in tgt.iter_mut().zip(coords) {
                *t += -self.rates[i] * (x[i] - ym[i]) * k;
            }
        }
        for ((o, a), b) in out.iter_mut().zip(&own).zip(&tgt) {
            *o = a * inv_n - b * inv_m;
        }
    }
}

impl EnergyFunctional for MmdEnergy {
    fn name(&self) -> String {
        "mmd".into()
    }

    fn dim(&self) -> usize {
        self.rates.len()
    }

    fn energy(&self, mu: &ParticleEnsemble) -> Result<f64> {
        check_dim(mu, self.dim())?;
        Ok(0.5 * (self.self_sum(mu) - 2.0 * self.cross_sum(mu) + self.target_self))
    }

    fn grad(&self, mu: &ParticleEnsemble) -> Result<GradientField> {
        check_dim(mu, self.dim())?;
        let coords: Vec<usize> = (0..self.dim()).collect();
        let mut g = GradientField::zeros_like(mu);
        for (n, x) in mu.rows().enumerate() {
            self.accumulate(mu, x, &coords, g.row_mut(n));
        }
        Ok(g)
    }

    fn coord_grad(&self, mu: &ParticleEnsemble, i: usize) -> Result<Vec<f64>> {
        check_coord(mu, self.dim(), i)?;
        let mut col = vec![0.0; mu.n_particles()];
        for (n, x) in mu.rows().enumerate() {
            self.accumulate(mu, x, &[i], &mut col[n..n + 1]);
        }
        Ok(col)
    }

    /// `L_i = 4 λ_i`, `L = 4 max_i λ_i`.
    fn smoothness(&self) -> SmoothnessProfile {
        let l: Vec<f64> = self.rates.iter().map(|r| 4.0 * r).collect();
        let max = l.iter().cloned().fold(0.0, f64::max);
        SmoothnessProfile::new(max, l)
    }

    fn known_minimum(&self) -> Option<f64> {
        Some(0.0)
    }
}
