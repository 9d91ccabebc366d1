use std::sync::Arc;

use super::{EnergyFunctional, PointPotential, PotentialEnergy, SmoothnessProfile};
use crate::ensemble::{GradientField, ParticleEnsemble};
use crate::error::{dim_err, Result};

/// `E = E_1 + … + E_k`, all parts smooth. Constants add.
#[derive(Clone)]
pub struct SumFunctional {
    parts: Vec<Arc<dyn EnergyFunctional>>,
}

pub fn sum(parts: Vec<Arc<dyn EnergyFunctional>>) -> Result<SumFunctional> {
    let d = parts.first().map(|p| p.dim()).ok_or_else(|| dim_err("empty sum"))?;
    if parts.iter().any(|p| p.dim() != d) {
        return Err(dim_err("summands have different dimensions"));
    }
    Ok(SumFunctional { parts })
}

impl EnergyFunctional for SumFunctional {
    fn name(&self) -> String {
        self.parts.iter().map(|p| p.name()).collect::<Vec<_>>().join("+")
    }

    fn dim(&self) -> usize {
        self.parts[0].dim()
    }

    fn energy(&self, mu: &ParticleEnsemble) -> Result<f64> {
        self.parts.iter().try_fold(0.0, |acc, p| Ok(acc + p.energy(mu)?))
    }

    fn grad(&self, mu: &ParticleEnsemble) -> Result<GradientField> {
        let mut g = self.parts[0].grad(mu)?;
        for p in &self.parts[1..] {
            g = g.add(&p.grad(mu)?)?;
        }
        Ok(g)
    }

    fn coord_grad(&self, mu: &ParticleEnsemble, i: usize) -> Result<Vec<f64>> {
        let mut c = self.parts[0].coord_grad(mu, i)?;
        for p in &self.parts[1..] {
            c.iter_mut().zip(p.coord_grad(mu, i)?).for_each(|(a, b)| *a += b);
        }
        Ok(c)
    }

    fn smoothness(&self) -> SmoothnessProfile {
        let profiles: Vec<_> = self.parts.iter().map(|p| p.smoothness()).collect();
        let d = self.dim();
        let l_coord = (0..d).map(|i| profiles.iter().fold(0.0, |acc, p| acc + p.l_coord[i])).collect();
        let l_global = profiles.iter().fold(0.0, |acc, p| acc + p.l_global);
        SmoothnessProfile::new(l_global, l_coord)
    }

    fn known_minimum(&self) -> Option<f64> {
        self.parts.iter().try_fold(0.0, |acc, p| p.known_minimum().map(|m| acc + m))
    }
}

/// `E = G + Ψ` with `G` accessed through its gradient and `Ψ = ∫ V dμ`
/// accessed pointwise by the proximal solvers.
#[derive(Clone)]
pub struct CompositeFunctional {
    smooth: Arc<dyn EnergyFunctional>,
    regularizer: PotentialEnergy,
    known_min: Option<f64>,
}

pub fn composite(smooth: Arc<dyn EnergyFunctional>, regularizer: PotentialEnergy) -> Result<CompositeFunctional> {
    if smooth.dim() != regularizer.dim() {
        return Err(dim_err(format!(
            "smooth part has dimension {}, regularizer {}",
            smooth.dim(),
            regularizer.dim()
        )));
    }
    Ok(CompositeFunctional { smooth, regularizer, known_min: None })
}

impl CompositeFunctional {
    pub fn smooth_part(&self) -> &dyn EnergyFunctional {
        self.smooth.as_ref()
    }

    pub fn regularizer(&self) -> &PotentialEnergy {
        &self.regularizer
    }

    pub fn potential(&self) -> &dyn PointPotential {
        self.regularizer.potential()
    }

    /// Declares `min E` (only valid when both parts share a minimizer).
    pub fn with_known_minimum(mut self, e_star: f64) -> Self {
        self.known_min = Some(e_star);
        self
    }
}

impl EnergyFunctional for CompositeFunctional {
    fn name(&self) -> String {
        format!("{}+{}", self.smooth.name(), self.regularizer.name())
    }

    fn dim(&self) -> usize {
        self.smooth.dim()
    }

    fn energy(&self, mu: &ParticleEnsemble) -> Result<f64> {
        Ok(self.smooth.energy(mu)? + self.regularizer.energy(mu)?)
    }

    fn grad(&self, mu: &ParticleEnsemble) -> Result<GradientField> {
        self.smooth.grad(mu)?.add(&self.regularizer.grad(mu)?)
    }

    fn coord_grad(&self, mu: &ParticleEnsemble, i: usize) -> Result<Vec<f64>> {
        let mut c = self.smooth.coord_grad(mu, i)?;
        c.iter_mut()
            .zip(self.regularizer.coord_grad(mu, i)?)
            .for_each(|(a, b)| *a += b);
        Ok(c)
    }

    /// `L`, `L_i` from the smooth part; `H`, `H_i` from the regularizer.
    fn smoothness(&self) -> SmoothnessProfile {
        let g = self.smooth.smoothness();
        let psi = self.regularizer.smoothness();
        g.with_regularizer(psi.l_global, psi.l_coord)
    }

    fn known_minimum(&self) -> Option<f64> {
        self.known_min
    }
}
