use rand::Rng;

use super::prox::{solve_scalar, solve_vector};
use super::schedule::{Schedule, ScheduleMode};
use crate::ensemble::{DisplacementField, ParticleEnsemble};
use crate::error::{config_err, Error, Result};
use crate::functionals::{CompositeFunctional, EnergyFunctional};

/// Result of one solver step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub ensemble: ParticleEnsemble,
    /// The sampled coordinate for randomized steps.
    pub coordinate: Option<usize>,
    /// Number of particles whose subproblem needed the fallback solver.
    pub fallbacks: usize,
}

fn ensure_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Divergence(format!("non-finite {what}")))
    }
}

fn check_mode(schedule: &Schedule, mode: ScheduleMode) -> Result<()> {
    if schedule.mode != mode {
        return Err(config_err(format!("expected a {mode:?} schedule, got {:?}", schedule.mode)));
    }
    Ok(())
}

/// `x_n ← x_n − h ∇_W E[μ](x_n)`.
pub fn wgd_step(mu: &ParticleEnsemble, functional: &dyn EnergyFunctional, h: f64) -> Result<StepOutcome> {
    let g = functional.grad(mu)?;
    ensure_finite(g.values(), "gradient")?;
    let ensemble = mu.pushforward(&g.scaled(-h))?;
    Ok(StepOutcome { ensemble, coordinate: None, fallbacks: 0 })
}

/// Samples `i ∼ p` and moves column `i` by `−γ_i` times its gradient.
pub fn rwcd_step<R: Rng + ?Sized>(
    mu: &ParticleEnsemble,
    functional: &dyn EnergyFunctional,
    schedule: &Schedule,
    rng: &mut R,
) -> Result<StepOutcome> {
    check_mode(schedule, ScheduleMode::Rwcd)?;
    let i = schedule.sample(rng);
    rwcd_step_on(mu, functional, schedule, i)
}

/// [`rwcd_step`] with the coordinate fixed.
pub fn rwcd_step_on(
    mu: &ParticleEnsemble,
    functional: &dyn EnergyFunctional,
    schedule: &Schedule,
    i: usize,
) -> Result<StepOutcome> {
    let gamma = schedule.step(i);
    let mut col = functional.coord_grad(mu, i)?;
    ensure_finite(&col, "coordinate gradient")?;
    col.iter_mut().for_each(|c| *c *= -gamma);
    let ensemble = mu.coordinate_pushforward(i, &col)?;
    Ok(StepOutcome { ensemble, coordinate: Some(i), fallbacks: 0 })
}

/// Full proximal-gradient step: per particle, minimize
/// `v·∇G(x_n) + η/2 ‖v‖² + V(x_n + v)` and move by the minimizer.
pub fn wpg_step(
    mu: &ParticleEnsemble,
    composite: &CompositeFunctional,
    eta: f64,
    newton_iters: usize,
) -> Result<StepOutcome> {
    let g = composite.smooth_part().grad(mu)?;
    ensure_finite(g.values(), "gradient")?;
    let pot = composite.potential();
    let mut t = DisplacementField::zeros_like(mu);
    let mut fallbacks = 0;
    for n in 0..mu.n_particles() {
        let sol = solve_vector(pot, mu.point(n), g.row(n), eta, newton_iters);
        fallbacks += sol.fallback as usize;
        t.row_mut(n).copy_from_slice(&sol.v);
    }
    let ensemble = mu.pushforward(&t)?;
    Ok(StepOutcome { ensemble, coordinate: None, fallbacks })
}

/// Samples `i ∼ p` and solves the scalar proximal subproblem on column `i`
/// for every particle.
pub fn rwcp_step<R: Rng + ?Sized>(
    mu: &ParticleEnsemble,
    composite: &CompositeFunctional,
    schedule: &Schedule,
    rng: &mut R,
    newton_iters: usize,
) -> Result<StepOutcome> {
    check_mode(schedule, ScheduleMode::Rwcp)?;
    let i = schedule.sample(rng);
    rwcp_step_on(mu, composite, schedule, i, newton_iters)
}

/// [`rwcp_step`] with the coordinate fixed.
pub fn rwcp_step_on(
    mu: &ParticleEnsemble,
    composite: &CompositeFunctional,
    schedule: &Schedule,
    i: usize,
    newton_iters: usize,
) -> Result<StepOutcome> {
    let eta = schedule.step(i);
    let col = composite.smooth_part().coord_grad(mu, i)?;
    ensure_finite(&col, "coordinate gradient")?;
    let pot = composite.potential();
    let mut fallbacks = 0;
    let s: Vec<f64> = col
        .iter()
        .enumerate()
        .map(|(n, gn)| {
            let sol = solve_scalar(pot.coordinate_line(mu.point(n), i), *gn, eta, newton_iters);
            fallbacks += sol.fallback as usize;
            sol.s
        })
        .collect();
    let ensemble = mu.coordinate_pushforward(i, &s)?;
    Ok(StepOutcome { ensemble, coordinate: Some(i), fallbacks })
}
