use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::prox::DEFAULT_NEWTON_ITERS;
use super::schedule::{schedule_from_profile, Schedule, ScheduleMode};
use super::steps::{rwcd_step, rwcp_step, wgd_step, wpg_step, StepOutcome};
use crate::ensemble::{trial_rng, ParticleEnsemble};
use crate::error::{config_err, Error, Result};
use crate::functionals::{CompositeFunctional, EnergyFunctional};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Wgd,
    Rwcd,
    Wpg,
    Rwcp,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Wgd, Method::Rwcd, Method::Wpg, Method::Rwcp];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Wgd => "wgd",
            Method::Rwcd => "rwcd",
            Method::Wpg => "wpg",
            Method::Rwcp => "rwcp",
        }
    }

    pub fn is_randomized(self) -> bool {
        matches!(self, Method::Rwcd | Method::Rwcp)
    }

    pub fn is_proximal(self) -> bool {
        matches!(self, Method::Wpg | Method::Rwcp)
    }

    /// Work units charged per step in dimension `d`.
    pub fn cost(self, d: usize) -> u64 {
        if self.is_randomized() {
            1
        } else {
            d as u64
        }
    }

    pub fn schedule_mode(self) -> Option<ScheduleMode> {
        match self {
            Method::Rwcd => Some(ScheduleMode::Rwcd),
            Method::Rwcp => Some(ScheduleMode::Rwcp),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| config_err(format!("unknown method `{s}` (expected wgd, rwcd, wpg or rwcp)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub method: Method,
    /// Total work units; a step runs only if it fits in what remains.
    pub budget: u64,
    /// `h` for WGD, `η` for WPG. Defaults to `1/L` and `L + sqrt(H² + L²)`.
    pub step: Option<f64>,
    pub newton_iters: usize,
    pub seed: u64,
    pub trial: u64,
    /// Record spacing in work units; defaults to the dimension.
    pub trace_stride: Option<u64>,
    /// Evaluate the energy after every step and track the largest increase.
    pub monitor_descent: bool,
}

impl SolverConfig {
    pub fn new(method: Method, budget: u64) -> Self {
        Self {
            method,
            budget,
            step: None,
            newton_iters: DEFAULT_NEWTON_ITERS,
            seed: 0,
            trial: 0,
            trace_stride: None,
            monitor_descent: false,
        }
    }
}

/// What a solver optimizes. Proximal methods need the split form.
#[derive(Clone, Copy)]
pub enum Objective<'a> {
    Smooth(&'a dyn EnergyFunctional),
    Composite(&'a CompositeFunctional),
}

impl<'a> Objective<'a> {
    pub fn functional(&self) -> &'a dyn EnergyFunctional {
        match *self {
            Objective::Smooth(f) => f,
            Objective::Composite(c) => c,
        }
    }

    fn composite(&self, method: Method) -> Result<&'a CompositeFunctional> {
        match *self {
            Objective::Composite(c) => Ok(c),
            Objective::Smooth(_) => Err(config_err(format!("{method} needs a composite objective"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub work: u64,
    pub energy: f64,
    pub grad_norm_sq: f64,
    pub running_min_grad_norm_sq: f64,
    pub barycenter_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTrace {
    pub method: Method,
    pub records: Vec<TraceRecord>,
    pub final_ensemble: ParticleEnsemble,
    /// Sampled coordinate of every randomized step, in order.
    pub coordinates: Vec<usize>,
    pub steps: u64,
    pub work: u64,
    pub newton_fallbacks: u64,
    /// Largest `(E_{k+1} − E_k) / (1 + |E_k|)` seen, when monitoring.
    pub max_descent_violation: Option<f64>,
}

impl ConvergenceTrace {
    pub fn final_record(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn energies(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.energy).collect()
    }
}

/// A failed run together with everything recorded before the failure.
#[derive(Debug, Clone)]
pub struct RunFailure {
    pub error: Error,
    pub partial: ConvergenceTrace,
}

impl fmt::Display for RunFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (after {} work units)", self.error, self.partial.work)
    }
}

impl std::error::Error for RunFailure {}

struct Recorder<'a> {
    functional: &'a dyn EnergyFunctional,
    trace: ConvergenceTrace,
    ceiling: f64,
    running_min: f64,
}

impl Recorder<'_> {
    fn record(&mut self, mu: &ParticleEnsemble, work: u64) -> Result<()> {
        let energy = self.functional.energy(mu)?;
        if !energy.is_finite() || energy > self.ceiling {
            return Err(Error::Divergence(format!("energy {energy:e} at work {work}")));
        }
        let grad_norm_sq = self.functional.grad(mu)?.mu_norm_sq();
        if !grad_norm_sq.is_finite() {
            return Err(Error::Divergence(format!("gradient norm {grad_norm_sq:e} at work {work}")));
        }
        self.running_min = self.running_min.min(grad_norm_sq);
        self.trace.records.push(TraceRecord {
            work,
            energy,
            grad_norm_sq,
            running_min_grad_norm_sq: self.running_min,
            barycenter_norm: mu.barycenter_norm(),
        });
        Ok(())
    }
}

/// Runs one solver until the work budget is exhausted.
///
/// The energy, squared gradient norm and barycenter norm are recorded at
/// work 0, whenever the work crosses a multiple of the stride, and at the
/// end. Randomized methods draw coordinates from `trial_rng(seed, trial)`.
/// `schedule` overrides the analytic one built from the smoothness profile.
pub fn run(
    mu0: &ParticleEnsemble,
    objective: Objective<'_>,
    config: &SolverConfig,
    schedule: Option<&Schedule>,
) -> std::result::Result<ConvergenceTrace, Box<RunFailure>> {
    let functional = objective.functional();
    let mut rec = Recorder {
        functional,
        trace: ConvergenceTrace {
            method: config.method,
            records: Vec::new(),
            final_ensemble: mu0.clone(),
            coordinates: Vec::new(),
            steps: 0,
            work: 0,
            newton_fallbacks: 0,
            max_descent_violation: config.monitor_descent.then_some(f64::NEG_INFINITY),
        },
        ceiling: f64::INFINITY,
        running_min: f64::INFINITY,
    };
    match drive(mu0, objective, config, schedule, &mut rec) {
        Ok(()) => Ok(rec.trace),
        Err(error) => Err(Box::new(RunFailure { error, partial: rec.trace })),
    }
}

fn drive(
    mu0: &ParticleEnsemble,
    objective: Objective<'_>,
    config: &SolverConfig,
    schedule: Option<&Schedule>,
    rec: &mut Recorder<'_>,
) -> Result<()> {
    let functional = objective.functional();
    let method = config.method;
    let d = functional.dim();
    if mu0.dim() != d {
        return Err(config_err(format!("initial ensemble has dimension {}, problem {d}", mu0.dim())));
    }
    let profile = functional.smoothness();
    let schedule = match (method.schedule_mode(), schedule) {
        (None, _) => None,
        (Some(mode), Some(s)) if s.mode == mode && s.dim() == d => Some(s.clone()),
        (Some(_), Some(_)) => return Err(config_err("supplied schedule does not match the method or dimension")),
        (Some(mode), None) => Some(schedule_from_profile(&profile, mode)?),
    };
    let step = match method {
        Method::Wgd => config.step.unwrap_or(1.0 / (profile.l_global + profile.h_global.unwrap_or(0.0))),
        Method::Wpg => config.step.unwrap_or_else(|| profile.eta_global()),
        _ => 0.0,
    };
    if !method.is_randomized() && !(step > 0.0 && step.is_finite()) {
        return Err(config_err(format!("step parameter for {method} must be positive, got {step}")));
    }
    let composite = if method.is_proximal() { Some(objective.composite(method)?) } else { None };
    let stride = config.trace_stride.unwrap_or(d as u64).max(1);
    let cost = method.cost(d);
    let mut rng = trial_rng(config.seed, config.trial);

    let e0 = functional.energy(mu0)?;
    rec.ceiling = 1e6 * (1.0 + e0.abs());
    rec.record(mu0, 0)?;
    let mut mu = mu0.clone();
    let mut energy = e0;
    let mut next_record = stride;
    while rec.trace.work + cost <= config.budget {
        let out: StepOutcome = match method {
            Method::Wgd => wgd_step(&mu, functional, step)?,
            Method::Wpg => wpg_step(&mu, composite.expect("proximal"), step, config.newton_iters)?,
            Method::Rwcd => rwcd_step(&mu, functional, schedule.as_ref().expect("randomized"), &mut rng)?,
            Method::Rwcp => rwcp_step(
                &mu,
                composite.expect("proximal"),
                schedule.as_ref().expect("randomized"),
                &mut rng,
                config.newton_iters,
            )?,
        };
        mu = out.ensemble;
        rec.trace.final_ensemble = mu.clone();
        rec.trace.work += cost;
        rec.trace.steps += 1;
        rec.trace.newton_fallbacks += out.fallbacks as u64;
        if let Some(i) = out.coordinate {
            rec.trace.coordinates.push(i);
        }
        if config.monitor_descent {
            let next = functional.energy(&mu)?;
            let v = (next - energy) / (1.0 + energy.abs());
            if let Some(m) = rec.trace.max_descent_violation.as_mut() {
                *m = m.max(v);
            }
            energy = next;
        }
        if rec.trace.work >= next_record {
            rec.record(&mu, rec.trace.work)?;
            next_record = (rec.trace.work / stride + 1) * stride;
        }
    }
    if rec.trace.records.last().map(|r| r.work) != Some(rec.trace.work) {
        rec.record(&mu, rec.trace.work)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::quadratic_potential;
    use crate::linalg::Matrix;

    fn problem() -> (impl EnergyFunctional, ParticleEnsemble) {
        let p = Matrix::from_row_slice(2, 2, &[10.0, 1.0, 1.0, 1.0]);
        let mu = ParticleEnsemble::new(vec![1.0, -1.0, 0.5, 2.0, -0.3, 0.7], 3, 2).unwrap();
        (quadratic_potential(p).unwrap(), mu)
    }

    #[test]
    fn zero_budget_records_initial_state() {
        let (f, mu) = problem();
        let t = run(&mu, Objective::Smooth(&f), &SolverConfig::new(Method::Rwcd, 0), None).unwrap();
        assert_eq!(t.records.len(), 1);
        assert_eq!(t.records[0].work, 0);
        assert_eq!(t.final_ensemble, mu);
    }

    #[test]
    fn work_accounting_and_monotone_records() {
        let (f, mu) = problem();
        let mut cfg = SolverConfig::new(Method::Wgd, 21);
        cfg.trace_stride = Some(4);
        let t = run(&mu, Objective::Smooth(&f), &cfg, None).unwrap();
        assert_eq!(t.steps, 10);
        assert_eq!(t.work, 20);
        let works: Vec<u64> = t.records.iter().map(|r| r.work).collect();
        assert_eq!(works, vec![0, 4, 8, 12, 16, 20]);
        assert!(t.records.windows(2).all(|w| w[1].running_min_grad_norm_sq <= w[0].running_min_grad_norm_sq));
    }

    #[test]
    fn same_seed_same_trace() {
        let (f, mu) = problem();
        let mut cfg = SolverConfig::new(Method::Rwcd, 300);
        cfg.seed = 11;
        cfg.trial = 4;
        let a = run(&mu, Objective::Smooth(&f), &cfg, None).unwrap();
        let b = run(&mu, Objective::Smooth(&f), &cfg, None).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.coordinates.len(), 300);
        cfg.trial = 5;
        let c = run(&mu, Objective::Smooth(&f), &cfg, None).unwrap();
        assert_ne!(a.coordinates, c.coordinates);
    }

    #[test]
    fn monitored_descent_has_no_increase() {
        let (f, mu) = problem();
        let mut cfg = SolverConfig::new(Method::Rwcd, 200);
        cfg.monitor_descent = true;
        let t = run(&mu, Objective::Smooth(&f), &cfg, None).unwrap();
        assert!(t.max_descent_violation.unwrap() <= 1e-10);
    }

    #[test]
    fn divergence_returns_partial_trace() {
        let (f, mu) = problem();
        let mut cfg = SolverConfig::new(Method::Wgd, 400);
        cfg.step = Some(1.0);
        let err = run(&mu, Objective::Smooth(&f), &cfg, None).unwrap_err();
        assert!(matches!(err.error, Error::Divergence(_)));
        assert!(!err.partial.records.is_empty());
    }

    #[test]
    fn proximal_method_needs_composite() {
        let (f, mu) = problem();
        let err = run(&mu, Objective::Smooth(&f), &SolverConfig::new(Method::Rwcp, 10), None).unwrap_err();
        assert!(matches!(err.error, Error::Config(_)));
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("sgd".parse::<Method>().is_err());
    }
}
