//! Problem constructors and the multi-trial experiment driver.

mod examples;
mod spec;

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde_json::{json, Map, Value};

pub use examples::{
    build_custom, build_example1, build_example2, build_example3, build_example4, build_example5, build_problem,
    solve_regularizer_weights, teacher_direction, EXAMPLE1_OFFDIAG, MAX_WEIGHT_RESIDUAL,
};
pub use spec::{apply_override, ExampleName, ExperimentSpec, ProblemParams, SCHEMA_VERSION};

use crate::ensemble::{sample_ensemble, Distribution, ParticleEnsemble};
use crate::error::{config_err, Error, Result};
use crate::functionals::{CompositeFunctional, EnergyFunctional, TwoLayerNnEnergy};
use crate::metrics::{aggregate, AggregateCurve, TraceField};
use crate::solvers::{run, schedule_from_profile, ConvergenceTrace, Method, Objective, SolverConfig};

/// A built problem: the energy, its composite split when it has one, and
/// the initial distribution.
#[derive(Clone)]
pub struct Problem {
    pub example: ExampleName,
    pub functional: Arc<dyn EnergyFunctional>,
    pub composite: Option<CompositeFunctional>,
    /// Set for the network example, whose constants hold only on a region.
    pub nn: Option<Arc<TwoLayerNnEnergy>>,
    pub init: Distribution,
    /// Construction outputs worth reporting (solved weights, realized constants).
    pub realized: Map<String, Value>,
}

impl Problem {
    pub fn dim(&self) -> usize {
        self.functional.dim()
    }

    pub fn objective(&self) -> Objective<'_> {
        match &self.composite {
            Some(c) => Objective::Composite(c),
            None => Objective::Smooth(self.functional.as_ref()),
        }
    }

    pub fn known_minimum(&self) -> Option<f64> {
        self.functional.known_minimum()
    }

    /// Initial ensemble shared by every trial of an experiment.
    pub fn initial_ensemble(&self, n: usize, seed: u64) -> Result<ParticleEnsemble> {
        sample_ensemble(&self.init, n, self.dim(), seed)
    }

    /// Smoothness profile, schedules and `𝒞` as a JSON object.
    pub fn constants(&self) -> Result<Value> {
        let prof = self.functional.smoothness();
        let mut out = Map::new();
        out.insert("dim".into(), json!(self.dim()));
        out.insert("l_global".into(), json!(prof.l_global));
        out.insert("l_coord".into(), json!(prof.l_coord));
        out.insert("l_sum".into(), json!(prof.l_sum));
        if let Some(h) = prof.h_global {
            out.insert("h_global".into(), json!(h));
        }
        if let Some(h) = &prof.h_coord {
            out.insert("h_coord".into(), json!(h));
        }
        out.insert("eta".into(), json!(prof.eta()));
        out.insert("eta_global".into(), json!(prof.eta_global()));
        out.insert("complexity_constant".into(), json!(prof.complexity_constant()));
        let mut schedules = Map::new();
        for m in [Method::Rwcd, Method::Rwcp] {
            if m == Method::Rwcp && self.composite.is_none() {
                continue;
            }
            let s = schedule_from_profile(&prof, m.schedule_mode().expect("randomized"))?;
            schedules.insert(m.to_string(), json!({ "p": s.probabilities, "steps": s.steps }));
        }
        out.insert("schedules".into(), Value::Object(schedules));
        out.insert("known_minimum".into(), json!(self.known_minimum()));
        out.insert("realized".into(), Value::Object(self.realized.clone()));
        Ok(Value::Object(out))
    }
}

/// One solver run inside an experiment.
#[derive(Debug, Clone)]
pub struct TrialRun {
    pub trial: u64,
    pub trace: ConvergenceTrace,
    pub error: Option<Error>,
}

#[derive(Debug, Clone)]
pub struct MethodRuns {
    pub method: Method,
    pub runs: Vec<TrialRun>,
    /// Aggregates over successful runs, one per [`TraceField`]. Empty for
    /// deterministic methods and when every run failed.
    pub aggregates: Vec<AggregateCurve>,
}

impl MethodRuns {
    pub fn aggregate(&self, field: TraceField) -> Option<&AggregateCurve> {
        self.aggregates.iter().find(|a| a.field == field)
    }

    pub fn successful(&self) -> impl Iterator<Item = &TrialRun> {
        self.runs.iter().filter(|r| r.error.is_none())
    }
}

pub struct ExperimentOutcome {
    pub spec: ExperimentSpec,
    pub problem: Problem,
    pub methods: Vec<MethodRuns>,
    pub wall_time_s: f64,
}

impl ExperimentOutcome {
    pub fn method(&self, m: Method) -> Option<&MethodRuns> {
        self.methods.iter().find(|r| r.method == m)
    }

    pub fn failures(&self) -> Vec<(Method, u64, &Error)> {
        self.methods
            .iter()
            .flat_map(|m| m.runs.iter().filter_map(move |r| r.error.as_ref().map(|e| (m.method, r.trial, e))))
            .collect()
    }

    pub fn diverged(&self) -> bool {
        self.failures().iter().any(|(_, _, e)| matches!(e, Error::Divergence(_)))
    }

    /// Summary document written next to the traces.
    pub fn summary(&self) -> Result<Value> {
        let mut methods = Map::new();
        for m in &self.methods {
            let mut entry = Map::new();
            entry.insert("runs".into(), json!(m.runs.len()));
            entry.insert("successful".into(), json!(m.successful().count()));
            let finals: Vec<Value> = m
                .runs
                .iter()
                .map(|r| {
                    let last = r.trace.final_record();
                    json!({
                        "trial": r.trial,
                        "seed": trial_seed(self.spec.seed, r.trial),
                        "work": r.trace.work,
                        "final_energy": last.map(|l| l.energy),
                        "final_grad_norm_sq": last.map(|l| l.grad_norm_sq),
                        "newton_fallbacks": r.trace.newton_fallbacks,
                    })
                })
                .collect();
            entry.insert("trials".into(), Value::Array(finals));
            if let Some(a) = m.aggregate(TraceField::Energy) {
                entry.insert("final_energy_median".into(), json!(a.median.last()));
            }
            methods.insert(m.method.to_string(), Value::Object(entry));
        }
        let failures: Vec<Value> = self
            .failures()
            .iter()
            .map(|(m, t, e)| json!({ "method": m.to_string(), "trial": t, "error": e.to_string() }))
            .collect();
        let spec = serde_json::to_value(&self.spec).map_err(|e| config_err(e.to_string()))?;
        Ok(json!({
            "schema_version": SCHEMA_VERSION,
            "spec": spec,
            "seed": self.spec.seed,
            "constants": self.problem.constants()?,
            "methods": methods,
            "failures": failures,
            "partial": !failures.is_empty(),
            "wall_time_s": self.wall_time_s,
        }))
    }
}

/// Seed of trial `k` for run seed `s`: `s ^ k`, matching `trial_rng`.
pub fn trial_seed(seed: u64, trial: u64) -> u64 {
    seed ^ trial
}

/// Builds the problem and runs every configured method.
///
/// Randomized methods run `trials` times on independent coordinate streams
/// from a shared initial ensemble; deterministic methods run once. Trials
/// execute on a pool of `threads` workers and results are ordered by trial
/// index, so outputs do not depend on the thread count.
pub fn run_experiment(spec: &ExperimentSpec, threads: usize) -> Result<ExperimentOutcome> {
    let start = Instant::now();
    spec.validate()?;
    let problem = build_problem(spec)?;
    let methods = spec.methods();
    if methods.iter().any(|m| m.is_proximal()) && problem.composite.is_none() {
        return Err(config_err(format!("{} has no regularizer; wpg/rwcp need one", spec.name)));
    }
    let mu0 = problem.initial_ensemble(spec.particles(), spec.seed)?;
    let budget = spec.budget()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| config_err(format!("thread pool: {e}")))?;

    let mut results = Vec::new();
    for method in methods {
        let n_runs = if method.is_randomized() { spec.trials() as u64 } else { 1 };
        let base = SolverConfig {
            method,
            budget,
            step: match method {
                Method::Wgd => spec.wgd_step,
                Method::Wpg => spec.wpg_eta,
                _ => None,
            },
            newton_iters: spec.newton_iters,
            seed: spec.seed,
            trial: 0,
            trace_stride: spec.trace_stride,
            monitor_descent: false,
        };
        let runs: Vec<TrialRun> = pool.install(|| {
            (0..n_runs)
                .into_par_iter()
                .map(|trial| {
                    let cfg = SolverConfig { trial, ..base.clone() };
                    match run(&mu0, problem.objective(), &cfg, None) {
                        Ok(trace) => TrialRun { trial, trace, error: None },
                        Err(f) => {
                            log::warn!("{method} trial {trial} failed: {f}");
                            TrialRun { trial, trace: f.partial, error: Some(f.error) }
                        }
                    }
                })
                .collect()
        });
        if let Some(cfg_err) = runs.iter().find_map(|r| match &r.error {
            Some(e @ Error::Config(_)) => Some(e.clone()),
            _ => None,
        }) {
            return Err(cfg_err);
        }
        let mut aggregates = Vec::new();
        if method.is_randomized() {
            let ok: Vec<&ConvergenceTrace> =
                runs.iter().filter(|r| r.error.is_none()).map(|r| &r.trace).collect();
            if !ok.is_empty() {
                for field in TraceField::ALL {
                    aggregates.push(aggregate(&ok, field)?);
                }
            }
        }
        results.push(MethodRuns { method, runs, aggregates });
    }
    Ok(ExperimentOutcome {
        spec: spec.clone(),
        problem,
        methods: results,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Final energies of all successful runs of `method`, by trial.
pub fn final_energies(outcome: &ExperimentOutcome, method: Method) -> BTreeMap<u64, f64> {
    outcome
        .method(method)
        .map(|m| {
            m.successful()
                .filter_map(|r| r.trace.final_record().map(|l| (r.trial, l.energy)))
                .collect()
        })
        .unwrap_or_default()
}
