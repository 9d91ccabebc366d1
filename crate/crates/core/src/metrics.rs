//! Convergence diagnostics and cross-trial aggregation.

use serde::{Deserialize, Serialize};

use crate::ensemble::ParticleEnsemble;
use crate::error::{config_err, Result};
use crate::functionals::EnergyFunctional;
use crate::solvers::{ConvergenceTrace, TraceRecord};

/// `‖∇_W E[μ]‖²_μ`.
pub fn grad_norm_sq(mu: &ParticleEnsemble, functional: &dyn EnergyFunctional) -> Result<f64> {
    Ok(functional.grad(mu)?.mu_norm_sq())
}

/// `E_k − E_*` for every record. Values below `−1e−8` are logged as a sign
/// that `E_*` is wrong; they are returned unchanged.
pub fn energy_gap(trace: &ConvergenceTrace, e_star: f64) -> Vec<f64> {
    let gaps: Vec<f64> = trace.records.iter().map(|r| r.energy - e_star).collect();
    if let Some(worst) = gaps.iter().cloned().reduce(f64::min).filter(|g| *g < -1e-8) {
        log::warn!("energy falls {worst:e} below the declared minimum {e_star}");
    }
    gaps
}

pub fn running_min(values: &[f64]) -> Vec<f64> {
    let mut best = f64::INFINITY;
    values
        .iter()
        .map(|v| {
            best = best.min(*v);
            best
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceField {
    Energy,
    GradNormSq,
    RunningMinGradNormSq,
    BarycenterNorm,
}

impl TraceField {
    pub const ALL: [TraceField; 4] = [
        TraceField::Energy,
        TraceField::GradNormSq,
        TraceField::RunningMinGradNormSq,
        TraceField::BarycenterNorm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TraceField::Energy => "energy",
            TraceField::GradNormSq => "grad_norm_sq",
            TraceField::RunningMinGradNormSq => "running_min_grad_norm_sq",
            TraceField::BarycenterNorm => "barycenter_norm",
        }
    }

    pub fn value(self, r: &TraceRecord) -> f64 {
        match self {
            TraceField::Energy => r.energy,
            TraceField::GradNormSq => r.grad_norm_sq,
            TraceField::RunningMinGradNormSq => r.running_min_grad_norm_sq,
            TraceField::BarycenterNorm => r.barycenter_norm,
        }
    }
}

/// Median and 10/90 % band of one field across trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateCurve {
    pub field: TraceField,
    pub work: Vec<u64>,
    pub median: Vec<f64>,
    pub p10: Vec<f64>,
    pub p90: Vec<f64>,
    pub n_trials: usize,
}

/// Nearest-rank quantile of sorted data: element number `ceil(q n)`.
pub fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    // the slack keeps q n = 5.000…01 from rounding up to rank 6
    let rank = ((q * n as f64) - 1e-9).ceil().max(1.0) as usize;
    sorted[rank.min(n) - 1]
}

/// Aligns traces on the union of their work grids (last value carried
/// forward) and takes pointwise nearest-rank quantiles.
pub fn aggregate(traces: &[&ConvergenceTrace], field: TraceField) -> Result<AggregateCurve> {
    if traces.is_empty() {
        return Err(config_err("cannot aggregate an empty set of traces"));
    }
    if traces.iter().any(|t| t.records.is_empty()) {
        return Err(config_err("cannot aggregate a trace without records"));
    }
    let mut work: Vec<u64> = traces.iter().flat_map(|t| t.records.iter().map(|r| r.work)).collect();
    work.sort_unstable();
    work.dedup();

    let columns: Vec<Vec<f64>> = traces.iter().map(|t| carry_forward(t, &work, field)).collect();
    let mut median = Vec::with_capacity(work.len());
    let mut p10 = Vec::with_capacity(work.len());
    let mut p90 = Vec::with_capacity(work.len());
    let mut slice = vec![0.0; traces.len()];
    for k in 0..work.len() {
        for (s, col) in slice.iter_mut().zip(&columns) {
            *s = col[k];
        }
        slice.sort_by(f64::total_cmp);
        median.push(nearest_rank(&slice, 0.5));
        p10.push(nearest_rank(&slice, 0.1));
        p90.push(nearest_rank(&slice, 0.9));
    }
    Ok(AggregateCurve { field, work, median, p10, p90, n_trials: traces.len() })
}

fn carry_forward(trace: &ConvergenceTrace, grid: &[u64], field: TraceField) -> Vec<f64> {
    let recs = &trace.records;
    let mut j = 0;
    grid.iter()
        .map(|w| {
            while j + 1 < recs.len() && recs[j + 1].work <= *w {
                j += 1;
            }
            field.value(&recs[j])
        })
        .collect()
}
