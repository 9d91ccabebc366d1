//! Independent oracles.
//!
//! Each check reaches only the quantities it is not validating: the
//! gradient check uses `energy()`, the subproblem checks evaluate the
//! potential pointwise, and the smoothness certificate draws random
//! ensembles and transports.

mod suites;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub use suites::{run_suite, suite_names, Scale, SUITES};

use crate::ensemble::{column_norm_sq, stream_rng, ParticleEnsemble, RngStream};
use crate::error::Result;
use crate::functionals::{EnergyFunctional, PointPotential, TwoLayerNnEnergy};
use crate::solvers::{solve_scalar, solve_vector, Schedule};

/// Base finite-difference step, scaled by `1 + |x|` per entry.
pub const FD_STEP: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-5;
/// Multiplicative slack on `L_i` in the smoothness certificate.
pub const CERTIFICATE_SLACK: f64 = 1e-6;
pub const DESCENT_IDENTITY_TOLERANCE: f64 = 1e-9;
pub const SCALAR_SUBPROBLEM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub instances: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// The worst instance, kept only when the check fails.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub offending: Option<Value>,
}

impl CheckReport {
    fn start(name: impl Into<String>, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            instances: 0,
            max_rel_error: 0.0,
            tolerance,
            pass: true,
            offending: None,
        }
    }

    /// Counts one instance; `payload` is built only if it is the new worst.
    fn observe(&mut self, err: f64, payload: impl FnOnce() -> Value) {
        self.instances += 1;
        let err = if err.is_nan() { f64::INFINITY } else { err };
        if err > self.max_rel_error || (self.offending.is_none() && err > self.tolerance) {
            self.max_rel_error = self.max_rel_error.max(err);
            self.offending = Some(payload());
        }
    }

    fn finish(mut self) -> Self {
        self.pass = self.max_rel_error <= self.tolerance;
        if self.pass {
            self.offending = None;
        }
        self
    }
}

fn with_entry(mu: &ParticleEnsemble, n: usize, i: usize, value: f64) -> Result<ParticleEnsemble> {
    let mut pts = mu.points().to_vec();
    pts[n * mu.dim() + i] = value;
    ParticleEnsemble::new(pts, mu.n_particles(), mu.dim())
}

/// Central differences of `N·E` against `∇_W E(x_n)_i` for every entry.
///
/// The error of an entry is relative to `max(|g|, 1e−3·max|g|, 1e−10)` so
/// that near-zero components are judged on the scale of the whole field.
pub fn fd_gradient_check(f: &dyn EnergyFunctional, mu: &ParticleEnsemble, h_fd: f64) -> Result<CheckReport> {
    let mut report = CheckReport::start(format!("fd_gradient:{}", f.name()), FD_TOLERANCE);
    let g = f.grad(mu)?;
    let scale = g.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let n_f = mu.n_particles() as f64;
    for n in 0..mu.n_particles() {
        for i in 0..mu.dim() {
            let x = mu.get(n, i);
            let h = h_fd * (1.0 + x.abs());
            let ep = f.energy(&with_entry(mu, n, i, x + h)?)?;
            let em = f.energy(&with_entry(mu, n, i, x - h)?)?;
            let fd = n_f * (ep - em) / (2.0 * h);
            let an = g.row(n)[i];
            let err = (fd - an).abs() / an.abs().max(1e-3 * scale).max(1e-10);
            report.observe(err, || json!({ "particle": n, "coordinate": i, "analytic": an, "finite_difference": fd }));
        }
    }
    Ok(report.finish())
}

/// One certificate draw: an ensemble and a transport of column `i`.
pub struct CertificateDraw {
    pub mu: ParticleEnsemble,
    pub i: usize,
    pub shift: Vec<f64>,
}

/// Checks the pullback Lipschitz bound and the coordinate descent bound
/// with the analytic constant `L_i + H_i` on each draw.
///
/// Per draw the error is the larger of `lhs/(L_i‖s‖) − 1` and the descent
/// excess relative to `(L_i/2)‖s‖²`; negative values are reported as zero.
pub fn certify_draws(
    f: &dyn EnergyFunctional,
    draws: impl IntoIterator<Item = CertificateDraw>,
) -> Result<CheckReport> {
    let mut report = CheckReport::start(format!("smoothness:{}", f.name()), CERTIFICATE_SLACK);
    let prof = f.smoothness();
    for CertificateDraw { mu, i, shift } in draws {
        let l_i = prof.l_coord[i] + prof.h(i);
        let s_sq = column_norm_sq(&shift);
        if s_sq == 0.0 {
            continue;
        }
        let g = f.grad(&mu)?.column(i);
        let moved = mu.coordinate_pushforward(i, &shift)?;
        let g2 = f.grad(&moved)?.column(i);
        let diff: Vec<f64> = g2.iter().zip(&g).map(|(a, b)| a - b).collect();
        let lip = if l_i > 0.0 {
            (column_norm_sq(&diff) / s_sq).sqrt() / l_i - 1.0
        } else if column_norm_sq(&diff) > 0.0 {
            f64::INFINITY
        } else {
            -1.0
        };
        let e0 = f.energy(&mu)?;
        let e1 = f.energy(&moved)?;
        let inner = g.iter().zip(&shift).map(|(a, b)| a * b).sum::<f64>() / shift.len() as f64;
        let quad = 0.5 * l_i * s_sq;
        let excess = (e1 - e0 - inner - quad) / (quad + 1e-12 * (1.0 + e0.abs()));
        let err = lip.max(excess).max(0.0);
        report.observe(err, || {
            json!({ "coordinate": i, "l_i": l_i, "lipschitz_excess": lip, "descent_excess": excess,
                    "shift_norm": s_sq.sqrt() })
        });
    }
    Ok(report.finish())
}

fn gaussian_vec<R: Rng + ?Sized>(rng: &mut R, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Random draws on `R^d`: particles `∼ N(0, magnitude²)`, shifts of random
/// scale `10^{U(−2,0)}·magnitude`, coordinates cycling through `0..d`.
pub fn smoothness_certificate(
    f: &dyn EnergyFunctional,
    coordinate: Option<usize>,
    n_draws: usize,
    magnitude: f64,
    seed: u64,
) -> Result<CheckReport> {
    let d = f.dim();
    let n = 8;
    let mut rng = stream_rng(seed, RngStream::Verification);
    let mut draws = Vec::with_capacity(n_draws);
    for k in 0..n_draws {
        let i = coordinate.unwrap_or(k % d);
        let mu = ParticleEnsemble::new(gaussian_vec(&mut rng, n * d, magnitude), n, d)?;
        let scale = magnitude * 10f64.powf(rng.random_range(-2.0..0.0));
        draws.push(CertificateDraw { mu, i, shift: gaussian_vec(&mut rng, n, scale) });
    }
    certify_draws(f, draws)
}

/// Certificate for the network energy with every draw kept inside its
/// working region, where the constants are valid.
pub fn nn_smoothness_certificate(nn: &TwoLayerNnEnergy, n_draws: usize, seed: u64) -> Result<CheckReport> {
    let reg = nn.region();
    let d = nn.input_dim();
    let dz = d + 3;
    let n = 8;
    let mut rng = stream_rng(seed, RngStream::Verification);
    let mut draws = Vec::with_capacity(n_draws);
    for k in 0..n_draws {
        let i = k % dz;
        let mut pts = Vec::with_capacity(n * dz);
        for _ in 0..n {
            pts.push(rng.random_range(-reg.a..reg.a) * 0.95);
            pts.push(rng.random_range(-reg.b..reg.b) * 0.95);
            let w = gaussian_vec(&mut rng, d, 1.0);
            let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
            let radius = reg.w * 0.95 * rng.random::<f64>().powf(1.0 / d as f64);
            pts.extend(w.iter().map(|v| v * radius / norm));
            pts.push(rng.random_range(-reg.c..reg.c) * 0.95);
        }
        let mu = ParticleEnsemble::new(pts, n, dz)?;
        let scale = 10f64.powf(rng.random_range(-2.0..0.0));
        let mut shift = gaussian_vec(&mut rng, n, scale);
        while !nn.contains(&mu.coordinate_pushforward(i, &shift)?) {
            shift.iter_mut().for_each(|s| *s *= 0.5);
        }
        draws.push(CertificateDraw { mu, i, shift });
    }
    certify_draws(nn, draws)
}

/// Compares `Σ_i p_i E[μ after step i]` with `E[μ] − ‖∇E‖²/(2 L_sum)`.
///
/// Exact for quadratic potentials with `γ_i = 1/L_i`; the error is relative
/// to `|E[μ]|`.
pub fn expected_descent_identity(
    f: &dyn EnergyFunctional,
    mu: &ParticleEnsemble,
    schedule: &Schedule,
) -> Result<CheckReport> {
    let mut report = CheckReport::start(format!("descent_identity:d={}", f.dim()), DESCENT_IDENTITY_TOLERANCE);
    let e = f.energy(mu)?;
    let g = f.grad(mu)?;
    let l_sum = f.smoothness().l_sum;
    let mut expected = 0.0;
    for i in 0..f.dim() {
        let p = schedule.probabilities[i];
        if p == 0.0 {
            continue;
        }
        let s: Vec<f64> = g.column(i).iter().map(|v| -schedule.step(i) * v).collect();
        expected += p * f.energy(&mu.coordinate_pushforward(i, &s)?)?;
    }
    let predicted = e - g.mu_norm_sq() / (2.0 * l_sum);
    let denom = if e.abs() > 0.0 { e.abs() } else { 1.0 };
    let err = (expected - predicted).abs() / denom;
    report.observe(err, || json!({ "energy": e, "expected_after": expected, "predicted": predicted }));
    Ok(report.finish())
}

/// A scalar subproblem `min_s s g + η/2 s² + V(x + s e_i)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalarInstance {
    pub x: Vec<f64>,
    pub i: usize,
    pub g: f64,
    pub eta: f64,
}

/// A vector subproblem `min_v v·g + η/2 ‖v‖² + V(x + v)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VectorInstance {
    pub x: Vec<f64>,
    pub g: Vec<f64>,
    pub eta: f64,
}

/// Cube `[−half_width, half_width]^d` searched coarse to fine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub half_width: f64,
    pub levels: [f64; 3],
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { half_width: 1.0, levels: [0.05, 0.01, 1e-3] }
    }
}

impl GridSpec {
    pub fn resolution(&self) -> f64 {
        self.levels[2]
    }
}

/// Minimizer of a convex `ψ` by repeated 100-interval grids, zooming to
/// the two cells around the best point.
fn zoom_argmin(psi: impl Fn(f64) -> f64) -> f64 {
    let mut r = 1.0;
    while r < 1e12 && (psi(r) < psi(0.5 * r) || psi(-r) < psi(-0.5 * r)) {
        r *= 2.0;
    }
    let (mut lo, mut hi) = (-r, r);
    for _ in 0..80 {
        let h = (hi - lo) / 100.0;
        let best = (0..=100)
            .map(|k| lo + h * k as f64)
            .map(|s| (s, psi(s)))
            .fold((lo, f64::INFINITY), |acc, p| if p.1 < acc.1 { p } else { acc });
        lo = best.0 - h;
        hi = best.0 + h;
        if hi - lo <= 1e-13 * (1.0 + best.0.abs()) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Newton's scalar solution against a value-only grid search, error
/// `|Δs| / (1 + |s*|)`.
pub fn subproblem_bruteforce_scalar(
    pot: &dyn PointPotential,
    instances: &[ScalarInstance],
    newton_iters: usize,
) -> CheckReport {
    let mut report = CheckReport::start("subproblem:scalar", SCALAR_SUBPROBLEM_TOLERANCE);
    for inst in instances {
        let newton = solve_scalar(pot.coordinate_line(&inst.x, inst.i), inst.g, inst.eta, newton_iters).s;
        let psi = |s: f64| {
            let mut y = inst.x.clone();
            y[inst.i] += s;
            s * inst.g + 0.5 * inst.eta * s * s + pot.value(&y)
        };
        let grid = zoom_argmin(psi);
        let err = (newton - grid).abs() / (1.0 + grid.abs());
        report.observe(err, || json!({ "instance": inst, "newton": newton, "grid": grid }));
    }
    report.finish()
}

/// Newton's vector solution against a multi-level grid over the cube;
/// error is the largest componentwise gap, tolerance twice the finest cell.
pub fn subproblem_bruteforce_vector(
    pot: &dyn PointPotential,
    instances: &[VectorInstance],
    newton_iters: usize,
    grid: GridSpec,
) -> CheckReport {
    let mut report = CheckReport::start("subproblem:vector", 2.0 * grid.resolution());
    for inst in instances {
        let newton = solve_vector(pot, &inst.x, &inst.g, inst.eta, newton_iters).v;
        let phi = |v: &[f64]| {
            let y: Vec<f64> = inst.x.iter().zip(v).map(|(a, b)| a + b).collect();
            let lin: f64 = v.iter().zip(&inst.g).map(|(a, b)| a * b).sum();
            lin + 0.5 * inst.eta * v.iter().map(|a| a * a).sum::<f64>() + pot.value(&y)
        };
        let d = inst.x.len();
        let mut center = vec![0.0; d];
        let mut half = grid.half_width;
        for (level, h) in grid.levels.iter().enumerate() {
            let lo: Vec<f64> = center.iter().map(|c| c - half).collect();
            let hi: Vec<f64> = center.iter().map(|c| c + half).collect();
            center = grid_search(&phi, &lo, &hi, *h, level == 0, grid.half_width);
            half = 2.0 * h;
        }
        let err = newton.iter().zip(&center).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        report.observe(err, || json!({ "instance": inst, "newton": newton, "grid": center }));
    }
    report.finish()
}

/// Exhaustive search over a box with spacing `h`, clipped to the outer cube.
fn grid_search(phi: &dyn Fn(&[f64]) -> f64, lo: &[f64], hi: &[f64], h: f64, first: bool, outer: f64) -> Vec<f64> {
    let d = lo.len();
    let axes: Vec<Vec<f64>> = (0..d)
        .map(|k| {
            let (a, b) = if first { (lo[k], hi[k]) } else { (lo[k].max(-outer), hi[k].min(outer)) };
            let m = ((b - a) / h).round() as usize;
            (0..=m).map(|j| a + h * j as f64).collect()
        })
        .collect();
    let mut idx = vec![0usize; d];
    let mut point: Vec<f64> = axes.iter().map(|a| a[0]).collect();
    let mut best = (point.clone(), f64::INFINITY);
    loop {
        let v = phi(&point);
        if v < best.1 {
            best = (point.clone(), v);
        }
        let mut k = 0;
        loop {
            if k == d {
                return best.0;
            }
            idx[k] += 1;
            if idx[k] < axes[k].len() {
                point[k] = axes[k][idx[k]];
                break;
            }
            idx[k] = 0;
            point[k] = axes[k][0];
            k += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::{quadratic_potential, SmoothedL1};
    use crate::linalg::Matrix;
    use crate::solvers::{schedule_from_profile, ScheduleMode};

    #[test]
    fn fd_check_on_quadratic() {
        let p = Matrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0]);
        let f = quadratic_potential(p).unwrap();
        let mu = ParticleEnsemble::new(vec![0.3, -1.0, 2.0, 0.7, -0.2, 0.1], 3, 2).unwrap();
        let r = fd_gradient_check(&f, &mu, FD_STEP).unwrap();
        assert!(r.pass && r.max_rel_error < 1e-9, "{r:?}");
        assert_eq!(r.instances, 6);
    }

    /// Delegates to a potential energy but claims half its constants.
    struct Understated(crate::functionals::PotentialEnergy);

    impl EnergyFunctional for Understated {
        fn name(&self) -> String {
            "understated".into()
        }
        fn dim(&self) -> usize {
            self.0.dim()
        }
        fn energy(&self, mu: &ParticleEnsemble) -> Result<f64> {
            self.0.energy(mu)
        }
        fn grad(&self, mu: &ParticleEnsemble) -> Result<crate::ensemble::GradientField> {
            self.0.grad(mu)
        }
        fn coord_grad(&self, mu: &ParticleEnsemble, i: usize) -> Result<Vec<f64>> {
            self.0.coord_grad(mu, i)
        }
        fn smoothness(&self) -> crate::functionals::SmoothnessProfile {
            let p = self.0.smoothness();
            crate::functionals::SmoothnessProfile::new(p.l_global / 2.0, p.l_coord.iter().map(|l| l / 2.0).collect())
        }
    }

    #[test]
    fn understated_constant_is_caught() {
        let f = quadratic_potential(Matrix::from_diagonal_element(2, 2, 4.0)).unwrap();
        assert!(smoothness_certificate(&f, None, 30, 1.0, 1).unwrap().pass);
        let r = smoothness_certificate(&Understated(f), None, 30, 1.0, 1).unwrap();
        assert!(!r.pass);
        assert!(r.offending.is_some());
    }

    #[test]
    fn quadratic_certificate_is_tight() {
        let f = quadratic_potential(Matrix::from_diagonal_element(3, 3, 2.0)).unwrap();
        let mu = ParticleEnsemble::new(vec![0.0; 6], 2, 3).unwrap();
        let draw = CertificateDraw { mu, i: 1, shift: vec![1.0, -2.0] };
        let r = certify_draws(&f, [draw]).unwrap();
        assert!(r.pass && r.max_rel_error < 1e-12);
    }

    #[test]
    fn descent_identity_at_optimum() {
        let f = quadratic_potential(Matrix::from_diagonal_element(2, 2, 5.0)).unwrap();
        let s = schedule_from_profile(&f.smoothness(), ScheduleMode::Rwcd).unwrap();
        let mu = ParticleEnsemble::new(vec![0.0; 4], 2, 2).unwrap();
        let r = expected_descent_identity(&f, &mu, &s).unwrap();
        assert!(r.pass && r.max_rel_error == 0.0);
    }

    #[test]
    fn scalar_grid_matches_closed_form() {
        let pot = SmoothedL1::new(vec![0.0; 2], Matrix::identity(2, 2), 0.1).unwrap();
        let inst = ScalarInstance { x: vec![0.2, 0.3], i: 0, g: 1.5, eta: 3.0 };
        let r = subproblem_bruteforce_scalar(&pot, &[inst], 20);
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn vector_grid_matches_newton() {
        let pot = SmoothedL1::new(vec![0.5, 1.0, 0.2], Matrix::identity(3, 3), 0.05).unwrap();
        let inst = VectorInstance { x: vec![0.1, -0.2, 0.3], g: vec![1.0, 0.5, -2.0], eta: 5.0 };
        let r = subproblem_bruteforce_vector(&pot, &[inst], 20, GridSpec::default());
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn report_keeps_worst_offender() {
        let mut r = CheckReport::start("t", 1.0);
        r.observe(0.5, || json!(1));
        r.observe(3.0, || json!(2));
        r.observe(2.0, || json!(3));
        let r = r.finish();
        assert!(!r.pass);
        assert_eq!(r.max_rel_error, 3.0);
        assert_eq!(r.offending, Some(json!(2)));
    }
}
