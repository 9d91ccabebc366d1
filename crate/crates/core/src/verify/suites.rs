//! Named oracle suites shared by the `check` command and the test suite.

use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{
    expected_descent_identity, fd_gradient_check, nn_smoothness_certificate, smoothness_certificate,
    subproblem_bruteforce_scalar, subproblem_bruteforce_vector, CheckReport, GridSpec, ScalarInstance,
    VectorInstance, FD_STEP,
};
use crate::ensemble::{stream_rng, ParticleEnsemble, RngStream};
use crate::error::{config_err, Error, Result};
use crate::functionals::{
    function_of_mean, mmd_energy, quadratic_interaction, quadratic_potential, smoothed_l1_potential,
    two_layer_nn_energy, EnergyFunctional, NeuronRegion, PointPotential, SmoothedL1, TwoLayerNnEnergy,
};
use crate::harness::{build_problem, ExampleName, ExperimentSpec, EXAMPLE1_OFFDIAG};
use crate::linalg::{log_spaced, random_orthogonal, Matrix};
use crate::solvers::{schedule_from_profile, ScheduleMode, DEFAULT_NEWTON_ITERS};

pub const SUITES: [&str; 4] = ["fd-grad", "smoothness", "descent-identity", "subproblem"];

const SUITE_SEED: u64 = 2024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Small,
    Full,
}

impl FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "small" => Ok(Scale::Small),
            "full" => Ok(Scale::Full),
            _ => Err(config_err(format!("unknown scale `{s}` (expected small or full)"))),
        }
    }
}

pub fn suite_names() -> &'static [&'static str] {
    &SUITES
}

/// Runs a suite; `functional` restricts it to one family or example.
pub fn run_suite(name: &str, scale: Scale, functional: Option<&str>) -> Result<Vec<CheckReport>> {
    match name {
        "fd-grad" => fd_suite(scale, functional),
        "smoothness" => smoothness_suite(scale, functional),
        "descent-identity" => descent_suite(scale),
        "subproblem" => subproblem_suite(scale),
        _ => Err(config_err(format!("unknown check suite `{name}` (expected one of {})", SUITES.join(", ")))),
    }
}

fn normals(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

fn random_ensemble(rng: &mut ChaCha8Rng, n: usize, d: usize, scale: f64) -> Result<ParticleEnsemble> {
    ParticleEnsemble::new(normals(rng, n * d, scale), n, d)
}

/// `BᵀB/d + 0.1 I` for Gaussian `B`.
fn random_psd(rng: &mut ChaCha8Rng, d: usize) -> Matrix {
    let b = Matrix::from_vec(d, d, normals(rng, d * d, 1.0));
    let m = b.transpose() * &b / d as f64 + Matrix::identity(d, d) * 0.1;
    (&m + m.transpose()) * 0.5
}

fn random_symmetric(rng: &mut ChaCha8Rng, d: usize) -> Matrix {
    let b = Matrix::from_vec(d, d, normals(rng, d * d, 1.0));
    (&b + b.transpose()) * 0.5
}

fn small_nn(rng: &mut ChaCha8Rng, k: usize, d: usize) -> Result<TwoLayerNnEnergy> {
    let data = normals(rng, k * d, 1.0);
    let targets = data.chunks(d).map(|x| (x.iter().sum::<f64>() * 0.7 + 0.2).tanh() + 0.1).collect();
    two_layer_nn_energy(data, d, targets, NeuronRegion { a: 3.0, b: 3.0, w: 8.0, c: 3.0 })
}

fn small_regularizer(rng: &mut ChaCha8Rng, d: usize, eps: f64) -> Result<SmoothedL1> {
    let a = random_orthogonal(d, None, rng);
    let r = (0..d).map(|_| rng.random_range(0.5..2.0)).collect();
    SmoothedL1::new(r, a, eps)
}

/// The six functional families on small random instances.
fn families(rng: &mut ChaCha8Rng, d: usize) -> Result<Vec<(&'static str, Arc<dyn EnergyFunctional>)>> {
    let target = random_ensemble(rng, 5, 3, 1.0)?;
    let reg = small_regularizer(rng, d, 0.1)?;
    Ok(vec![
        ("quadratic_potential", Arc::new(quadratic_potential(random_psd(rng, d))?)),
        ("quadratic_interaction", Arc::new(quadratic_interaction(random_psd(rng, d))?)),
        ("mmd", Arc::new(mmd_energy(target, log_spaced(1e-3, 1.0, 3))?)),
        ("function_of_mean", Arc::new(function_of_mean(random_symmetric(rng, d))?)),
        (
            "smoothed_l1",
            Arc::new(smoothed_l1_potential(reg.weights().to_vec(), reg.rotation().clone(), reg.eps())?),
        ),
        ("two_layer_nn", Arc::new(small_nn(rng, 5, 2)?)),
    ])
}

fn selected(filter: Option<&str>, name: &str) -> bool {
    filter.is_none_or(|f| f == name)
}

fn fd_suite(scale: Scale, filter: Option<&str>) -> Result<Vec<CheckReport>> {
    let mut rng = stream_rng(SUITE_SEED, RngStream::Verification);
    let (n, d) = match scale {
        Scale::Small => (5, 3),
        Scale::Full => (10, 5),
    };
    let mut out = Vec::new();
    for (name, f) in families(&mut rng, d)? {
        if !selected(filter, name) {
            continue;
        }
        let (n, scale) = match name {
            "two_layer_nn" => (3, 0.3),
            "smoothed_l1" => (n, 0.3),
            _ => (n, 1.0),
        };
        let mu = random_ensemble(&mut rng, n, f.dim(), scale)?;
        out.push(fd_gradient_check(f.as_ref(), &mu, FD_STEP)?);
    }
    if out.is_empty() {
        return Err(config_err(format!("no functional family named `{}`", filter.unwrap_or(""))));
    }
    Ok(out)
}

fn example_spec(name: ExampleName, scale: Scale) -> ExperimentSpec {
    let mut s = ExperimentSpec::example(name);
    s.seed = SUITE_SEED;
    if scale == Scale::Small && name != ExampleName::Example1 {
        s.dim = Some(10);
        s.problem.data_samples = Some(100);
        s.problem.target_particles = Some(20);
    }
    s
}

fn smoothness_suite(scale: Scale, filter: Option<&str>) -> Result<Vec<CheckReport>> {
    let draws = match scale {
        Scale::Small => 40,
        Scale::Full => 200,
    };
    let mut rng = stream_rng(SUITE_SEED, RngStream::Verification);
    let mut out = Vec::new();
    for (k, (name, f)) in families(&mut rng, 4)?.into_iter().enumerate() {
        if !selected(filter, name) {
            continue;
        }
        let seed = SUITE_SEED + k as u64;
        let report = match name {
            "two_layer_nn" => {
                let nn = small_nn(&mut stream_rng(seed, RngStream::ProblemData), 5, 2)?;
                nn_smoothness_certificate(&nn, draws, seed)?
            }
            "function_of_mean" => {
                let a = Matrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, -1.0, 0.5, 2.0]));
                smoothness_certificate(&function_of_mean(a)?, None, draws, 1.0, seed)?
            }
            "smoothed_l1" => smoothness_certificate(f.as_ref(), None, draws, 0.1, seed)?,
            _ => smoothness_certificate(f.as_ref(), None, draws, 1.0, seed)?,
        };
        out.push(report);
    }
    for name in [
        ExampleName::Example1,
        ExampleName::Example2,
        ExampleName::Example3,
        ExampleName::Example4,
        ExampleName::Example5,
    ] {
        if !selected(filter, name.as_str()) {
            continue;
        }
        let problem = build_problem(&example_spec(name, scale))?;
        let mut report = match &problem.nn {
            Some(nn) => nn_smoothness_certificate(nn, draws, SUITE_SEED)?,
            None => {
                let magnitude = if name == ExampleName::Example4 { 0.1 } else { 1.0 };
                smoothness_certificate(problem.functional.as_ref(), None, draws, magnitude, SUITE_SEED)?
            }
        };
        report.name = format!("smoothness:{name}");
        out.push(report);
    }
    if out.is_empty() {
        return Err(config_err(format!("no functional named `{}`", filter.unwrap_or(""))));
    }
    Ok(out)
}

fn descent_suite(scale: Scale) -> Result<Vec<CheckReport>> {
    let n = match scale {
        Scale::Small => 10,
        Scale::Full => 50,
    };
    let mut rng = stream_rng(SUITE_SEED, RngStream::Verification);
    let example1 = Matrix::from_row_slice(2, 2, &[1000.0, EXAMPLE1_OFFDIAG, EXAMPLE1_OFFDIAG, 1.0]);
    let diag5 = Matrix::from_diagonal(&nalgebra::DVector::from_iterator(
        5,
        (0..5).map(|_| rng.random_range(0.5..50.0)),
    ));
    let dense20 = random_psd(&mut rng, 20);
    let mut out = Vec::new();
    for p in [example1, diag5, dense20] {
        let d = p.nrows();
        let f = quadratic_potential(p)?;
        let sched = schedule_from_profile(&f.smoothness(), ScheduleMode::Rwcd)?;
        for mu in [random_ensemble(&mut rng, n, d, 1.0)?, ParticleEnsemble::new(vec![0.0; n * d], n, d)?] {
            out.push(expected_descent_identity(&f, &mu, &sched)?);
        }
    }
    Ok(out)
}

fn subproblem_suite(scale: Scale) -> Result<Vec<CheckReport>> {
    let (n_scalar, n_vector) = match scale {
        Scale::Small => (30, 3),
        Scale::Full => (100, 10),
    };
    let mut rng = stream_rng(SUITE_SEED, RngStream::Verification);

    let problem = build_problem(&example_spec(ExampleName::Example4, scale))?;
    let c = problem.composite.as_ref().expect("example4 is composite");
    let prof = c.smoothness();
    let eta = prof.eta();
    let d = problem.dim();
    let h = prof.h_coord.clone().unwrap_or_default();
    let stiffest = (0..d).max_by(|a, b| h[*a].total_cmp(&h[*b])).unwrap_or(0);
    let scalar: Vec<ScalarInstance> = (0..n_scalar)
        .map(|k| {
            let i = if k % 4 == 0 { stiffest } else { rng.random_range(0..d) };
            let x: Vec<f64> = normals(&mut rng, d, 0.125).iter().map(|v| v + 0.125).collect();
            let g = rng.sample::<f64, _>(StandardNormal) * 10.0;
            ScalarInstance { x, i, g, eta: eta[i] }
        })
        .collect();
    let mut out = vec![subproblem_bruteforce_scalar(c.potential(), &scalar, DEFAULT_NEWTON_ITERS)];

    let reg = small_regularizer(&mut rng, 3, 0.01)?;
    let eta_v = 2.0 * reg.global_smoothness();
    let vector: Vec<VectorInstance> = (0..n_vector)
        .map(|_| VectorInstance {
            x: normals(&mut rng, 3, 0.1),
            g: normals(&mut rng, 3, 0.3 * eta_v),
            eta: eta_v,
        })
        .collect();
    out.push(subproblem_bruteforce_vector(&reg, &vector, DEFAULT_NEWTON_ITERS, GridSpec::default()));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_suite_is_config_error() {
        assert!(matches!(run_suite("nope", Scale::Small, None), Err(Error::Config(_))));
        assert!("medium".parse::<Scale>().is_err());
    }

    #[test]
    fn small_suites_pass() {
        for name in ["fd-grad", "descent-identity"] {
            for r in run_suite(name, Scale::Small, None).unwrap() {
                assert!(r.pass, "{r:?}");
            }
        }
    }
}
