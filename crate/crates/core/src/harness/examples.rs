use std::sync::Arc;

use nalgebra::DVector;
use serde_json::{json, Map};

use super::spec::{ExampleName, ExperimentSpec};
use super::Problem;
use crate::ensemble::{stream_rng, Distribution, RngStream};
use crate::error::{config_err, Result};
use crate::functionals::{
    composite, function_of_mean, mmd_energy, quadratic_interaction, quadratic_potential, smoothed_l1_potential, sum,
    two_layer_nn_energy, EnergyFunctional, NeuronRegion,
};
use crate::linalg::{log_spaced, random_orthogonal, Matrix};

/// Largest relative residual accepted for the regularizer weight solve.
pub const MAX_WEIGHT_RESIDUAL: f64 = 0.05;

/// Off-diagonal entry of the example-1 matrices.
pub const EXAMPLE1_OFFDIAG: f64 = 11100.0 / 1111.0;

pub fn build_problem(spec: &ExperimentSpec) -> Result<Problem> {
    spec.validate()?;
    match spec.name {
        ExampleName::Example1 => build_example1(spec),
        ExampleName::Example2 => build_example2(spec),
        ExampleName::Example3 => build_example3(spec),
        ExampleName::Example4 => build_example4(spec),
        ExampleName::Example5 => build_example5(spec),
        ExampleName::Custom => build_custom(spec),
    }
}

fn diag(v: &[f64]) -> Matrix {
    Matrix::from_diagonal(&DVector::from_column_slice(v))
}

fn smooth_problem(spec: &ExperimentSpec, functional: Arc<dyn EnergyFunctional>, init: Distribution) -> Problem {
    Problem {
        example: spec.name,
        functional,
        composite: None,
        nn: None,
        init,
        realized: Map::new(),
    }
}

/// `P = Q = [[1000, 11100/1111], [11100/1111, 1]]`, potential plus interaction.
pub fn build_example1(spec: &ExperimentSpec) -> Result<Problem> {
    let m = Matrix::from_row_slice(2, 2, &[1000.0, EXAMPLE1_OFFDIAG, EXAMPLE1_OFFDIAG, 1.0]);
    let f = sum(vec![
        Arc::new(quadratic_potential(m.clone())?),
        Arc::new(quadratic_interaction(m)?),
    ])?;
    let sigma = spec.problem.init_sigma.unwrap_or(1.0);
    Ok(smooth_problem(spec, Arc::new(f), Distribution::isotropic_gaussian(2, sigma)))
}

/// `P = V₁ΛV₁ᵀ`, `Q = V₂ΛV₂ᵀ` with log-spaced `Λ` and two independent
/// orthogonal draws (first `V₁`, then `V₂`) from the problem-data stream.
pub fn build_example2(spec: &ExperimentSpec) -> Result<Problem> {
    let d = spec.dim()?;
    let lo = spec.problem.eig_min.unwrap_or(1.0);
    let hi = spec.problem.eig_max.unwrap_or(1e3);
    if !(lo > 0.0 && hi >= lo) {
        return Err(config_err(format!("eigenvalue range [{lo}, {hi}] is invalid")));
    }
    let lambda = diag(&log_spaced(lo, hi, d));
    let mut rng = stream_rng(spec.seed, RngStream::ProblemData);
    let v1 = random_orthogonal(d, None, &mut rng);
    let v2 = random_orthogonal(d, None, &mut rng);
    let conj = |v: &Matrix| {
        let m = v * &lambda * v.transpose();
        (&m + m.transpose()) * 0.5
    };
    let f = sum(vec![
        Arc::new(quadratic_potential(conj(&v1))?),
        Arc::new(quadratic_interaction(conj(&v2))?),
    ])?;
    let sigma = spec.problem.init_sigma.unwrap_or(1.0);
    Ok(smooth_problem(spec, Arc::new(f), Distribution::isotropic_gaussian(d, sigma)))
}

/// MMD to `M` standard Gaussian samples with log-spaced kernel rates.
pub fn build_example3(spec: &ExperimentSpec) -> Result<Problem> {
    let d = spec.dim()?;
    let p = &spec.problem;
    let lo = p.lambda_min.unwrap_or(1e-3);
    let hi = p.lambda_max.unwrap_or(1.0);
    if !(lo > 0.0 && hi >= lo) {
        return Err(config_err(format!("kernel rate range [{lo}, {hi}] is invalid")));
    }
    let m = p.target_particles.unwrap_or(spec.particles());
    if m == 0 {
        return Err(config_err("`target_particles` must be positive"));
    }
    let target = Distribution::isotropic_gaussian(d, 1.0).sample(m, &mut stream_rng(spec.seed, RngStream::Target))?;
    let f = mmd_energy(target, log_spaced(lo, hi, d))?;
    let mut mean = vec![0.0; d];
    mean[0] = p.init_shift.unwrap_or(-0.5);
    let init = Distribution::Gaussian { mean, sigma: p.init_sigma.unwrap_or(0.5) };
    Ok(smooth_problem(spec, Arc::new(f), init))
}

/// Weights `r ≥ 0` with `Σ_j r_j A_ji² = ε H_i` for the target `H`.
///
/// Solves the square system, clamps negative entries to zero and returns
/// `(r, relative residual, number clamped)`.
pub fn solve_regularizer_weights(a: &Matrix, eps: f64, h_target: &[f64]) -> (Vec<f64>, f64, usize) {
    let d = a.nrows();
    let m = Matrix::from_fn(d, d, |i, j| a[(j, i)] * a[(j, i)]);
    let rhs = DVector::from_iterator(d, h_target.iter().map(|h| eps * h));
    let sol = m
        .clone()
        .lu()
        .solve(&rhs)
        .filter(|x| x.iter().all(|v| v.is_finite()))
        .unwrap_or_else(|| {
            m.clone()
                .svd(true, true)
                .solve(&rhs, 1e-14)
                .unwrap_or_else(|_| DVector::zeros(d))
        });
    let clamped = sol.iter().filter(|v| **v < 0.0).count();
    let r = DVector::from_iterator(d, sol.iter().map(|v| v.max(0.0)));
    let residual = (&m * &r - &rhs).norm() / rhs.norm();
    (r.iter().cloned().collect(), residual, clamped)
}

/// Interaction with diagonal `Q` plus the smoothed rotated ℓ1 regularizer.
///
/// `A` is the orthogonal factor of `I + κG` (seeded Gaussian `G`), which mixes
/// every coordinate while keeping the weight system close to diagonal, so the
/// nonnegative solve hits the log-spaced `H_i` targets.
pub fn build_example4(spec: &ExperimentSpec) -> Result<Problem> {
    let d = spec.dim()?;
    let p = &spec.problem;
    let eps = p.eps.unwrap_or(1e-2);
    let (q_lo, q_hi) = (p.q_min.unwrap_or(1.0), p.q_max.unwrap_or(1e3));
    let (h_lo, h_hi) = (p.h_min.unwrap_or(1.5), p.h_max.unwrap_or(4959.0));
    let mixing = p.mixing.unwrap_or(0.005);
    if !(q_lo > 0.0 && q_hi >= q_lo) || !(h_lo > 0.0 && h_hi >= h_lo) {
        return Err(config_err("q and h ranges must be positive and ordered"));
    }
    if !(mixing >= 0.0 && mixing.is_finite()) {
        return Err(config_err(format!("`mixing` must be >= 0, got {mixing}")));
    }
    let mut rng = stream_rng(spec.seed, RngStream::ProblemData);
    let a = random_orthogonal(d, Some(mixing), &mut rng);
    let h_target = log_spaced(h_lo, h_hi, d);
    let (r, residual, clamped) = solve_regularizer_weights(&a, eps, &h_target);
    if residual > MAX_WEIGHT_RESIDUAL {
        return Err(config_err(format!(
            "regularizer weight solve left a relative residual of {residual:.3} (> {MAX_WEIGHT_RESIDUAL}); \
             try another seed or a smaller `mixing`"
        )));
    }
    let e_star = eps * r.iter().sum::<f64>();
    let g: Arc<dyn EnergyFunctional> = Arc::new(quadratic_interaction(diag(&log_spaced(q_lo, q_hi, d)))?);
    let psi = smoothed_l1_potential(r.clone(), a, eps)?;
    let realized_h = psi.potential().coordinate_smoothness();
    let c = composite(g, psi)?.with_known_minimum(e_star);

    let mut realized = Map::new();
    realized.insert("weights".into(), json!(r));
    realized.insert("weight_residual".into(), json!(residual));
    realized.insert("weights_clamped".into(), json!(clamped));
    realized.insert("h_coord".into(), json!(realized_h));
    realized.insert("e_star".into(), json!(e_star));
    let init = Distribution::Gaussian {
        mean: vec![p.init_mean.unwrap_or(0.125); d],
        sigma: p.init_sigma.unwrap_or(0.125),
    };
    Ok(Problem {
        example: spec.name,
        functional: Arc::new(c.clone()),
        composite: Some(c),
        nn: None,
        init,
        realized,
    })
}

/// Teacher direction `w*_j ∝ (3/4)^{j/2}`, unit norm.
pub fn teacher_direction(d: usize) -> Vec<f64> {
    let raw: Vec<f64> = (1..=d).map(|j| 0.75f64.powf(j as f64 / 2.0)).collect();
    let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    raw.iter().map(|v| v / norm).collect()
}

/// Mean-field two-layer tanh network fit to a single teacher neuron.
pub fn build_example5(spec: &ExperimentSpec) -> Result<Problem> {
    let d = spec.dim()?;
    let p = &spec.problem;
    let k = p.data_samples.unwrap_or(500);
    if k == 0 {
        return Err(config_err("`data_samples` must be positive"));
    }
    let std_devs: Vec<f64> = (0..d).map(|j| 0.75f64.powf(j as f64 / 2.0)).collect();
    let pi = Distribution::TruncatedGaussian { std_devs, bound: p.data_bound.unwrap_or(3.0) };
    let data = pi.sample(k, &mut stream_rng(spec.seed, RngStream::ProblemData))?;
    let w_star = teacher_direction(d);
    let targets: Vec<f64> = data
        .rows()
        .map(|x| (x.iter().zip(&w_star).map(|(a, b)| a * b).sum::<f64>() + 0.2).tanh() + 0.1)
        .collect();

    let r_alpha = p.radius_alpha.unwrap_or(0.3);
    let r_beta = p.radius_beta.unwrap_or(0.3);
    let r_w = p.radius_w.unwrap_or(0.8);
    let r_b = p.radius_b.unwrap_or(0.3);
    let region = NeuronRegion {
        a: p.region_a.unwrap_or(10.0 * r_alpha),
        b: p.region_b.unwrap_or(10.0 * r_beta),
        w: p.region_w.unwrap_or(10.0 * r_w),
        c: p.region_c.unwrap_or(10.0 * r_b),
    };
    let mut teacher = vec![1.0, 0.1];
    teacher.extend_from_slice(&w_star);
    teacher.push(0.2);
    let mut nn = two_layer_nn_energy(data.points().to_vec(), d, targets, region)?;
    if region.contains(&teacher) {
        nn = nn.with_known_minimum(0.0);
    }
    let nn = Arc::new(nn);

    let c = nn.constants();
    let mut realized = Map::new();
    realized.insert("w_star".into(), json!(w_star));
    realized.insert("l_alpha".into(), json!(c.l_alpha));
    realized.insert("l_beta".into(), json!(c.l_beta));
    realized.insert("l_b".into(), json!(c.l_b));
    realized.insert("l_w".into(), json!(c.l_w));
    realized.insert("region".into(), serde_json::to_value(region).expect("region serializes"));

    let init = Distribution::Product {
        blocks: vec![
            Distribution::UniformBox { low: vec![-r_alpha, -r_beta], high: vec![r_alpha, r_beta] },
            Distribution::UniformBall { dim: d, radius: r_w },
            Distribution::UniformBox { low: vec![-r_b], high: vec![r_b] },
        ],
    };
    Ok(Problem {
        example: spec.name,
        functional: nn.clone(),
        composite: None,
        nn: Some(nn),
        init,
        realized,
    })
}

fn matrix_from_rows(rows: &[Vec<f64>], d: usize, what: &str) -> Result<Matrix> {
    if rows.len() != d || rows.iter().any(|r| r.len() != d) {
        return Err(config_err(format!("`{what}` must be a {d}x{d} matrix")));
    }
    Ok(Matrix::from_fn(d, d, |i, j| rows[i][j]))
}

/// Any sum of quadratic potential, interaction and function-of-mean terms,
/// optionally with a smoothed ℓ1 regularizer.
pub fn build_custom(spec: &ExperimentSpec) -> Result<Problem> {
    let d = spec.dim()?;
    let p = &spec.problem;
    let mut parts: Vec<Arc<dyn EnergyFunctional>> = Vec::new();
    if let Some(rows) = &p.potential {
        parts.push(Arc::new(quadratic_potential(matrix_from_rows(rows, d, "potential")?)?));
    }
    if let Some(rows) = &p.interaction {
        parts.push(Arc::new(quadratic_interaction(matrix_from_rows(rows, d, "interaction")?)?));
    }
    if let Some(rows) = &p.mean_matrix {
        parts.push(Arc::new(function_of_mean(matrix_from_rows(rows, d, "mean_matrix")?)?));
    }
    if parts.is_empty() {
        return Err(config_err("custom experiments need `potential`, `interaction` or `mean_matrix`"));
    }
    let smooth: Arc<dyn EnergyFunctional> = Arc::new(sum(parts)?);
    let init = p.init.clone().unwrap_or_else(|| Distribution::isotropic_gaussian(d, p.init_sigma.unwrap_or(1.0)));
    init.validate()?;
    match &p.l1_weights {
        None => Ok(smooth_problem(spec, smooth, init)),
        Some(w) => {
            let rot = match &p.l1_rotation {
                Some(rows) => matrix_from_rows(rows, d, "l1_rotation")?,
                None => Matrix::identity(d, d),
            };
            let psi = smoothed_l1_potential(w.clone(), rot, p.eps.unwrap_or(1e-2))?;
            let mut c = composite(smooth.clone(), psi.clone())?;
            if let (Some(a), Some(b)) = (smooth.known_minimum(), psi.potential().minimum()) {
                c = c.with_known_minimum(a + b);
            }
            Ok(Problem {
                example: spec.name,
                functional: Arc::new(c.clone()),
                composite: Some(c),
                nn: None,
                init,
                realized: Map::new(),
            })
        }
    }
}
