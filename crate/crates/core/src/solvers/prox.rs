//! Newton solvers for the per-particle proximal subproblems
//!
//! scalar: `ψ(s) = s g + η/2 s² + V(x + s e_i)`
//! vector: `φ(v) = v·g + η/2 ‖v‖² + V(x + v)`
//!
//! Both are strongly convex with modulus `η`, so Newton starts at zero and
//! takes full steps. A residual test after the last iteration decides
//! whether the fallback runs.

use nalgebra::{Cholesky, DVector};

use crate::functionals::PointPotential;

pub const DEFAULT_NEWTON_ITERS: usize = 20;

const RESIDUAL_TOL: f64 = 1e-8;
const BISECTION_ITERS: usize = 400;
const DAMPED_ITERS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarSolution {
    pub s: f64,
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorSolution {
    pub v: Vec<f64>,
    pub fallback: bool,
}

fn scalar_accepts(residual: f64, eta: f64, s: f64) -> bool {
    residual.abs() <= RESIDUAL_TOL * (1.0 + eta * s.abs())
}

/// Minimizes `ψ` given `line(s) = [V, V', V'']` along the coordinate.
pub fn solve_scalar<F>(line: F, g: f64, eta: f64, newton_iters: usize) -> ScalarSolution
where
    F: Fn(f64) -> [f64; 3],
{
    let dpsi = |s: f64| {
        let [_, d1, d2] = line(s);
        (g + eta * s + d1, eta + d2)
    };
    let mut s = 0.0;
    for _ in 0..newton_iters {
        let (r, h) = dpsi(s);
        if r == 0.0 {
            break;
        }
        s -= r / h;
    }
    if s.is_finite() && scalar_accepts(dpsi(s).0, eta, s) {
        return ScalarSolution { s, fallback: false };
    }
    let s = bisect(|t| dpsi(t).0);
    log::debug!("scalar Newton residual too large, bisection gave s = {s}");
    ScalarSolution { s, fallback: true }
}

/// Root of a nondecreasing function, bracket grown geometrically from `[-1, 1]`.
pub fn bisect<F: Fn(f64) -> f64>(f: F) -> f64 {
    let (mut lo, mut hi) = (-1.0f64, 1.0f64);
    while f(lo) > 0.0 && lo.is_finite() {
        lo *= 2.0;
    }
    while f(hi) < 0.0 && hi.is_finite() {
        hi *= 2.0;
    }
    for _ in 0..BISECTION_ITERS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = f(mid);
        if v == 0.0 {
            return mid;
        }
        if v < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

struct VectorProblem<'a> {
    pot: &'a dyn PointPotential,
    x: &'a [f64],
    g: &'a [f64],
    eta: f64,
}

impl VectorProblem<'_> {
    fn shifted(&self, v: &[f64]) -> Vec<f64> {
        self.x.iter().zip(v).map(|(a, b)| a + b).collect()
    }

    fn value(&self, v: &[f64]) -> f64 {
        let lin: f64 = v.iter().zip(self.g).map(|(a, b)| a * b).sum();
        let sq: f64 = v.iter().map(|a| a * a).sum();
        lin + 0.5 * self.eta * sq + self.pot.value(&self.shifted(v))
    }

    fn gradient(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        self.pot.gradient(&self.shifted(v), &mut out);
        for ((o, gi), vi) in out.iter_mut().zip(self.g).zip(v) {
            *o += gi + self.eta * vi;
        }
        out
    }

    /// Newton direction `-(ηI + ∇²V)⁻¹ ∇φ`, or `None` if the factorization fails.
    fn newton_direction(&self, v: &[f64], grad: &[f64]) -> Option<Vec<f64>> {
        let mut h = self.pot.hessian(&self.shifted(v));
        for k in 0..v.len() {
            h[(k, k)] += self.eta;
        }
        let chol = Cholesky::new(h)?;
        let dir = chol.solve(&DVector::from_column_slice(grad));
        dir.iter().all(|x| x.is_finite()).then(|| dir.iter().map(|x| -x).collect())
    }

    fn accepts(&self, v: &[f64], grad: &[f64]) -> bool {
        let gn = grad.iter().map(|a| a * a).sum::<f64>().sqrt();
        let vn = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        gn.is_finite() && gn <= RESIDUAL_TOL * (1.0 + self.eta * vn)
    }
}

/// Minimizes `φ` with `newton_iters` full Newton steps from `v = 0`.
///
/// An inner iteration whose Hessian cannot be factored takes a gradient
/// step with step `1/(η + H)` instead. If the final residual is too large a
/// backtracking Newton phase continues from the best point reached.
pub fn solve_vector(pot: &dyn PointPotential, x: &[f64], g: &[f64], eta: f64, newton_iters: usize) -> VectorSolution {
    let prob = VectorProblem { pot, x, g, eta };
    let lip = eta + pot.global_smoothness();
    let mut v = vec![0.0; x.len()];
    let mut fallback = false;
    for _ in 0..newton_iters {
        let grad = prob.gradient(&v);
        match prob.newton_direction(&v, &grad) {
            Some(dir) => v.iter_mut().zip(&dir).for_each(|(a, b)| *a += b),
            None => {
                log::warn!("singular Newton system in proximal subproblem, taking a gradient step");
                fallback = true;
                v.iter_mut().zip(&grad).for_each(|(a, b)| *a -= b / lip);
            }
        }
    }
    if v.iter().all(|a| a.is_finite()) && prob.accepts(&v, &prob.gradient(&v)) {
        return VectorSolution { v, fallback };
    }
    if !v.iter().all(|a| a.is_finite()) || prob.value(&v) > prob.value(&vec![0.0; x.len()]) {
        v = vec![0.0; x.len()];
    }
    damped_newton(&prob, &mut v, lip);
    VectorSolution { v, fallback: true }
}

fn damped_newton(prob: &VectorProblem, v: &mut Vec<f64>, lip: f64) {
    let mut fv = prob.value(v);
    for _ in 0..DAMPED_ITERS {
        let grad = prob.gradient(v);
        if prob.accepts(v, &grad) {
            return;
        }
        let dir = prob
            .newton_direction(v, &grad)
            .unwrap_or_else(|| grad.iter().map(|a| -a / lip).collect());
        let slope: f64 = dir.iter().zip(&grad).map(|(a, b)| a * b).sum();
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = v.iter().zip(&dir).map(|(a, b)| a + t * b).collect();
            let ft = prob.value(&trial);
            if ft <= fv + 1e-4 * t * slope || t < 1e-12 {
                *v = trial;
                fv = ft;
                break;
            }
            t *= 0.5;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::SmoothedL1;
    use crate::linalg::{random_orthogonal, Matrix};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_regularizer_gives_gradient_step() {
        let sol = solve_scalar(|_| [0.0; 3], 3.0, 4.0, 20);
        assert_eq!(sol.s, -0.75);
        assert!(!sol.fallback);
    }

    #[test]
    fn origin_is_stationary() {
        let pot = SmoothedL1::new(vec![1.0, 2.0], Matrix::identity(2, 2), 0.01).unwrap();
        let sol = solve_scalar(pot.coordinate_line(&[0.0, 0.0], 1), 0.0, 5.0, 20);
        assert_eq!(sol.s, 0.0);
        let v = solve_vector(&pot, &[0.0, 0.0], &[0.0, 0.0], 5.0, 20);
        assert_eq!(v.v, vec![0.0, 0.0]);
    }

    #[test]
    fn newton_agrees_with_bisection() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let a = random_orthogonal(4, None, &mut rng);
        let r: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..3.0)).collect();
        let pot = SmoothedL1::new(r, a, 0.01).unwrap();
        for _ in 0..50 {
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-0.3..0.3)).collect();
            let i = rng.random_range(0..4);
            let g = rng.random_range(-5.0..5.0);
            let eta = 2.0 * pot.coordinate_smoothness()[i] + 1.0;
            let line = pot.coordinate_line(&x, i);
            let sol = solve_scalar(&line, g, eta, 20);
            let root = bisect(|s| g + eta * s + line(s)[1]);
            assert!((sol.s - root).abs() < 1e-10, "{} vs {}", sol.s, root);
        }
    }

    #[test]
    fn vector_reduces_to_gradient_step_without_regularizer() {
        let pot = SmoothedL1::new(vec![0.0; 3], Matrix::identity(3, 3), 0.1).unwrap();
        let sol = solve_vector(&pot, &[1.0, 2.0, 3.0], &[2.0, -4.0, 1.0], 2.0, 20);
        assert_eq!(sol.v, vec![-1.0, 2.0, -0.5]);
    }

    #[test]
    fn vector_solution_is_stationary() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_orthogonal(5, None, &mut rng);
        let pot = SmoothedL1::new(vec![0.5, 1.0, 2.0, 0.1, 3.0], a, 0.01).unwrap();
        let x = [0.1, -0.2, 0.05, 0.0, 0.3];
        let g = [1.0, -0.5, 0.2, 0.0, -2.0];
        let eta = 2.0 * pot.global_smoothness();
        let sol = solve_vector(&pot, &x, &g, eta, 20);
        let prob = VectorProblem { pot: &pot, x: &x, g: &g, eta };
        assert!(prob.accepts(&sol.v, &prob.gradient(&sol.v)));
    }
}
