//! Uniform empirical measures stored as particle arrays.
//!
//! A [`ParticleEnsemble`] represents `(1/N) Σ δ_{x_n}` with `N` points in
//! `R^d`, stored row-major in one contiguous buffer. Every operation returns a
//! new ensemble; nothing is mutated in place.

mod sample;

pub use sample::{sample_ensemble, stream_rng, trial_rng, Distribution, RngStream};

use crate::error::{dim_err, Error, Result};

/// `N` particles in `R^d` with equal weights `1/N`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    points: Vec<f64>,
    n: usize,
    d: usize,
}

/// An `N × d` array of per-particle vectors.
///
/// Used both for Wasserstein gradients evaluated at the particles and for
/// displacement fields `T(x_n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleField {
    values: Vec<f64>,
    n: usize,
    d: usize,
}

/// Row `n` is `∇_W E[μ](x_n)`.
pub type GradientField = ParticleField;
/// Row `n` is `T(x_n)`.
pub type DisplacementField = ParticleField;

fn check_shape(len: usize, n: usize, d: usize) -> Result<()> {
    if n == 0 || d == 0 {
        return Err(dim_err(format!("need N >= 1 and d >= 1, got N={n}, d={d}")));
    }
    if len != n * d {
        return Err(dim_err(format!("buffer of length {len} cannot hold {n}x{d}")));
    }
    Ok(())
}

impl ParticleEnsemble {
    pub fn new(points: Vec<f64>, n: usize, d: usize) -> Result<Self> {
        check_shape(points.len(), n, d)?;
        if let Some(pos) = points.iter().position(|v| !v.is_finite()) {
            return Err(Error::Config(format!(
                "particle {} coordinate {} is not finite",
                pos / d,
                pos % d
            )));
        }
        Ok(Self { points, n, d })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(dim_err("rows have differing lengths"));
        }
        Self::new(rows.concat(), rows.len(), d)
    }

    /// Builds an ensemble from values already known to be finite and well shaped.
    pub(crate) fn from_raw(points: Vec<f64>, n: usize, d: usize) -> Self {
        debug_assert_eq!(points.len(), n * d);
        Self { points, n, d }
    }

    pub fn n_particles(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn point(&self, n: usize) -> &[f64] {
        &self.points[n * self.d..(n + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.d)
    }

    pub fn get(&self, n: usize, i: usize) -> f64 {
        self.points[n * self.d + i]
    }

    /// Coordinate `i` of every particle (strided read).
    pub fn column(&self, i: usize) -> Vec<f64> {
        self.points.iter().skip(i).step_by(self.d).copied().collect()
    }

    pub fn check_coordinate(&self, i: usize) -> Result<()> {
        if i >= self.d {
            Err(Error::Index { index: i, dim: self.d })
        } else {
            Ok(())
        }
    }

    /// `(Id + T)_# μ`: moves particle `n` by row `n` of `t`.
    pub fn pushforward(&self, t: &DisplacementField) -> Result<Self> {
        if t.n != self.n || t.d != self.d {
            return Err(dim_err(format!(
                "displacement is {}x{}, ensemble is {}x{}",
                t.n, t.d, self.n, self.d
            )));
        }
        let points: Vec<f64> = self.points.iter().zip(&t.values).map(|(x, v)| x + v).collect();
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence("pushforward produced a non-finite coordinate".into()));
        }
        Ok(Self::from_raw(points, self.n, self.d))
    }

    /// `(Id + U_i T)_# μ`: shifts coordinate `i` of particle `n` by `s[n]`.
    ///
    /// All other columns are copied bit for bit, so the marginal over the
    /// remaining coordinates is preserved exactly.
    pub fn coordinate_pushforward(&self, i: usize, s: &[f64]) -> Result<Self> {
        self.check_coordinate(i)?;
        if s.len() != self.n {
            return Err(dim_err(format!(
                "coordinate shift has length {}, expected {}",
                s.len(),
                self.n
            )));
        }
        let mut points = self.points.clone();
        for (row, shift) in points.chunks_exact_mut(self.d).zip(s) {
            row[i] += shift;
            if !row[i].is_finite() {
                return Err(Error::Divergence(format!(
                    "coordinate update on axis {i} produced a non-finite value"
                )));
            }
        }
        Ok(Self::from_raw(points, self.n, self.d))
    }

    /// Component-wise mean of the particles.
    pub fn barycenter(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.d];
        for row in self.rows() {
            for (m, x) in mean.iter_mut().zip(row) {
                *m += x;
            }
        }
        let inv = 1.0 / self.n as f64;
        mean.iter_mut().for_each(|m| *m *= inv);
        mean
    }

    pub fn barycenter_norm(&self) -> f64 {
        self.barycenter().iter().map(|m| m * m).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.points.iter().all(|v| v.is_finite())
    }
}

impl ParticleField {
    pub fn new(values: Vec<f64>, n: usize, d: usize) -> Result<Self> {
        check_shape(values.len(), n, d)?;
        Ok(Self { values, n, d })
    }

    pub fn zeros(n: usize, d: usize) -> Self {
        Self { values: vec![0.0; n * d], n, d }
    }

    pub fn zeros_like(mu: &ParticleEnsemble) -> Self {
        Self::zeros(mu.n, mu.d)
    }

    /// Field supported on coordinate `i` only: row `n` is `s[n] e_i`.
    pub fn from_column(n: usize, d: usize, i: usize, s: &[f64]) -> Result<Self> {
        if i >= d {
            return Err(Error::Index { index: i, dim: d });
        }
        if s.len() != n {
            return Err(dim_err("column length does not match particle count"));
        }
        let mut f = Self::zeros(n, d);
        for (row, v) in f.values.chunks_exact_mut(d).zip(s) {
            row[i] = *v;
        }
        Ok(f)
    }

    pub fn n_particles(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.values[n * self.d..(n + 1) * self.d]
    }

    pub fn row_mut(&mut self, n: usize) -> &mut [f64] {
        &mut self.values[n * self.d..(n + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.d)
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        self.values.iter().skip(i).step_by(self.d).copied().collect()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * factor).collect(),
            n: self.n,
            d: self.d,
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.n != other.n || self.d != other.d {
            return Err(dim_err("field shapes differ"));
        }
        Ok(Self {
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
            n: self.n,
            d: self.d,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `‖f‖²_μ = (1/N) Σ_n ‖f(x_n)‖²`.
    pub fn mu_norm_sq(&self) -> f64 {
        mu_norm_sq(self)
    }

    /// `⟨f, g⟩_μ = (1/N) Σ_n f(x_n)·g(x_n)`.
    pub fn mu_inner(&self, other: &Self) -> Result<f64> {
        if self.n != other.n || self.d != other.d {
            return Err(dim_err("field shapes differ"));
        }
        let s: f64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum();
        Ok(s / self.n as f64)
    }
}

/// Empirical `‖f‖²_μ`.
pub fn mu_norm_sq(f: &ParticleField) -> f64 {
    f.values.iter().map(|v| v * v).sum::<f64>() / f.n as f64
}

/// `(1/N) Σ_n s_n²` for a field supported on one coordinate.
pub fn column_norm_sq(s: &[f64]) -> f64 {
    s.iter().map(|v| v * v).sum::<f64>() / s.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ens(rows: &[&[f64]]) -> ParticleEnsemble {
        ParticleEnsemble::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn zero_displacement_is_identity() {
        let mu = ens(&[&[1.0, 2.0], &[-3.0, 0.5]]);
        let out = mu.pushforward(&ParticleField::zeros_like(&mu)).unwrap();
        assert_eq!(out, mu);
    }

    #[test]
    fn single_particle_moves_to_origin() {
        let mu = ens(&[&[1.0, 2.0]]);
        let t = ParticleField::new(vec![-1.0, -2.0], 1, 2).unwrap();
        assert_eq!(mu.pushforward(&t).unwrap().points(), &[0.0, 0.0]);
    }

    #[test]
    fn negated_points_collapse_to_origin() {
        let mu = ens(&[&[0.3, -1.2], &[2.5, 0.1], &[-0.7, 4.0]]);
        let t = ParticleField::new(mu.points().iter().map(|v| -v).collect(), 3, 2).unwrap();
        let out = mu.pushforward(&t).unwrap();
        assert!(out.points().iter().all(|&v| v == 0.0));
        assert_eq!(out.barycenter(), vec![0.0, 0.0]);
    }

    #[test]
    fn shape_mismatch_is_dimension_error() {
        let mu = ens(&[&[1.0, 2.0]]);
        let t = ParticleField::zeros(2, 2);
        assert!(matches!(mu.pushforward(&t), Err(Error::Dimension(_))));
    }

    #[test]
    fn coordinate_pushforward_basic() {
        let mu = ens(&[&[3.0, 4.0]]);
        let out = mu.coordinate_pushforward(0, &[-3.0]).unwrap();
        assert_eq!(out.points(), &[0.0, 4.0]);
        assert_eq!(mu.coordinate_pushforward(1, &[0.0]).unwrap(), mu);
        assert!(matches!(
            mu.coordinate_pushforward(2, &[1.0]),
            Err(Error::Index { index: 2, dim: 2 })
        ));
    }

    #[test]
    fn mu_norm_examples() {
        assert_eq!(mu_norm_sq(&ParticleField::zeros(3, 2)), 0.0);
        assert_eq!(mu_norm_sq(&ParticleField::new(vec![1.0, -1.0], 2, 1).unwrap()), 1.0);
        assert_eq!(mu_norm_sq(&ParticleField::new(vec![3.0, 4.0], 1, 2).unwrap()), 25.0);
    }

    #[test]
    fn barycenter_examples() {
        assert_eq!(ens(&[&[1.5, -2.0]]).barycenter(), vec![1.5, -2.0]);
        assert_eq!(ens(&[&[1.0, 0.0], &[-1.0, 0.0]]).barycenter(), vec![0.0, 0.0]);
        let c = [0.25, -7.0, 3.0];
        assert_eq!(ens(&[&c, &c, &c, &c]).barycenter(), c.to_vec());
    }

    #[test]
    fn rejects_degenerate_or_non_finite() {
        assert!(ParticleEnsemble::new(vec![], 0, 2).is_err());
        assert!(ParticleEnsemble::new(vec![1.0, f64::NAN], 1, 2).is_err());
        assert!(ParticleEnsemble::new(vec![1.0, 2.0, 3.0], 1, 2).is_err());
    }

    fn ensemble_strategy() -> impl Strategy<Value = (ParticleEnsemble, Vec<f64>, usize)> {
        (1usize..8, 1usize..5).prop_flat_map(|(n, d)| {
            (
                proptest::collection::vec(-100.0f64..100.0, n * d),
                proptest::collection::vec(-10.0f64..10.0, n * d),
                0..d,
            )
                .prop_map(move |(p, t, i)| (ParticleEnsemble::new(p, n, d).unwrap(), t, i))
        })
    }

    proptest! {
        #[test]
        fn push_and_pull_back_round_trips((mu, t, _i) in ensemble_strategy()) {
            let field = ParticleField::new(t, mu.n_particles(), mu.dim()).unwrap();
            let back = mu.pushforward(&field).unwrap().pushforward(&field.scaled(-1.0)).unwrap();
            for (a, b) in back.points().iter().zip(mu.points()) {
                // two roundings of values bounded by ~110 in magnitude
                prop_assert!((a - b).abs() <= 2.0 * f64::EPSILON * 128.0);
            }
        }

        #[test]
        fn coordinate_step_preserves_other_marginals((mu, t, i) in ensemble_strategy()) {
            let s: Vec<f64> = t[..mu.n_particles()].to_vec();
            let out = mu.coordinate_pushforward(i, &s).unwrap();
            for j in (0..mu.dim()).filter(|&j| j != i) {
                let a: Vec<u64> = mu.column(j).iter().map(|v| v.to_bits()).collect();
                let b: Vec<u64> = out.column(j).iter().map(|v| v.to_bits()).collect();
                prop_assert_eq!(a, b);
            }
        }

        #[test]
        fn restricted_norm_matches_padded_field((mu, t, i) in ensemble_strategy()) {
            let n = mu.n_particles();
            let s = &t[..n];
            let padded = ParticleField::from_column(n, mu.dim(), i, s).unwrap();
            prop_assert_eq!(column_norm_sq(s), padded.mu_norm_sq());
        }
    }
}
