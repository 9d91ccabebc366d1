use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::functionals::SmoothnessProfile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleMode {
    Rwcd,
    Rwcp,
}

/// Coordinate sampling probabilities with per-coordinate step parameters.
///
/// In `Rwcd` mode `steps[i]` is the step size `γ_i`; in `Rwcp` mode it is
/// the proximal parameter `η_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub mode: ScheduleMode,
    pub probabilities: Vec<f64>,
    pub steps: Vec<f64>,
    #[serde(skip)]
    cumulative: Vec<f64>,
}

/// `p_i = L_i / L_sum, γ_i = 1/L_i` (rwcd) or `p_i ∝ η_i` (rwcp).
///
/// For rwcd on a composite profile the regularizer constants are folded in,
/// so the step uses the smoothness `L_i + H_i` of the whole energy.
pub fn schedule_from_profile(profile: &SmoothnessProfile, mode: ScheduleMode) -> Result<Schedule> {
    let weights: Vec<f64> = match mode {
        ScheduleMode::Rwcd => (0..profile.dim()).map(|i| profile.l_coord[i] + profile.h(i)).collect(),
        ScheduleMode::Rwcp => profile.eta(),
    };
    let steps = match mode {
        ScheduleMode::Rwcd => weights.iter().map(|l| if *l > 0.0 { 1.0 / l } else { 0.0 }).collect(),
        ScheduleMode::Rwcp => weights.clone(),
    };
    Schedule::from_weights(mode, &weights, steps)
}

impl Schedule {
    /// Normalizes nonnegative `weights` into probabilities.
    pub fn from_weights(mode: ScheduleMode, weights: &[f64], steps: Vec<f64>) -> Result<Self> {
        if weights.len() != steps.len() || weights.is_empty() {
            return Err(config_err("schedule weights and steps must be nonempty and of equal length"));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(config_err("schedule weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(config_err("all smoothness constants are zero; no coordinate can be sampled"));
        }
        for (w, s) in weights.iter().zip(&steps) {
            if *w > 0.0 && !(*s > 0.0 && s.is_finite()) {
                return Err(config_err(format!("step parameter {s} is invalid for a sampled coordinate")));
            }
        }
        let probabilities = weights.iter().map(|w| w / total).collect();
        Ok(Self::assemble(mode, probabilities, steps))
    }

    fn assemble(mode: ScheduleMode, probabilities: Vec<f64>, steps: Vec<f64>) -> Self {
        let mut acc = 0.0;
        let cumulative = probabilities
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Self { mode, probabilities, steps, cumulative }
    }

    pub fn dim(&self) -> usize {
        self.probabilities.len()
    }

    pub fn step(&self, i: usize) -> f64 {
        self.steps[i]
    }

    /// Inverse-CDF draw: one uniform, then a binary search over the
    /// cumulative probabilities. Zero-probability coordinates are never hit.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        if self.cumulative.len() != self.probabilities.len() {
            // deserialized schedules arrive without the cache
            return Self::assemble(self.mode, self.probabilities.clone(), self.steps.clone()).sample(rng);
        }
        let total = *self.cumulative.last().expect("nonempty schedule");
        let u = rng.random::<f64>() * total;
        let idx = self.cumulative.partition_point(|c| *c <= u);
        if idx < self.dim() {
            idx
        } else {
            self.probabilities.iter().rposition(|p| *p > 0.0).expect("some p_i > 0")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn example_one_probabilities() {
        let prof = SmoothnessProfile::new(2000.2, vec![2000.0, 2.0]);
        let s = schedule_from_profile(&prof, ScheduleMode::Rwcd).unwrap();
        assert!((s.probabilities[0] - 1000.0 / 1001.0).abs() < 1e-15);
        assert!((s.probabilities[1] - 1.0 / 1001.0).abs() < 1e-15);
        assert_eq!(s.steps, vec![1.0 / 2000.0, 0.5]);
    }

    #[test]
    fn uniform_constants() {
        let s = schedule_from_profile(&SmoothnessProfile::new(3.0, vec![3.0; 4]), ScheduleMode::Rwcd).unwrap();
        assert!(s.probabilities.iter().all(|p| *p == 0.25));
        assert!(s.steps.iter().all(|g| *g == 1.0 / 3.0));
    }

    #[test]
    fn rwcp_without_regularizer_matches_gradient_weighting() {
        let prof = SmoothnessProfile::new(4.0, vec![1.0, 3.0]).with_regularizer(0.0, vec![0.0, 0.0]);
        let s = schedule_from_profile(&prof, ScheduleMode::Rwcp).unwrap();
        assert_eq!(s.steps, vec![2.0, 6.0]);
        assert_eq!(s.probabilities, vec![0.25, 0.75]);
    }

    #[test]
    fn zero_constants_excluded() {
        let s = schedule_from_profile(&SmoothnessProfile::new(1.0, vec![0.0, 1.0, 0.0]), ScheduleMode::Rwcd).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        assert!((0..2000).all(|_| s.sample(&mut rng) == 1));
        assert!(schedule_from_profile(&SmoothnessProfile::new(0.0, vec![0.0, 0.0]), ScheduleMode::Rwcd).is_err());
    }

    #[test]
    fn sampling_frequencies_follow_probabilities() {
        let s = Schedule::from_weights(ScheduleMode::Rwcd, &[1.0, 2.0, 7.0], vec![1.0; 3]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut counts = [0usize; 3];
        for _ in 0..100_000 {
            counts[s.sample(&mut rng)] += 1;
        }
        for (c, p) in counts.iter().zip(&s.probabilities) {
            assert!((*c as f64 / 1e5 - p).abs() < 0.01);
        }
    }
}
