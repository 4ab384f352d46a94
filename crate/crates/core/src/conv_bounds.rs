//! Optimality-gap upper bounds for SGD with step `1/(lambda t)` driven by the
//! over-the-air gradient estimators, for unknown and known participant sets.

use serde::{Deserialize, Serialize};

use crate::dp_analysis::optimal_sampling_probability;
use crate::error::{domain, ensure, Result};
use crate::sampling::{inverse_moments_exact, participant_stats, ParticipantStats};

/// Problem and channel constants shared by all bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemConstants {
    pub strong_convexity: f64,
    pub smoothness: f64,
    pub lipschitz: f64,
    pub dimension: usize,
    /// Largest per-user perturbation variance.
    pub noise_var_max: f64,
    pub n0: f64,
}

impl ProblemConstants {
    pub fn validate(&self) -> Result<()> {
        ensure(self.strong_convexity > 0.0, || "strong convexity must be > 0".to_string())?;
        ensure(self.smoothness >= self.strong_convexity, || {
            format!("smoothness {} must be >= strong convexity {}", self.smoothness, self.strong_convexity)
        })?;
        ensure(self.lipschitz > 0.0, || "lipschitz bound must be > 0".to_string())?;
        ensure(self.dimension >= 1, || "dimension must be >= 1".to_string())?;
        ensure(self.noise_var_max >= 0.0 && self.n0 >= 0.0, || "noise variances must be >= 0".to_string())
    }

    /// `2 * smoothness / lambda^2`.
    fn prefactor(&self) -> f64 {
        2.0 * self.smoothness / (self.strong_convexity * self.strong_convexity)
    }
}

/// Participation probabilities across rounds.
#[derive(Debug, Clone, PartialEq)]
pub enum ParticipationSchedule {
    Invariant { p: Vec<f64>, rounds: usize },
    PerRound(Vec<Vec<f64>>),
}

impl ParticipationSchedule {
    pub fn uniform(users: usize, p: f64, rounds: usize) -> Self {
        ParticipationSchedule::Invariant { p: vec![p; users], rounds }
    }

    pub fn rounds(&self) -> usize {
        match self {
            ParticipationSchedule::Invariant { rounds, .. } => *rounds,
            ParticipationSchedule::PerRound(rows) => rows.len(),
        }
    }

    /// Sum over rounds of `f(p_t)`, evaluating `f` once for invariant schedules.
    fn sum_over_rounds(&self, mut f: impl FnMut(&[f64]) -> Result<f64>) -> Result<f64> {
        match self {
            ParticipationSchedule::Invariant { p, rounds } => Ok(*rounds as f64 * f(p)?),
            ParticipationSchedule::PerRound(rows) => rows.iter().try_fold(0.0, |acc, row| Ok(acc + f(row)?)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceParams {
    pub constants: ProblemConstants,
    pub schedule: ParticipationSchedule,
}

impl ConvergenceParams {
    fn validate(&self) -> Result<()> {
        self.constants.validate()?;
        ensure(self.schedule.rounds() >= 1, || "number of rounds must be >= 1".to_string())
    }
}

/// Bound on `E|g_hat|^2` for the unknown-set estimator:
/// `L^2 (mu^2 + sigma^2) / mu^2 + d (sigma_max^2 mu + N0) / mu^2`.
pub fn second_moment_bound(stats: &ParticipantStats, lipschitz: f64, dimension: usize, noise_var_max: f64, n0: f64) -> Result<f64> {
    ensure(stats.mu > 0.0, || format!("expected participant count must be > 0, got {}", stats.mu))?;
    let mu2 = stats.mu * stats.mu;
    Ok(lipschitz * lipschitz * (mu2 + stats.sigma2) / mu2 + dimension as f64 / mu2 * (noise_var_max * stats.mu + n0))
}

/// Gap bound when the server only knows the participation probabilities.
pub fn bound_unknown(params: &ConvergenceParams) -> Result<f64> {
    params.validate()?;
    let c = &params.constants;
    let total = params.schedule.sum_over_rounds(|p| {
        second_moment_bound(&participant_stats(p), c.lipschitz, c.dimension, c.noise_var_max, c.n0)
    })?;
    let t = params.schedule.rounds() as f64;
    Ok(c.prefactor() / (t * t) * total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentSource {
    Taylor,
    Exact,
}

/// Second-order Taylor approximations of `E[1/|K|]` and `E[1/|K|^2]` around the mean.
pub fn inverse_moments_taylor(mu: f64, sigma2: f64) -> Result<(f64, f64)> {
    ensure(mu > 0.0, || format!("mean participant count must be > 0, got {mu}"))?;
    Ok((1.0 / mu + sigma2 / mu.powi(3), 1.0 / (mu * mu) + 3.0 * sigma2 / mu.powi(4)))
}

fn known_round_term(p: &[f64], c: &ProblemConstants, source: MomentSource) -> Result<f64> {
    let stats = participant_stats(p);
    if stats.zeta <= 0.0 {
        return domain("probability of a nonempty participant set is zero");
    }
    let (m1, m2) = match source {
        MomentSource::Taylor => inverse_moments_taylor(stats.mu, stats.sigma2)?,
        MomentSource::Exact => inverse_moments_exact(p)?,
    };
    let z = stats.zeta;
    Ok(c.lipschitz * c.lipschitz / z + c.dimension as f64 / (z * z) * (c.noise_var_max * m1 + m2 * c.n0))
}

/// Gap bound when the server knows the participant set.
pub fn bound_known(params: &ConvergenceParams, source: MomentSource) -> Result<f64> {
    params.validate()?;
    let c = &params.constants;
    let total = params.schedule.sum_over_rounds(|p| known_round_term(p, c, source))?;
    let t = params.schedule.rounds() as f64;
    Ok(c.prefactor() / (t * t) * total)
}

/// Closed form of [`bound_known`] with Taylor moments for uniform `p`:
/// `(2 mu/(lambda^2 T)) [L^2/zeta + d/(Kp zeta^2) (s2 (1 + q/(Kp)) + (1 + 3q/(Kp)) N0/(Kp))]`
/// with `q = 1 - p` and `zeta = 1 - q^K`.
pub fn bound_known_uniform(c: &ProblemConstants, users: usize, p: f64, rounds: usize) -> Result<f64> {
    c.validate()?;
    ensure(p > 0.0 && p <= 1.0, || format!("sampling probability must lie in (0, 1], got {p}"))?;
    ensure(users >= 1 && rounds >= 1, || "users and rounds must be >= 1".to_string())?;
    let q = 1.0 - p;
    let kp = users as f64 * p;
    let zeta = 1.0 - q.powi(users as i32);
    let bracket = c.lipschitz * c.lipschitz / zeta
        + c.dimension as f64 / (kp * zeta * zeta)
            * (c.noise_var_max * (1.0 + q / kp) + (1.0 + 3.0 * q / kp) * c.n0 / kp);
    Ok(c.prefactor() / rounds as f64 * bracket)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalPBound {
    pub value: f64,
    pub p_star: f64,
    /// Set when `p* = 1`, in which case the bound is the unknown-set bound at full participation.
    pub fallback: bool,
}

/// Unknown-set bound at the privacy-optimal uniform probability, in closed form.
pub fn bound_optimal_p(c: &ProblemConstants, rounds: usize, delta_prime: f64, users: usize) -> Result<OptimalPBound> {
    c.validate()?;
    ensure(rounds >= 1, || "number of rounds must be >= 1".to_string())?;
    let p_star = optimal_sampling_probability(users, delta_prime)?;
    if p_star >= 1.0 {
        let value = bound_unknown(&ConvergenceParams {
            constants: *c,
            schedule: ParticipationSchedule::uniform(users, 1.0, rounds),
        })?;
        return Ok(OptimalPBound { value, p_star, fallback: true });
    }
    let a = 2.0 * (0.5 * (2.0 / delta_prime).ln()).sqrt();
    let sk = (users as f64).sqrt();
    let k = users as f64;
    let bracket = c.lipschitz * c.lipschitz * (a * (sk - 1.0 / sk) + 1.0) / (a * sk)
        + c.dimension as f64 / (a * a * k) * (a * sk * c.noise_var_max + c.n0);
    Ok(OptimalPBound { value: c.prefactor() / rounds as f64 * bracket, p_star, fallback: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn fig3() -> ProblemConstants {
        ProblemConstants {
            strong_convexity: 0.2,
            smoothness: 0.9,
            lipschitz: 2.0,
            dimension: 30,
            noise_var_max: 0.1,
            n0: 1.0,
        }
    }

    #[test]
    fn second_moment_examples() {
        let full = ParticipantStats::uniform(10, 1.0);
        assert_relative_eq!(second_moment_bound(&full, 2.0, 30, 0.0, 0.0).unwrap(), 4.0);
        let s = ParticipantStats::uniform(20, 0.5);
        assert_relative_eq!(second_moment_bound(&s, 2.0, 30, 0.1, 1.0).unwrap(), 4.8, max_relative = 1e-14);
        let doubled = second_moment_bound(&s, 2.0, 30, 0.1, 2.0).unwrap();
        assert_relative_eq!(doubled - 4.8, 30.0 / 100.0, max_relative = 1e-12);
        let empty = ParticipantStats { mu: 0.0, sigma2: 0.0, zeta: 0.0 };
        assert!(second_moment_bound(&empty, 1.0, 1, 0.0, 0.0).is_err());
    }

    #[test]
    fn unknown_examples() {
        let params = ConvergenceParams { constants: fig3(), schedule: ParticipationSchedule::uniform(20, 0.5, 4000) };
        assert_relative_eq!(bound_unknown(&params).unwrap(), 0.054, max_relative = 1e-12);
        let doubled = ConvergenceParams { constants: fig3(), schedule: ParticipationSchedule::uniform(20, 0.5, 8000) };
        assert_relative_eq!(bound_unknown(&doubled).unwrap(), 0.027, max_relative = 1e-12);
    }

    #[test]
    fn heterogeneous_rounds_average_single_round_bounds() {
        let rows = vec![vec![0.5; 20], vec![0.2; 20], vec![0.9; 20]];
        let params = ConvergenceParams { constants: fig3(), schedule: ParticipationSchedule::PerRound(rows.clone()) };
        let mixed = bound_unknown(&params).unwrap();
        let mean: f64 = rows
            .iter()
            .map(|r| {
                bound_unknown(&ConvergenceParams {
                    constants: fig3(),
                    schedule: ParticipationSchedule::Invariant { p: r.clone(), rounds: 3 },
                })
                .unwrap()
            })
            .sum::<f64>()
            / 3.0;
        assert_relative_eq!(mixed, mean, max_relative = 1e-12);
    }

    #[test]
    fn taylor_examples() {
        assert_eq!(inverse_moments_taylor(4.0, 0.0).unwrap(), (0.25, 0.0625));
        assert_eq!(inverse_moments_taylor(1.0, 0.5).unwrap(), (1.5, 2.5));
        assert_relative_eq!(inverse_moments_taylor(100.0, 50.0).unwrap().0, 0.01005, max_relative = 1e-12);
        assert!(inverse_moments_taylor(0.0, 1.0).is_err());
    }

    #[test]
    fn known_at_full_participation_equals_unknown() {
        for source in [MomentSource::Taylor, MomentSource::Exact] {
            let params = ConvergenceParams { constants: fig3(), schedule: ParticipationSchedule::uniform(20, 1.0, 500) };
            assert_relative_eq!(
                bound_known(&params, source).unwrap(),
                bound_unknown(&params).unwrap(),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn known_preset_values() {
        let params = ConvergenceParams { constants: fig3(), schedule: ParticipationSchedule::uniform(20, 0.5, 4000) };
        assert_relative_eq!(bound_known(&params, MomentSource::Taylor).unwrap(), 0.052_425_057_077_469_02, max_relative = 1e-12);
        assert_relative_eq!(bound_known(&params, MomentSource::Exact).unwrap(), 0.052_657_521_161_348_1, max_relative = 1e-10);
        assert_relative_eq!(
            bound_known_uniform(&fig3(), 20, 0.5, 4000).unwrap(),
            bound_known(&params, MomentSource::Taylor).unwrap(),
            max_relative = 1e-12
        );
        let zero = ConvergenceParams { constants: fig3(), schedule: ParticipationSchedule::Invariant { p: vec![0.0; 4], rounds: 2 } };
        assert!(bound_known(&zero, MomentSource::Taylor).is_err());
    }

    #[test]
    fn optimal_p_matches_generic_bound() {
        let r = bound_optimal_p(&fig3(), 4000, 1e-5, 200).unwrap();
        assert!(!r.fallback);
        assert_relative_eq!(r.value, 0.045_971_147_941_777_86, max_relative = 1e-10);
        let generic = bound_unknown(&ConvergenceParams {
            constants: fig3(),
            schedule: ParticipationSchedule::uniform(200, r.p_star, 4000),
        })
        .unwrap();
        assert_relative_eq!(r.value, generic, max_relative = 1e-9);
    }

    #[test]
    fn optimal_p_falls_back_at_small_k() {
        let r = bound_optimal_p(&fig3(), 4000, 1e-5, 20).unwrap();
        assert!(r.fallback);
        assert_eq!(r.p_star, 1.0);
        let full = ConvergenceParams { constants: fig3(), schedule: ParticipationSchedule::uniform(20, 1.0, 4000) };
        assert_relative_eq!(r.value, bound_unknown(&full).unwrap());
    }

    #[test]
    fn rejects_bad_constants() {
        let mut c = fig3();
        c.smoothness = 0.1;
        assert!(c.validate().is_err());
        let params = ConvergenceParams { constants: c, schedule: ParticipationSchedule::uniform(20, 0.5, 10) };
        assert!(bound_unknown(&params).is_err());
    }
}
