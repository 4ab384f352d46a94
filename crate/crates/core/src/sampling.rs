//! Participation decisions and the statistics of the participant count.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, Discrete};

use crate::error::{domain, ensure, AirdpError, Result};

/// How users decide to participate in a round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SamplingPolicy {
    /// Same probability for every user and round.
    UniformInvariant { p: f64 },
    /// Same probability for every user, varying per round (0-based round index).
    UniformSchedule { p: Vec<f64> },
    /// `p_k = min(1, h_k / h_threshold)` from the user's current channel gain.
    ChannelAware { h_threshold: f64 },
    /// Arbitrary per-round, per-user probabilities: `p[round][user]`.
    Explicit { p: Vec<Vec<f64>> },
}

impl SamplingPolicy {
    pub fn validate(&self, users: usize, rounds: usize) -> Result<()> {
        let unit = |x: &f64| (0.0..=1.0).contains(x);
        match self {
            SamplingPolicy::UniformInvariant { p } => {
                ensure(*p > 0.0 && *p <= 1.0, || format!("uniform probability must lie in (0, 1], got {p}"))
            }
            SamplingPolicy::UniformSchedule { p } => {
                if p.len() != rounds {
                    return Err(AirdpError::Shape { expected: rounds, actual: p.len() });
                }
                ensure(p.iter().all(|x| *x > 0.0 && *x <= 1.0), || {
                    "scheduled probabilities must lie in (0, 1]".to_string()
                })
            }
            SamplingPolicy::ChannelAware { h_threshold } => ensure(*h_threshold > 0.0, || {
                format!("channel threshold must be > 0, got {h_threshold}")
            }),
            SamplingPolicy::Explicit { p } => {
                if p.len() != rounds {
                    return Err(AirdpError::Shape { expected: rounds, actual: p.len() });
                }
                for row in p {
                    if row.len() != users {
                        return Err(AirdpError::Shape { expected: users, actual: row.len() });
                    }
                }
                ensure(p.iter().flatten().all(unit), || "explicit probabilities must lie in [0, 1]".to_string())
            }
        }
    }

    pub fn needs_gains(&self) -> bool {
        matches!(self, SamplingPolicy::ChannelAware { .. })
    }

    /// Per-user participation probabilities for round `t` (0-based).
    pub fn resolve(&self, users: usize, t: usize, gains: Option<&[f64]>) -> Result<Vec<f64>> {
        match self {
            SamplingPolicy::UniformInvariant { p } => Ok(vec![*p; users]),
            SamplingPolicy::UniformSchedule { p } => match p.get(t) {
                Some(&pt) => Ok(vec![pt; users]),
                None => domain(format!("round {t} beyond schedule of length {}", p.len())),
            },
            SamplingPolicy::ChannelAware { h_threshold } => {
                let gains = gains.ok_or_else(|| {
                    AirdpError::Config("channel-aware sampling requires channel gains".into())
                })?;
                if gains.len() != users {
                    return Err(AirdpError::Shape { expected: users, actual: gains.len() });
                }
                Ok(gains.iter().map(|h| (h / h_threshold).clamp(0.0, 1.0)).collect())
            }
            SamplingPolicy::Explicit { p } => match p.get(t) {
                Some(row) if row.len() == users => Ok(row.clone()),
                Some(row) => Err(AirdpError::Shape { expected: users, actual: row.len() }),
                None => domain(format!("round {t} beyond explicit matrix with {} rows", p.len())),
            },
        }
    }
}

/// Independent Bernoulli participation. One uniform draw per user, in user order.
pub fn sample_participants<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> Vec<usize> {
    p.iter()
        .enumerate()
        .filter_map(|(k, &pk)| {
            let u: f64 = rng.random();
            (u < pk).then_some(k)
        })
        .collect()
}

/// Mean, variance and nonempty probability of the participant count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParticipantStats {
    pub mu: f64,
    pub sigma2: f64,
    pub zeta: f64,
}

impl ParticipantStats {
    pub fn uniform(users: usize, p: f64) -> Self {
        let k = users as f64;
        Self { mu: k * p, sigma2: k * p * (1.0 - p), zeta: 1.0 - (1.0 - p).powi(users as i32) }
    }
}

pub fn participant_stats(p: &[f64]) -> ParticipantStats {
    let mu = p.iter().sum();
    let sigma2 = p.iter().map(|x| x * (1.0 - x)).sum();
    let empty: f64 = p.iter().map(|x| 1.0 - x).product();
    ParticipantStats { mu, sigma2, zeta: 1.0 - empty }
}

fn check_probabilities(p: &[f64]) -> Result<()> {
    ensure(p.iter().all(|x| (0.0..=1.0).contains(x)), || {
        "sampling probabilities must lie in [0, 1]".to_string()
    })
}

/// Exact pmf of the participant count over `0..=K`.
///
/// Constant vectors use the binomial pmf; others use the Poisson-binomial
/// convolution recursion, which is exact and O(K^2).
pub fn count_distribution_exact(p: &[f64]) -> Result<Vec<f64>> {
    check_probabilities(p)?;
    let users = p.len();
    if users > 0 && p.iter().all(|&x| x == p[0]) {
        let q = p[0];
        if q == 0.0 || q == 1.0 {
            let mut pmf = vec![0.0; users + 1];
            pmf[if q == 0.0 { 0 } else { users }] = 1.0;
            return Ok(pmf);
        }
        let dist = Binomial::new(q, users as u64)
            .map_err(|e| AirdpError::Domain(format!("binomial pmf: {e}")))?;
        return Ok((0..=users as u64).map(|j| dist.pmf(j)).collect());
    }
    let mut pmf = vec![0.0; users + 1];
    pmf[0] = 1.0;
    for (n, &q) in p.iter().enumerate() {
        for j in (0..=n + 1).rev() {
            let stay = pmf[j] * (1.0 - q);
            let join = if j > 0 { pmf[j - 1] * q } else { 0.0 };
            pmf[j] = stay + join;
        }
    }
    Ok(pmf)
}

/// `E[1{|K| >= 1} / |K|]` and `E[1{|K| >= 1} / |K|^2]`; an empty round contributes zero.
pub fn inverse_moments_exact(p: &[f64]) -> Result<(f64, f64)> {
    Ok(inverse_moments_of_pmf(&count_distribution_exact(p)?))
}

pub fn inverse_moments_of_pmf(pmf: &[f64]) -> (f64, f64) {
    pmf.iter().enumerate().skip(1).fold((0.0, 0.0), |(m1, m2), (j, &w)| {
        let j = j as f64;
        (m1 + w / j, m2 + w / (j * j))
    })
}
