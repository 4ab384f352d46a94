//! Closed-form privacy accounting for wireless aggregation with user sampling.
//!
//! All quantities are in nats. Deltas computed above 1 are clamped to 1;
//! epsilons are never clamped.

mod central;
mod composition;
mod mechanism;

pub use central::{
    central_epsilon_nonuniform, central_epsilon_uniform, comparator_epsilon,
    optimal_sampling_probability, Comparator,
};
pub use composition::{
    compose_heterogeneous, compose_heterogeneous_upper, compose_homogeneous,
    HeterogeneousComposer,
};
pub use mechanism::{
    beta_from_delta, gaussian_mechanism_epsilon, hoeffding_delta, kappa_for_user, local_epsilon,
    sensitivity_bound, LocalEpsilon,
};

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

/// An (epsilon, delta) guarantee.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub delta: f64,
}

impl PrivacyBudget {
    /// Builds a budget, clamping `delta` to 1.
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        ensure(epsilon >= 0.0 && !epsilon.is_nan(), || {
            format!("epsilon must be nonnegative, got {epsilon}")
        })?;
        ensure(delta >= 0.0, || format!("delta must be nonnegative, got {delta}"))?;
        Ok(Self { epsilon, delta: delta.min(1.0) })
    }

    pub fn is_finite(&self) -> bool {
        self.epsilon.is_finite()
    }
}

/// Parameters of the per-user Gaussian mechanism shared by all accountant calls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MechanismParams {
    /// Bound on the clipped gradient norm.
    pub lipschitz: f64,
    /// Smallest per-user noise standard deviation.
    pub sigma_min: f64,
    pub delta_local: f64,
    /// Receiver noise variance; only used by the noise-inclusive local bound.
    pub n0: f64,
}

impl MechanismParams {
    pub fn new(lipschitz: f64, sigma_min: f64, delta_local: f64, n0: f64) -> Result<Self> {
        let p = Self { lipschitz, sigma_min, delta_local, n0 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.lipschitz >= 0.0, || format!("lipschitz bound must be >= 0, got {}", self.lipschitz))?;
        ensure(self.sigma_min > 0.0, || format!("sigma_min must be > 0, got {}", self.sigma_min))?;
        ensure(self.delta_local > 0.0 && self.delta_local <= 1.0, || {
            format!("delta_local must lie in (0, 1], got {}", self.delta_local)
        })?;
        ensure(self.n0 >= 0.0, || format!("receiver noise variance must be >= 0, got {}", self.n0))
    }

    /// `c = (2L / sigma_min) * sqrt(2 ln(1.25 / delta_local))`, the per-round
    /// Gaussian-mechanism epsilon of a single user at sensitivity `2L`.
    pub fn c(&self) -> f64 {
        2.0 * self.lipschitz / self.sigma_min * gaussian_tail_factor(self.delta_local)
    }
}

/// `sqrt(2 ln(1.25 / delta))`.
pub(crate) fn gaussian_tail_factor(delta: f64) -> f64 {
    (2.0 * (1.25 / delta).ln()).sqrt()
}

/// The delta-prime rule used in the experiments: `2 exp(-2 mu^2 / K) + floor`.
pub fn adaptive_delta_prime(mu: f64, users: usize, floor: f64) -> f64 {
    2.0 * (-2.0 * mu * mu / users as f64).exp() + floor
}
