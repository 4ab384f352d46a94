use super::{beta_from_delta, MechanismParams, PrivacyBudget};
use crate::error::{domain, ensure, AirdpError, Result};

/// `ln(1 + a (e^x - 1))` without overflowing for large `x`.
pub(crate) fn log1p_scaled_expm1(a: f64, x: f64) -> f64 {
    if a == 0.0 || x == 0.0 {
        return 0.0;
    }
    if x <= 700.0 {
        (a * x.exp_m1()).ln_1p()
    } else {
        // ln(a e^x - a + 1) = x + ln a + ln(1 + (1 - a) e^-x / a)
        x + a.ln() + ((1.0 - a) * (-x).exp() / a).ln_1p()
    }
}

fn check_delta_prime(delta_prime: f64) -> Result<()> {
    ensure(delta_prime > 0.0 && delta_prime < 1.0, || {
        format!("delta' must lie in (0, 1), got {delta_prime}")
    })
}

/// Central (epsilon, delta) of one round under per-user sampling probabilities `p`.
///
/// The admissible range of delta' is `(2 exp(-2 mu^2 / K), 1)`, which is the
/// same condition as `mu - beta K > 0`; violations are reported as
/// [`AirdpError::InfeasibleConcentration`].
pub fn central_epsilon_nonuniform(
    p: &[f64],
    params: &MechanismParams,
    delta_prime: f64,
) -> Result<PrivacyBudget> {
    params.validate()?;
    check_delta_prime(delta_prime)?;
    if p.is_empty() {
        return domain("probability vector is empty");
    }
    ensure(p.iter().all(|x| (0.0..=1.0).contains(x)), || {
        "sampling probabilities must lie in [0, 1]".to_string()
    })?;
    let users = p.len();
    let max_p = p.iter().cloned().fold(0.0, f64::max);
    let delta = delta_prime + max_p * params.delta_local / (1.0 - delta_prime);
    let c = params.c();
    if c == 0.0 || max_p == 0.0 {
        return PrivacyBudget::new(0.0, delta);
    }
    let mu: f64 = p.iter().sum();
    let beta_k = beta_from_delta(delta_prime, users)? * users as f64;
    let margin = mu - beta_k;
    if margin <= 0.0 {
        return Err(AirdpError::InfeasibleConcentration { mu, beta_k, margin });
    }
    let epsilon = log1p_scaled_expm1(max_p / (1.0 - delta_prime), c / margin.sqrt());
    PrivacyBudget::new(epsilon, delta)
}

/// Central (epsilon, delta) of one round when every user participates with probability `p`.
pub fn central_epsilon_uniform(
    p: f64,
    users: usize,
    params: &MechanismParams,
    delta_prime: f64,
) -> Result<PrivacyBudget> {
    params.validate()?;
    check_delta_prime(delta_prime)?;
    ensure(p > 0.0 && p <= 1.0, || format!("sampling probability must lie in (0, 1], got {p}"))?;
    let beta = beta_from_delta(delta_prime, users)?;
    let delta = delta_prime + p * params.delta_local / (1.0 - delta_prime);
    let c = params.c();
    if c == 0.0 {
        return PrivacyBudget::new(0.0, delta);
    }
    let k = users as f64;
    if p <= beta {
        return Err(AirdpError::InfeasibleConcentration {
            mu: p * k,
            beta_k: beta * k,
            margin: (p - beta) * k,
        });
    }
    let epsilon = log1p_scaled_expm1(p / (1.0 - delta_prime), c / (k * (p - beta)).sqrt());
    PrivacyBudget::new(epsilon, delta)
}

/// Sampling probability minimizing the linearized central epsilon: `min(1, 2 beta)`.
pub fn optimal_sampling_probability(users: usize, delta_prime: f64) -> Result<f64> {
    Ok((2.0 * beta_from_delta(delta_prime, users)?).min(1.0))
}

/// Reference schemes for the central-privacy comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparator {
    /// Over-the-air aggregation, every user always transmits (p = 1).
    WirelessNoSampling,
    /// Orthogonal transmission, no sampling: one user's mechanism is exposed as is.
    OrthogonalNoSampling,
    /// Orthogonal transmission with Poisson sampling at the optimal probability.
    OrthogonalWithSampling,
}

/// Central epsilon of a comparator scheme.
///
/// `WirelessNoSampling` is the uniform-sampling bound evaluated at `p = 1`
/// (it behaves as `c / sqrt(K)` for large `K`); `OrthogonalNoSampling` is `c`;
/// `OrthogonalWithSampling` is `ln(1 + p* (e^c - 1))`.
pub fn comparator_epsilon(
    users: usize,
    params: &MechanismParams,
    delta_prime: f64,
    variant: Comparator,
) -> Result<f64> {
    params.validate()?;
    check_delta_prime(delta_prime)?;
    let c = params.c();
    match variant {
        Comparator::WirelessNoSampling => {
            Ok(central_epsilon_uniform(1.0, users, params, delta_prime)?.epsilon)
        }
        Comparator::OrthogonalNoSampling => Ok(c),
        Comparator::OrthogonalWithSampling => {
            let p = optimal_sampling_probability(users, delta_prime)?;
            Ok(log1p_scaled_expm1(p, c))
        }
    }
}
