use super::{gaussian_tail_factor, MechanismParams};
use crate::error::{domain, ensure, Result};

/// Epsilon of the Gaussian mechanism with the given L2 sensitivity.
pub fn gaussian_mechanism_epsilon(sensitivity: f64, sigma: f64, delta_local: f64) -> Result<f64> {
    ensure(sensitivity >= 0.0, || format!("sensitivity must be >= 0, got {sensitivity}"))?;
    ensure(sigma > 0.0, || format!("sigma must be > 0, got {sigma}"))?;
    ensure(delta_local > 0.0 && delta_local <= 1.0, || {
        format!("delta_local must lie in (0, 1], got {delta_local}")
    })?;
    Ok(sensitivity / sigma * gaussian_tail_factor(delta_local))
}

/// Sensitivity of the received signal to one user's gradient: `2 h alpha L`.
pub fn sensitivity_bound(lipschitz: f64, gain: f64, alpha: f64) -> Result<f64> {
    ensure(lipschitz >= 0.0 && gain >= 0.0 && alpha >= 0.0, || {
        format!("sensitivity inputs must be >= 0, got L={lipschitz}, h={gain}, alpha={alpha}")
    })?;
    Ok(2.0 * gain * alpha * lipschitz)
}

/// Hoeffding bound `2 exp(-2 beta^2 K)` on the probability that the
/// participant count deviates from its mean by `beta*K` or more.
pub fn hoeffding_delta(beta: f64, users: usize) -> Result<f64> {
    if users == 0 {
        return domain("number of users must be >= 1");
    }
    ensure(beta >= 0.0, || format!("beta must be >= 0, got {beta}"))?;
    Ok(2.0 * (-2.0 * beta * beta * users as f64).exp())
}

/// Inverse of [`hoeffding_delta`] in `beta`.
pub fn beta_from_delta(delta_prime: f64, users: usize) -> Result<f64> {
    if users == 0 {
        return domain("number of users must be >= 1");
    }
    ensure(delta_prime > 0.0 && delta_prime < 1.0, || {
        format!("delta' must lie in (0, 1), got {delta_prime}")
    })?;
    Ok((0.5 * (2.0 / delta_prime).ln()).sqrt() / (users as f64).sqrt())
}

/// `sum_{i != user} p_i - beta*K`, unclamped.
pub fn kappa_for_user(p: &[f64], user: usize, delta_prime: f64) -> Result<f64> {
    if user >= p.len() {
        return domain(format!("user index {user} out of range for {} users", p.len()));
    }
    let beta = beta_from_delta(delta_prime, p.len())?;
    let others: f64 = p.iter().enumerate().filter(|&(i, _)| i != user).map(|(_, &x)| x).sum();
    Ok(others - beta * p.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalEpsilon {
    pub epsilon: f64,
    /// Kappa actually used (after clamping at zero).
    pub kappa: f64,
    /// Set when the supplied kappa was negative and no amplification credit was given.
    pub kappa_clamped: bool,
}

/// Per-user local epsilon under wireless aggregation with sampling.
///
/// Without `include_n0` this is `c / sqrt(1 + kappa)`. With it, the receiver
/// noise joins the effective variance: `2L sqrt(2 ln(1.25/dl)) / sqrt((1+kappa) sigma^2 + N0)`.
/// The companion delta is `p_k (delta_local + delta')`.
pub fn local_epsilon(params: &MechanismParams, kappa: f64, include_n0: bool) -> Result<LocalEpsilon> {
    params.validate()?;
    ensure(!kappa.is_nan(), || "kappa is NaN".to_string())?;
    let kappa_clamped = kappa < 0.0;
    if kappa_clamped {
        log::warn!("kappa = {kappa} < 0: concentration window exceeds expected participation, no amplification credit");
    }
    let kappa = kappa.max(0.0);
    let epsilon = if include_n0 {
        let var = (1.0 + kappa) * params.sigma_min * params.sigma_min + params.n0;
        2.0 * params.lipschitz * gaussian_tail_factor(params.delta_local) / var.sqrt()
    } else {
        params.c() / (1.0 + kappa).sqrt()
    };
    Ok(LocalEpsilon { epsilon, kappa, kappa_clamped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gaussian_examples() {
        assert_eq!(gaussian_mechanism_epsilon(0.0, 1.0, 0.05).unwrap(), 0.0);
        let d = 1.25 * (-0.5f64).exp();
        assert_relative_eq!(gaussian_mechanism_epsilon(2.0, 1.0, d).unwrap(), 2.0, max_relative = 1e-14);
        assert_relative_eq!(
            gaussian_mechanism_epsilon(1.0, 1.0, 0.05).unwrap(),
            2.537_272_482_359_039_3,
            max_relative = 1e-13
        );
    }

    #[test]
    fn gaussian_rejects_bad_domain() {
        assert!(gaussian_mechanism_epsilon(1.0, 0.0, 0.05).is_err());
        assert!(gaussian_mechanism_epsilon(1.0, -1.0, 0.05).is_err());
        assert!(gaussian_mechanism_epsilon(1.0, 1.0, 0.0).is_err());
        assert!(gaussian_mechanism_epsilon(1.0, 1.0, 1.5).is_err());
        assert!(gaussian_mechanism_epsilon(1.0, 1.0, 1.0).is_ok());
    }

    #[test]
    fn sensitivity_examples() {
        assert_eq!(sensitivity_bound(1.0, 1.0, 1.0).unwrap(), 2.0);
        assert_eq!(sensitivity_bound(0.0, 3.0, 0.2).unwrap(), 0.0);
        assert_relative_eq!(sensitivity_bound(2.0, 0.5, 1.5).unwrap(), 3.0);
        assert!(sensitivity_bound(-1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn hoeffding_examples() {
        assert_eq!(hoeffding_delta(0.0, 10).unwrap(), 2.0);
        assert_relative_eq!(hoeffding_delta(1.0, 1).unwrap(), 2.0 * (-2.0f64).exp(), max_relative = 1e-15);
        assert_relative_eq!(
            hoeffding_delta(0.17468, 200).unwrap(),
            1.000_832_031_476_483_8e-5,
            max_relative = 1e-12
        );
        assert!(hoeffding_delta(0.1, 0).is_err());
    }

    #[test]
    fn beta_examples() {
        assert_relative_eq!(beta_from_delta(2.0 * (-2.0f64).exp(), 1).unwrap(), 1.0, max_relative = 1e-15);
        assert_relative_eq!(
            beta_from_delta(1e-5, 200).unwrap(),
            0.174_685_951_392_278_35,
            max_relative = 1e-13
        );
        let b = beta_from_delta(0.3, 50).unwrap();
        assert_relative_eq!(hoeffding_delta(b, 50).unwrap(), 0.3, max_relative = 1e-13);
        assert!(beta_from_delta(0.0, 5).is_err());
        assert!(beta_from_delta(1.0, 5).is_err());
    }

    fn table_params(sigma2: f64, l: f64) -> MechanismParams {
        MechanismParams::new(l, sigma2.sqrt(), 1e-5, 1.0).unwrap()
    }

    #[test]
    fn local_epsilon_table_values() {
        let e = local_epsilon(&table_params(0.1, 1.0), 144.164, true).unwrap();
        assert_relative_eq!(e.epsilon, 2.4599, max_relative = 5e-5);
        let e = local_epsilon(&table_params(0.8, 1.0), 24.764, true).unwrap();
        assert_relative_eq!(e.epsilon, 2.0843, max_relative = 5e-5);
        let e = local_epsilon(&table_params(0.1, 1.0), 144.164, false).unwrap();
        assert_relative_eq!(e.epsilon, 2.5432, max_relative = 5e-5);
        let e = local_epsilon(&table_params(0.1, 0.0), 3.0, true).unwrap();
        assert_eq!(e.epsilon, 0.0);
    }

    #[test]
    fn local_epsilon_clamps_negative_kappa() {
        let p = table_params(0.1, 1.0);
        let neg = local_epsilon(&p, -4.0, false).unwrap();
        let zero = local_epsilon(&p, 0.0, false).unwrap();
        assert!(neg.kappa_clamped);
        assert!(!zero.kappa_clamped);
        assert_eq!(neg.epsilon, zero.epsilon);
        assert_eq!(neg.kappa, 0.0);
    }

    #[test]
    fn kappa_matches_table_setup() {
        let p = vec![0.9; 200];
        let k = kappa_for_user(&p, 0, 1e-5).unwrap();
        assert_relative_eq!(k, 144.162_809_721_544_33, max_relative = 1e-12);
        assert!(kappa_for_user(&p, 200, 1e-5).is_err());
    }
}
