use super::{beta_from_delta, MechanismParams, PrivacyBudget};
use crate::error::{domain, ensure, AirdpError, Result};

fn check_delta_tilde(delta_tilde: f64) -> Result<()> {
    ensure(delta_tilde > 0.0 && delta_tilde <= 1.0, || {
        format!("delta~ must lie in (0, 1], got {delta_tilde}")
    })
}

/// Running advanced composition over rounds with heterogeneous budgets.
///
/// epsilon = sum_t eps_t tanh(eps_t / 2) + sqrt(2 ln(1/delta~) sum_t eps_t^2)
/// delta   = 1 - (1 - delta~) prod_t (1 - delta_t)
#[derive(Debug, Clone)]
pub struct HeterogeneousComposer {
    delta_tilde: f64,
    linear: f64,
    squares: f64,
    /// ln prod_t (1 - delta_t)
    log_keep: f64,
    rounds: usize,
}

impl HeterogeneousComposer {
    pub fn new(delta_tilde: f64) -> Result<Self> {
        check_delta_tilde(delta_tilde)?;
        Ok(Self { delta_tilde, linear: 0.0, squares: 0.0, log_keep: 0.0, rounds: 0 })
    }

    pub fn push(&mut self, round: PrivacyBudget) -> Result<()> {
        ensure(round.epsilon >= 0.0, || format!("round epsilon must be >= 0, got {}", round.epsilon))?;
        ensure((0.0..=1.0).contains(&round.delta), || {
            format!("round delta must lie in [0, 1], got {}", round.delta)
        })?;
        let e = round.epsilon;
        // (e^x - 1) x / (e^x + 1) = x tanh(x / 2)
        self.linear += if e.is_finite() { e * (0.5 * e).tanh() } else { f64::INFINITY };
        self.squares += e * e;
        self.log_keep += (-round.delta).ln_1p();
        self.rounds += 1;
        Ok(())
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }

    pub fn total(&self) -> PrivacyBudget {
        let epsilon = self.linear + (2.0 * (1.0 / self.delta_tilde).ln() * self.squares).sqrt();
        let delta = 1.0 - (1.0 - self.delta_tilde) * self.log_keep.exp();
        PrivacyBudget { epsilon, delta: delta.clamp(0.0, 1.0) }
    }
}

/// Advanced composition of per-round budgets that may differ across rounds.
pub fn compose_heterogeneous(eps: &[f64], deltas: &[f64], delta_tilde: f64) -> Result<PrivacyBudget> {
    if eps.is_empty() {
        return domain("cannot compose an empty sequence of rounds");
    }
    if eps.len() != deltas.len() {
        return Err(AirdpError::Shape { expected: eps.len(), actual: deltas.len() });
    }
    let mut acc = HeterogeneousComposer::new(delta_tilde)?;
    for (&e, &d) in eps.iter().zip(deltas) {
        acc.push(PrivacyBudget { epsilon: e, delta: d })?;
    }
    Ok(acc.total())
}

/// Closed-form relaxation of [`compose_heterogeneous`] applied to the
/// per-round non-uniform central bounds. Uses the smallest expected
/// participant count across rounds and `e^x + 1 >= 2`, `ln(1 + x) <= x`,
/// so it always dominates the exact composition.
pub fn compose_heterogeneous_upper(
    max_p: &[f64],
    mu: &[f64],
    users: usize,
    params: &MechanismParams,
    delta_prime: f64,
    delta_tilde: f64,
) -> Result<f64> {
    params.validate()?;
    check_delta_tilde(delta_tilde)?;
    if max_p.is_empty() {
        return domain("cannot compose an empty sequence of rounds");
    }
    if max_p.len() != mu.len() {
        return Err(AirdpError::Shape { expected: max_p.len(), actual: mu.len() });
    }
    let sum_p2: f64 = max_p.iter().map(|p| p * p).sum();
    if sum_p2 == 0.0 || params.c() == 0.0 {
        return Ok(0.0);
    }
    let beta_k = beta_from_delta(delta_prime, users)? * users as f64;
    let mu_min = mu.iter().cloned().fold(f64::INFINITY, f64::min);
    let margin = mu_min - beta_k;
    if margin <= 0.0 {
        return Err(AirdpError::InfeasibleConcentration { mu: mu_min, beta_k, margin });
    }
    let x = (params.c() / margin.sqrt()).exp_m1();
    let scale = 1.0 - delta_prime;
    Ok(x * x * sum_p2 / (2.0 * scale * scale)
        + (2.0 * (1.0 / delta_tilde).ln()).sqrt() * x * sum_p2.sqrt() / scale)
}

/// Composition of `rounds` identical per-round budgets.
pub fn compose_homogeneous(eps: f64, delta_c: f64, rounds: usize, delta_tilde: f64) -> Result<PrivacyBudget> {
    ensure(eps >= 0.0, || format!("epsilon must be >= 0, got {eps}"))?;
    ensure((0.0..=1.0).contains(&delta_c), || format!("delta must lie in [0, 1], got {delta_c}"))?;
    ensure(rounds >= 1, || "number of rounds must be >= 1".to_string())?;
    check_delta_tilde(delta_tilde)?;
    let t = rounds as f64;
    let epsilon = (2.0 * t * (1.0 / delta_tilde).ln()).sqrt() * eps + t * eps * eps.exp_m1();
    PrivacyBudget::new(epsilon, t * delta_c + delta_tilde)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp_analysis::central_epsilon_uniform;
    use approx::assert_relative_eq;

    #[test]
    fn heterogeneous_examples() {
        let b = compose_heterogeneous(&[0.0; 5], &[0.0; 5], 1e-5).unwrap();
        assert_eq!(b.epsilon, 0.0);
        assert_relative_eq!(b.delta, 1e-5, max_relative = 1e-12);

        let b = compose_heterogeneous(&[0.1; 100], &[0.0; 100], 1e-5).unwrap();
        assert_relative_eq!(b.epsilon, 5.298_109_661_766_881, max_relative = 1e-12);

        let e: f64 = 0.37;
        let b = compose_heterogeneous(&[e], &[0.0], 1e-5).unwrap();
        let expected = (e.exp() - 1.0) * e / (e.exp() + 1.0) + e * (2.0 * (1e5f64).ln()).sqrt();
        assert_relative_eq!(b.epsilon, expected, max_relative = 1e-13);
    }

    #[test]
    fn heterogeneous_errors() {
        assert!(compose_heterogeneous(&[], &[], 1e-5).is_err());
        assert!(matches!(
            compose_heterogeneous(&[0.1, 0.2], &[0.0], 1e-5),
            Err(AirdpError::Shape { .. })
        ));
        assert!(compose_heterogeneous(&[0.1], &[0.0], 0.0).is_err());
        assert!(compose_heterogeneous(&[0.1], &[1.5], 0.5).is_err());
    }

    #[test]
    fn heterogeneous_delta_clamps_to_one() {
        let b = compose_heterogeneous(&[0.1, 0.1], &[1.0, 0.5], 1.0).unwrap();
        assert!(b.delta <= 1.0);
        assert_relative_eq!(b.delta, 1.0);
    }

    #[test]
    fn large_epsilon_does_not_overflow() {
        let b = compose_heterogeneous(&[800.0], &[0.0], 0.5).unwrap();
        assert!(b.epsilon.is_finite());
        assert!(b.epsilon > 800.0);
    }

    #[test]
    fn homogeneous_examples() {
        let b = compose_homogeneous(0.0, 1e-6, 50, 1e-5).unwrap();
        assert_eq!(b.epsilon, 0.0);
        assert_relative_eq!(b.delta, 50.0 * 1e-6 + 1e-5, max_relative = 1e-12);
        assert_relative_eq!(
            compose_homogeneous(0.1, 0.0, 100, 1e-5).unwrap().epsilon,
            5.850_235_092_944_557,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            compose_homogeneous(0.1, 0.0, 1, 1e-5).unwrap().epsilon,
            0.490_369_683_026_372_9,
            max_relative = 1e-12
        );
        assert_eq!(compose_homogeneous(0.1, 0.1, 20, 0.5).unwrap().delta, 1.0);
    }

    #[test]
    fn upper_relaxation_example() {
        let params = MechanismParams::new(1.0, 3.0, 1e-4, 3.0).unwrap();
        let upper = compose_heterogeneous_upper(&[0.3; 10], &[60.0; 10], 200, &params, 1e-4, 1e-5).unwrap();
        assert_relative_eq!(upper, 3.509_603_913_458_557_7, max_relative = 1e-10);
        let per_round = central_epsilon_uniform(0.3, 200, &params, 1e-4).unwrap().epsilon;
        let exact = compose_heterogeneous(&[per_round; 10], &[0.0; 10], 1e-5).unwrap().epsilon;
        assert_relative_eq!(exact, 3.157_137_167_314_021, max_relative = 1e-10);
        assert!(upper >= exact);
        assert_eq!(compose_heterogeneous_upper(&[0.0; 3], &[1.0; 3], 200, &params, 1e-4, 1e-5).unwrap(), 0.0);
    }
}
