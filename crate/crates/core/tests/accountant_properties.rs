use airdp::dp_analysis::{
    beta_from_delta, central_epsilon_nonuniform, central_epsilon_uniform, compose_heterogeneous,
    compose_heterogeneous_upper, compose_homogeneous, hoeffding_delta, local_epsilon, optimal_sampling_probability,
    MechanismParams,
};
use proptest::prelude::*;

fn mech(lipschitz: f64, sigma: f64) -> MechanismParams {
    MechanismParams::new(lipschitz, sigma, 1e-5, 1.0).unwrap()
}

/// `p / sqrt(p - beta)`: the central epsilon to first order in the exponent.
fn linearized(p: f64, beta: f64) -> f64 {
    p / (p - beta).sqrt()
}

proptest! {
    #[test]
    fn beta_and_hoeffding_invert(dp in 1e-12f64..0.5, users in 1usize..10_000_000) {
        let beta = beta_from_delta(dp, users).unwrap();
        let back = hoeffding_delta(beta, users).unwrap();
        prop_assert!((back / dp - 1.0).abs() < 1e-10);
    }

    #[test]
    fn central_decreases_with_more_users(k in 1_000usize..1_000_000, p in 0.2f64..1.0) {
        let m = mech(1.0, 3.0);
        let a = central_epsilon_uniform(p, k, &m, 1e-4).unwrap();
        let b = central_epsilon_uniform(p, 2 * k, &m, 1e-4).unwrap();
        prop_assert!(b.epsilon < a.epsilon);
        prop_assert_eq!(a.delta, b.delta);
    }

    #[test]
    fn central_grows_with_sensitivity_and_shrinks_with_noise(l in 0.1f64..5.0, sigma in 0.5f64..5.0) {
        let base = central_epsilon_uniform(0.3, 10_000, &mech(l, sigma), 1e-4).unwrap().epsilon;
        let louder = central_epsilon_uniform(0.3, 10_000, &mech(1.5 * l, sigma), 1e-4).unwrap().epsilon;
        let noisier = central_epsilon_uniform(0.3, 10_000, &mech(l, 1.5 * sigma), 1e-4).unwrap().epsilon;
        prop_assert!(louder > base);
        prop_assert!(noisier < base);
    }

    #[test]
    fn constant_vector_matches_uniform(k in 50usize..3_000, p in 0.3f64..1.0) {
        let m = mech(1.0, 3.0);
        let u = central_epsilon_uniform(p, k, &m, 1e-4).unwrap();
        let n = central_epsilon_nonuniform(&vec![p; k], &m, 1e-4).unwrap();
        prop_assert!((u.epsilon / n.epsilon - 1.0).abs() < 1e-9);
        prop_assert!((u.delta / n.delta - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nonuniform_is_driven_by_the_largest_probability(k in 200usize..2_000, bump in 0.0f64..0.5) {
        let m = mech(1.0, 3.0);
        let mut p = vec![0.5; k];
        let base = central_epsilon_nonuniform(&p, &m, 1e-4).unwrap().epsilon;
        p[0] = 0.5 + bump;
        let bumped = central_epsilon_nonuniform(&p, &m, 1e-4).unwrap().epsilon;
        prop_assert!(bumped >= base * (1.0 - 1e-12));
    }

    #[test]
    fn optimal_probability_minimizes_linearized_epsilon(k in 100usize..10_000_000, dp in 1e-8f64..1e-2) {
        let beta = beta_from_delta(dp, k).unwrap();
        let p = optimal_sampling_probability(k, dp).unwrap();
        prop_assume!(p < 1.0);
        let best = linearized(p, beta);
        // stationarity: central finite difference of the objective vanishes at p*
        let h = 1e-6 * p;
        let slope = (linearized(p + h, beta) - linearized(p - h, beta)) / (2.0 * h);
        prop_assert!(slope.abs() < 1e-5 * best / p);
        // grid optimality on (beta, 1]
        for i in 1..=200 {
            let q = beta + (1.0 - beta) * i as f64 / 200.0;
            prop_assert!(linearized(q, beta) >= best * (1.0 - 1e-12));
        }
    }

    #[test]
    fn local_epsilon_decays_as_inverse_square_root(kappa in 0.0f64..1e6) {
        let m = mech(1.0, 0.5);
        let e0 = local_epsilon(&m, 0.0, false).unwrap().epsilon;
        let e = local_epsilon(&m, kappa, false).unwrap().epsilon;
        prop_assert!((e * (1.0 + kappa).sqrt() / e0 - 1.0).abs() < 1e-12);
        let with_n0 = local_epsilon(&m, kappa, true).unwrap().epsilon;
        prop_assert!(with_n0 <= e);
        // every doubling of the effective count divides the noise-free bound by sqrt(2)
        let d = local_epsilon(&m, 2.0 * kappa + 1.0, false).unwrap().epsilon;
        prop_assert!((e / d - std::f64::consts::SQRT_2).abs() < 1e-9);
    }

    #[test]
    fn composition_is_monotone(eps in 1e-4f64..2.0, t in 1usize..500, dt in 1e-9f64..1e-2) {
        let one = compose_homogeneous(eps, 1e-6, t, dt).unwrap();
        let more = compose_homogeneous(eps, 1e-6, t + 1, dt).unwrap();
        let bigger = compose_homogeneous(eps * 1.1, 1e-6, t, dt).unwrap();
        prop_assert!(more.epsilon > one.epsilon && bigger.epsilon > one.epsilon);
        prop_assert!(more.delta > one.delta);
        let het = compose_heterogeneous(&vec![eps; t], &vec![1e-6; t], dt).unwrap();
        prop_assert!(het.epsilon <= one.epsilon * (1.0 + 1e-12));
    }

    #[test]
    fn relaxed_composition_dominates_exact(k in 200usize..100_000, p in 0.3f64..1.0, t in 1usize..200) {
        let m = mech(1.0, 3.0);
        let round = central_epsilon_uniform(p, k, &m, 1e-4).unwrap();
        let exact = compose_heterogeneous(&vec![round.epsilon; t], &vec![round.delta; t], 1e-5).unwrap();
        let upper = compose_heterogeneous_upper(&vec![p; t], &vec![p * k as f64; t], k, &m, 1e-4, 1e-5).unwrap();
        prop_assert!(upper >= exact.epsilon * (1.0 - 1e-12));
    }
}

#[test]
fn huge_exponent_stays_finite_and_asymptotic() {
    // c / sqrt(margin) is far beyond exp's range; the result is x + ln(a) to leading order
    let m = MechanismParams::new(1e4, 1e-2, 1e-5, 0.0).unwrap();
    let b = central_epsilon_uniform(0.5, 1_000, &m, 1e-4).unwrap();
    assert!(b.epsilon.is_finite());
    let beta = beta_from_delta(1e-4, 1_000).unwrap();
    let x = m.c() / (1_000.0 * (0.5 - beta)).sqrt();
    let a: f64 = 0.5 / (1.0 - 1e-4);
    assert!(x > 700.0);
    assert!((b.epsilon - (x + a.ln())).abs() < 1e-9 * x);
}
