//! Helpers shared by the integration tests: brute-force oracles and preset builders.
#![allow(dead_code)]

use airdp::channel::{ChannelParams, FadingChannel};
use airdp::fedsgd_sim::{
    run_round, AccountantConfig, AlphaMode, DeltaPrimeRule, EstimatorMode, LearningRate, ModelState, RoundSetup,
    TaskSpec, TrainingConfig, TrainingTask,
};
use airdp::rng::{Purpose, StreamKey};
use airdp::sampling::SamplingPolicy;

/// Participant-count pmf and conditional inverse moments by summing over all 2^K subsets.
pub struct Enumerated {
    pub pmf: Vec<f64>,
    pub mu: f64,
    pub sigma2: f64,
    pub zeta: f64,
    pub inv1: f64,
    pub inv2: f64,
}

pub fn enumerate_subsets(p: &[f64]) -> Enumerated {
    let k = p.len();
    assert!(k <= 20, "enumeration is exponential");
    let mut pmf = vec![0.0; k + 1];
    for mask in 0u32..(1 << k) {
        let mut prob = 1.0;
        for (i, &pi) in p.iter().enumerate() {
            prob *= if mask >> i & 1 == 1 { pi } else { 1.0 - pi };
        }
        pmf[mask.count_ones() as usize] += prob;
    }
    let mu: f64 = pmf.iter().enumerate().map(|(j, w)| j as f64 * w).sum();
    let second: f64 = pmf.iter().enumerate().map(|(j, w)| (j * j) as f64 * w).sum();
    let inv1 = pmf.iter().enumerate().skip(1).map(|(j, w)| w / j as f64).sum();
    let inv2 = pmf.iter().enumerate().skip(1).map(|(j, w)| w / (j * j) as f64).sum();
    Enumerated { zeta: 1.0 - pmf[0], sigma2: second - mu * mu, mu, inv1, inv2, pmf }
}

pub fn fig3_channel() -> ChannelParams {
    ChannelParams { rician_gamma: 5.0, temporal_rho: 0.1, n0: 1.0 }
}

/// Quadratic task, K users, L=2, sigma^2=0.1, N0=1, 10 dB, step 1/(0.2 t).
pub fn fig3_training(users: usize, rounds: usize, estimator: EstimatorMode) -> TrainingConfig {
    TrainingConfig {
        task: TaskSpec::default(),
        users,
        rounds,
        policy: SamplingPolicy::UniformInvariant { p: 0.5 },
        channel: fig3_channel(),
        noise_var: 0.1,
        snr_db: vec![10.0],
        clip: 2.0,
        alpha_mode: AlphaMode::Ideal,
        estimator,
        learning_rate: LearningRate::InverseTime { strong_convexity: 0.2 },
        accountant: AccountantConfig {
            delta_local: 1e-5,
            delta_prime: DeltaPrimeRule::Fixed { value: 1e-5 },
            delta_tilde: 1e-5,
            include_n0: true,
        },
        master_seed: 2024,
    }
}

/// Sample statistics of the server estimate at a frozen model.
pub struct EstimatorSample {
    pub mean: Vec<f64>,
    pub std_err: Vec<f64>,
    pub mean_sq_norm: f64,
    pub sq_norm_std_err: f64,
}

/// Repeats one round `rounds` times at the same model, with fresh randomness each time.
pub fn sample_estimator(
    task: &TrainingTask,
    channel: ChannelParams,
    policy: &SamplingPolicy,
    noise_var: f64,
    clip: f64,
    estimator: EstimatorMode,
    w: &[f64],
    rounds: usize,
    seed: u64,
) -> EstimatorSample {
    let users = task.users();
    let d = task.dimension();
    let setup = RoundSetup {
        clip,
        noise_std: vec![noise_var.sqrt(); users],
        power: vec![1.0; users],
        alpha_mode: AlphaMode::Ideal,
        estimator,
        master_seed: seed,
        trial: 0,
    };
    let mut channel =
        FadingChannel::new(channel, users, |k| StreamKey::new(seed, 0, 0, k as u64, Purpose::FadingInit).rng()).unwrap();
    let mut model = ModelState::new(w.to_vec(), LearningRate::Constant { eta: 1.0 });
    let (mut s1, mut s2) = (vec![0.0; d], vec![0.0; d]);
    let (mut n1, mut n2) = (0.0, 0.0);
    for r in 1..=rounds {
        model.t = r;
        let out = run_round(task, &setup, policy, &mut channel, &model).unwrap();
        let mut sq = 0.0;
        for (i, g) in out.g_hat.iter().enumerate() {
            s1[i] += g;
            s2[i] += g * g;
            sq += g * g;
        }
        n1 += sq;
        n2 += sq * sq;
    }
    let n = rounds as f64;
    let mean: Vec<f64> = s1.iter().map(|x| x / n).collect();
    let std_err = s2
        .iter()
        .zip(&mean)
        .map(|(s, m)| ((s / n - m * m) * n / (n - 1.0) / n).sqrt())
        .collect();
    let mean_sq_norm = n1 / n;
    let sq_norm_std_err = ((n2 / n - mean_sq_norm * mean_sq_norm) * n / (n - 1.0) / n).sqrt();
    EstimatorSample { mean, std_err, mean_sq_norm, sq_norm_std_err }
}

/// Five users with distinct fixed points, `F(w) = |w|^2/2 - b'w` in three dimensions.
pub fn fixed_gradient_task() -> TrainingTask {
    let points = vec![
        vec![vec![0.3, -0.2, 0.5]],
        vec![vec![-0.4, 0.1, 0.2]],
        vec![vec![0.6, 0.4, -0.3]],
        vec![vec![0.0, -0.5, 0.1]],
        vec![vec![0.2, 0.3, 0.3]],
    ];
    let mut b = vec![0.0; 3];
    for u in points.iter().flatten() {
        for (bi, ui) in b.iter_mut().zip(u) {
            *bi += ui / 5.0;
        }
    }
    TrainingTask::quadratic(vec![1.0; 3], b, points, 1).unwrap()
}
