use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::task::{dot, TrainingTask};
use crate::channel::{empirical_alpha, inversion_alpha, mac_superpose, FadingChannel};
use crate::error::{domain, ensure, AirdpError, Result};
use crate::rng::{Purpose, StreamKey};
use crate::sampling::{participant_stats, sample_participants, SamplingPolicy};

/// What the server assumes about the participant set when forming the estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorMode {
    /// Divides by the expected participant count.
    Unknown,
    /// Divides by the realized count, corrected for the empty-set probability.
    Known,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaMode {
    /// Pure channel inversion `1/h`, as assumed by the analysis.
    Ideal,
    /// Inversion capped by the per-user power budget.
    Empirical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearningRate {
    /// `1 / (lambda t)` with rounds counted from 1.
    InverseTime { strong_convexity: f64 },
    Constant { eta: f64 },
}

impl LearningRate {
    pub fn at(&self, t: usize) -> f64 {
        match *self {
            LearningRate::InverseTime { strong_convexity } => 1.0 / (strong_convexity * t.max(1) as f64),
            LearningRate::Constant { eta } => eta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let v = match *self {
            LearningRate::InverseTime { strong_convexity } => strong_convexity,
            LearningRate::Constant { eta } => eta,
        };
        ensure(v > 0.0 && v.is_finite(), || format!("learning rate parameter must be > 0, got {v}"))
    }
}

/// Scales `g` onto the ball of radius `lipschitz` if it lies outside.
pub fn clip_gradient(g: &[f64], lipschitz: f64) -> Vec<f64> {
    let norm = dot(g, g).sqrt();
    if norm <= lipschitz || norm == 0.0 {
        g.to_vec()
    } else {
        let s = lipschitz / norm;
        g.iter().map(|x| x * s).collect()
    }
}

/// `alpha (g + n)` with `n ~ N(0, sigma^2 I)`.
pub fn perturb_and_scale<R: Rng + ?Sized>(g: &[f64], sigma: f64, alpha: f64, rng: &mut R) -> Result<Vec<f64>> {
    ensure(sigma >= 0.0, || format!("noise std must be >= 0, got {sigma}"))?;
    Ok(g.iter()
        .map(|x| {
            let n: f64 = rng.sample(StandardNormal);
            alpha * (x + sigma * n)
        })
        .collect())
}

/// `y / mu`.
pub fn estimate_unknown(y: &[f64], mu: f64) -> Result<Vec<f64>> {
    ensure(mu > 0.0, || format!("expected participant count must be > 0, got {mu}"))?;
    Ok(y.iter().map(|x| x / mu).collect())
}

/// `y / (zeta |K|)`, or a zero update with the skipped flag set when nobody participated.
pub fn estimate_known(y: &[f64], count: usize, zeta: f64) -> Result<(Vec<f64>, bool)> {
    ensure(zeta > 0.0 && zeta <= 1.0, || format!("nonempty probability must lie in (0, 1], got {zeta}"))?;
    if count == 0 {
        return Ok((vec![0.0; y.len()], true));
    }
    let s = 1.0 / (zeta * count as f64);
    Ok((y.iter().map(|x| x * s).collect(), false))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub w: Vec<f64>,
    /// Index (from 1) of the next round to run.
    pub t: usize,
    pub rate: LearningRate,
}

impl ModelState {
    pub fn new(w: Vec<f64>, rate: LearningRate) -> Self {
        Self { w, t: 1, rate }
    }

    /// `w <- w - eta_t g_hat` and advances the round counter.
    pub fn apply(&mut self, g_hat: &[f64]) -> Result<()> {
        if g_hat.len() != self.w.len() {
            return Err(AirdpError::Shape { expected: self.w.len(), actual: g_hat.len() });
        }
        let eta = self.rate.at(self.t);
        for (wi, gi) in self.w.iter_mut().zip(g_hat) {
            *wi -= eta * gi;
        }
        self.t += 1;
        Ok(())
    }
}

/// Per-user radio and privacy settings shared by every round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundSetup {
    pub clip: f64,
    pub noise_std: Vec<f64>,
    pub power: Vec<f64>,
    pub alpha_mode: AlphaMode,
    pub estimator: EstimatorMode,
    pub master_seed: u64,
    pub trial: u64,
}

impl RoundSetup {
    pub fn validate(&self, users: usize) -> Result<()> {
        ensure(self.clip > 0.0, || format!("clipping radius must be > 0, got {}", self.clip))?;
        for v in [&self.noise_std, &self.power] {
            if v.len() != users {
                return Err(AirdpError::Shape { expected: users, actual: v.len() });
            }
        }
        ensure(self.noise_std.iter().all(|s| *s >= 0.0), || "noise std must be >= 0".to_string())?;
        ensure(self.power.iter().all(|p| *p >= 0.0), || "power must be >= 0".to_string())
    }

    fn key(&self, round: usize, user: usize, purpose: Purpose) -> StreamKey {
        StreamKey::new(self.master_seed, self.trial, round as u64, user as u64, purpose)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome {
    /// Round index (from 1).
    pub round: usize,
    pub probabilities: Vec<f64>,
    pub participants: Vec<usize>,
    /// Gains of the participants, in participant order.
    pub gains: Vec<f64>,
    pub alphas: Vec<f64>,
    pub received: Vec<f64>,
    pub g_hat: Vec<f64>,
    /// Per-coordinate variance of the aggregate noise `sum h^2 alpha^2 sigma^2 + N0`.
    pub effective_noise_var: f64,
    /// Known-set mode with nobody participating.
    pub skipped: bool,
}

/// Fading advance, sampling, local computation, MAC superposition and estimation for one round.
///
/// Does not update the model; call [`ModelState::apply`] with `g_hat`.
pub fn run_round(
    task: &TrainingTask,
    setup: &RoundSetup,
    policy: &SamplingPolicy,
    channel: &mut FadingChannel,
    model: &ModelState,
) -> Result<RoundOutcome> {
    let users = task.users();
    let round = model.t;
    let d = task.dimension();
    let all_gains = channel.advance(|k| setup.key(round, k, Purpose::Fading).rng()).to_vec();
    let probabilities = policy.resolve(users, round - 1, Some(&all_gains))?;
    let participants = sample_participants(&probabilities, &mut StreamKey::shared(setup.master_seed, setup.trial, round as u64, Purpose::Sampling).rng());
    let n0 = channel.params().n0;

    let mut gains = Vec::with_capacity(participants.len());
    let mut alphas = Vec::with_capacity(participants.len());
    let mut signals = Vec::with_capacity(participants.len());
    let mut effective_noise_var = n0;
    let batch = task.batch_size();
    for &k in &participants {
        let shard = task.shard_len(k);
        if batch > shard {
            return domain(format!("batch size {batch} exceeds shard size {shard}"));
        }
        let idx = index::sample(&mut setup.key(round, k, Purpose::Minibatch).rng(), shard, batch).into_vec();
        let g = clip_gradient(&task.local_gradient(k, &model.w, &idx)?, setup.clip);
        let h = all_gains[k];
        let sigma = setup.noise_std[k];
        let alpha = match setup.alpha_mode {
            AlphaMode::Ideal => inversion_alpha(h)?,
            AlphaMode::Empirical => empirical_alpha(h, setup.power[k], dot(&g, &g), d, sigma * sigma)?,
        };
        signals.push(perturb_and_scale(&g, sigma, alpha, &mut setup.key(round, k, Purpose::Perturbation).rng())?);
        effective_noise_var += (h * alpha * sigma).powi(2);
        gains.push(h);
        alphas.push(alpha);
    }
    let mut noise_rng = StreamKey::shared(setup.master_seed, setup.trial, round as u64, Purpose::ReceiverNoise).rng();
    let received = mac_superpose(&signals, &gains, d, n0, &mut noise_rng)?;

    let stats = participant_stats(&probabilities);
    let (g_hat, skipped) = match setup.estimator {
        EstimatorMode::Unknown => (estimate_unknown(&received, stats.mu)?, false),
        EstimatorMode::Known => estimate_known(&received, participants.len(), stats.zeta)?,
    };
    Ok(RoundOutcome {
        round,
        probabilities,
        participants,
        gains,
        alphas,
        received,
        g_hat,
        effective_noise_var,
        skipped,
    })
}
