use std::sync::{Arc, Once};

use serde::{Deserialize, Serialize};

use super::round::{run_round, AlphaMode, EstimatorMode, LearningRate, ModelState, RoundOutcome, RoundSetup};
use super::task::{TaskSpec, TrainingTask};
use crate::channel::{snr_to_power, ChannelParams, FadingChannel};
use crate::dp_analysis::{
    adaptive_delta_prime, beta_from_delta, central_epsilon_nonuniform, local_epsilon, HeterogeneousComposer,
    MechanismParams, PrivacyBudget,
};
use crate::error::{ensure, AirdpError, Result};
use crate::rng::{Purpose, StreamKey};
use crate::sampling::{participant_stats, SamplingPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DeltaPrimeRule {
    Fixed { value: f64 },
    /// `2 exp(-2 mu^2 / K) + floor`, recomputed from each round's probabilities.
    Adaptive { floor: f64 },
}

impl DeltaPrimeRule {
    pub fn resolve(&self, mu: f64, users: usize) -> f64 {
        match *self {
            DeltaPrimeRule::Fixed { value } => value,
            DeltaPrimeRule::Adaptive { floor } => adaptive_delta_prime(mu, users, floor),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let v = match *self {
            DeltaPrimeRule::Fixed { value } => value,
            DeltaPrimeRule::Adaptive { floor } => floor,
        };
        ensure(v > 0.0 && v < 1.0, || format!("delta' parameter must lie in (0, 1), got {v}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccountantConfig {
    pub delta_local: f64,
    pub delta_prime: DeltaPrimeRule,
    pub delta_tilde: f64,
    /// Count the receiver noise in the local bound.
    pub include_n0: bool,
}

impl Default for AccountantConfig {
    fn default() -> Self {
        Self {
            delta_local: 1e-5,
            delta_prime: DeltaPrimeRule::Fixed { value: 1e-5 },
            delta_tilde: 1e-5,
            include_n0: true,
        }
    }
}

static NEGATIVE_KAPPA: Once = Once::new();

/// Privacy spent in one round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundPrivacy {
    pub eps_local_max: f64,
    pub central: PrivacyBudget,
    pub total: PrivacyBudget,
}

/// Per-round and running privacy for a sequence of participation vectors.
///
/// A round whose delta' cannot concentrate the participant count gets an
/// infinite epsilon, which then propagates to the running total.
#[derive(Debug, Clone)]
pub struct PrivacyAccountant {
    params: MechanismParams,
    config: AccountantConfig,
    composer: HeterogeneousComposer,
}

impl PrivacyAccountant {
    pub fn new(params: MechanismParams, config: AccountantConfig) -> Result<Self> {
        params.validate()?;
        config.delta_prime.validate()?;
        Ok(Self { params, config, composer: HeterogeneousComposer::new(config.delta_tilde)? })
    }

    pub fn record(&mut self, p: &[f64]) -> Result<RoundPrivacy> {
        let users = p.len();
        let mu: f64 = p.iter().sum();
        let max_p = p.iter().cloned().fold(0.0, f64::max);
        let delta_prime = self.config.delta_prime.resolve(mu, users);
        let (eps_local_max, central) = if delta_prime >= 1.0 {
            (self.params.c(), PrivacyBudget::new(f64::INFINITY, 1.0)?)
        } else {
            let beta_k = beta_from_delta(delta_prime, users)? * users as f64;
            let kappa = mu - max_p - beta_k;
            if kappa < 0.0 {
                NEGATIVE_KAPPA.call_once(|| {
                    log::warn!("kappa = {kappa} < 0 in a training round: no amplification credit (reported once)")
                });
            }
            let local = local_epsilon(&self.params, kappa.max(0.0), self.config.include_n0)?;
            let central = match central_epsilon_nonuniform(p, &self.params, delta_prime) {
                Ok(b) => b,
                Err(AirdpError::InfeasibleConcentration { .. }) => {
                    let delta = delta_prime + max_p * self.params.delta_local / (1.0 - delta_prime);
                    PrivacyBudget::new(f64::INFINITY, delta)?
                }
                Err(e) => return Err(e),
            };
            (local.epsilon, central)
        };
        self.composer.push(central)?;
        Ok(RoundPrivacy { eps_local_max, central, total: self.composer.total() })
    }
}

/// Everything needed to reproduce one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub task: TaskSpec,
    pub users: usize,
    pub rounds: usize,
    pub policy: SamplingPolicy,
    pub channel: ChannelParams,
    /// Per-user perturbation noise variance.
    pub noise_var: f64,
    /// Users are split into equal contiguous groups, one SNR (dB) per group.
    pub snr_db: Vec<f64>,
    /// Clipping radius; also the sensitivity bound used by the accountant.
    pub clip: f64,
    pub alpha_mode: AlphaMode,
    pub estimator: EstimatorMode,
    pub learning_rate: LearningRate,
    pub accountant: AccountantConfig,
    #[serde(default)]
    pub master_seed: u64,
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        self.task.validate()?;
        ensure(self.users >= 1, || "users must be >= 1".to_string())?;
        ensure(self.rounds >= 1, || "rounds must be >= 1".to_string())?;
        self.policy.validate(self.users, self.rounds)?;
        self.channel.validate()?;
        ensure(self.noise_var >= 0.0, || format!("noise variance must be >= 0, got {}", self.noise_var))?;
        ensure(!self.snr_db.is_empty() && self.snr_db.len() <= self.users, || {
            format!("need between 1 and {} SNR groups, got {}", self.users, self.snr_db.len())
        })?;
        ensure(self.clip > 0.0, || format!("clip must be > 0, got {}", self.clip))?;
        ensure(self.task.batch_size <= self.task.samples_per_user, || {
            "batch_size must not exceed samples_per_user".to_string()
        })?;
        self.learning_rate.validate()?;
        self.accountant.delta_prime.validate()?;
        ensure(self.accountant.delta_tilde > 0.0 && self.accountant.delta_tilde <= 1.0, || {
            "delta_tilde must lie in (0, 1]".to_string()
        })
    }

    /// Per-user power budgets from the SNR groups.
    pub fn powers(&self) -> Result<Vec<f64>> {
        let groups = self.snr_db.len();
        (0..self.users)
            .map(|k| snr_to_power(self.snr_db[k * groups / self.users], self.task.dimension, self.channel.n0))
            .collect()
    }

    pub fn mechanism(&self) -> Result<MechanismParams> {
        MechanismParams::new(self.clip, self.noise_var.sqrt(), self.accountant.delta_local, self.channel.n0)
    }
}

/// One row of a training trace, recorded after the round's update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub t: usize,
    pub loss: f64,
    pub gap: f64,
    pub eps_local_max: f64,
    pub eps_central: f64,
    pub eps_central_total: f64,
    pub delta_central_total: f64,
    pub participants: usize,
    pub effective_noise_var: f64,
}

impl TraceRow {
    pub const COLUMNS: [&'static str; 9] = [
        "t",
        "loss",
        "gap",
        "eps_local_max",
        "eps_central",
        "eps_central_total",
        "delta_central_total",
        "participants",
        "effective_noise_var",
    ];
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingTrace {
    pub rows: Vec<TraceRow>,
    /// Rounds where the known-set estimator saw nobody and made no update.
    pub skipped_rounds: usize,
}

impl TrainingTrace {
    pub fn final_gap(&self) -> Option<f64> {
        self.rows.last().map(|r| r.gap)
    }

    /// Gap after round `t` (from 1).
    pub fn gap_at(&self, t: usize) -> Option<f64> {
        t.checked_sub(1).and_then(|i| self.rows.get(i)).map(|r| r.gap)
    }
}

/// A single training run that can be advanced round by round.
#[derive(Debug, Clone)]
pub struct Trainer {
    config: TrainingConfig,
    task: Arc<TrainingTask>,
    setup: RoundSetup,
    channel: FadingChannel,
    model: ModelState,
    /// `None` without perturbation noise: no finite privacy guarantee exists.
    accountant: Option<PrivacyAccountant>,
    trace: TrainingTrace,
}

impl Trainer {
    pub fn new(config: &TrainingConfig, trial: u64) -> Result<Self> {
        config.validate()?;
        let task = Arc::new(TrainingTask::generate(&config.task, config.users, config.master_seed)?);
        Self::with_task(config, trial, task)
    }

    /// Reuses an already generated task, e.g. across trials of the same configuration.
    pub fn with_task(config: &TrainingConfig, trial: u64, task: Arc<TrainingTask>) -> Result<Self> {
        config.validate()?;
        if task.users() != config.users {
            return Err(AirdpError::Shape { expected: config.users, actual: task.users() });
        }
        let setup = RoundSetup {
            clip: config.clip,
            noise_std: vec![config.noise_var.sqrt(); config.users],
            power: config.powers()?,
            alpha_mode: config.alpha_mode,
            estimator: config.estimator,
            master_seed: config.master_seed,
            trial,
        };
        setup.validate(config.users)?;
        let seed = config.master_seed;
        let channel = FadingChannel::new(config.channel, config.users, |k| {
            StreamKey::new(seed, trial, 0, k as u64, Purpose::FadingInit).rng()
        })?;
        let model = ModelState::new(vec![0.0; task.dimension()], config.learning_rate);
        let accountant = if config.noise_var > 0.0 {
            Some(PrivacyAccountant::new(config.mechanism()?, config.accountant)?)
        } else {
            None
        };
        Ok(Self { config: config.clone(), task, setup, channel, model, accountant, trace: TrainingTrace::default() })
    }

    pub fn is_done(&self) -> bool {
        self.trace.rows.len() >= self.config.rounds
    }

    pub fn model(&self) -> &ModelState {
        &self.model
    }

    pub fn task(&self) -> &TrainingTask {
        &self.task
    }

    pub fn trace(&self) -> &TrainingTrace {
        &self.trace
    }

    /// Runs one round and records it; returns the round outcome and its trace row.
    pub fn step(&mut self) -> Result<(RoundOutcome, TraceRow)> {
        let round = self.model.t;
        let wrap = |source: AirdpError| AirdpError::Trial { trial: self.setup.trial, round, source: Box::new(source) };
        if self.is_done() {
            return Err(wrap(AirdpError::Domain("all configured rounds have run".into())));
        }
        let outcome =
            run_round(&self.task, &self.setup, &self.config.policy, &mut self.channel, &self.model).map_err(wrap)?;
        self.model.apply(&outcome.g_hat).map_err(wrap)?;
        let privacy = match self.accountant.as_mut() {
            Some(acc) => acc.record(&outcome.probabilities).map_err(wrap)?,
            None => {
                let none = PrivacyBudget { epsilon: f64::INFINITY, delta: 1.0 };
                RoundPrivacy { eps_local_max: f64::INFINITY, central: none, total: none }
            }
        };
        if outcome.skipped {
            self.trace.skipped_rounds += 1;
        }
        let row = TraceRow {
            t: round,
            loss: self.task.loss(&self.model.w),
            gap: self.task.gap(&self.model.w),
            eps_local_max: privacy.eps_local_max,
            eps_central: privacy.central.epsilon,
            eps_central_total: privacy.total.epsilon,
            delta_central_total: privacy.total.delta,
            participants: outcome.participants.len(),
            effective_noise_var: outcome.effective_noise_var,
        };
        self.trace.rows.push(row);
        Ok((outcome, row))
    }

    pub fn run(mut self) -> Result<TrainingTrace> {
        while !self.is_done() {
            self.step()?;
        }
        Ok(self.trace)
    }
}

/// Runs trial `trial` of `config` to completion.
pub fn run_training(config: &TrainingConfig, trial: u64) -> Result<TrainingTrace> {
    Trainer::new(config, trial)?.run()
}

/// Mean participation statistics of a policy, for reporting alongside traces.
pub fn mean_expected_participants(outcomes: &[RoundOutcome]) -> f64 {
    if outcomes.is_empty() {
        return 0.0;
    }
    outcomes.iter().map(|o| participant_stats(&o.probabilities).mu).sum::<f64>() / outcomes.len() as f64
}
