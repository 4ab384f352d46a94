use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::channel::ChannelParams;
use crate::conv_bounds::ProblemConstants;
use crate::error::{AirdpError, Result};
use crate::fedsgd_sim::{
    AccountantConfig, AlphaMode, DeltaPrimeRule, EstimatorMode, LearningRate, TaskSpec, TrainingConfig,
};
use crate::sampling::SamplingPolicy;

const PRESETS: [(&str, &str); 5] = [
    ("fig2", include_str!("../../presets/fig2.json")),
    ("fig3_k20", include_str!("../../presets/fig3_k20.json")),
    ("fig3_k200", include_str!("../../presets/fig3_k200.json")),
    ("table2", include_str!("../../presets/table2.json")),
    ("table3", include_str!("../../presets/table3.json")),
];

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

pub fn preset_json(name: &str) -> Result<Value> {
    let (_, text) = PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| AirdpError::Config(format!("unknown preset {name:?}; known: {}", preset_names().join(", "))))?;
    Ok(serde_json::from_str(text)?)
}

/// Recursively overlays `top` onto `base`; objects merge key by key, anything else replaces.
pub fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Per-user mechanism and accountant settings shared by the analytic experiments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrivacySection {
    pub lipschitz: f64,
    /// Perturbation noise variance `sigma^2`.
    pub noise_var: f64,
    pub n0: f64,
    pub delta_local: f64,
    pub delta_prime: DeltaPrimeRule,
    pub delta_tilde: f64,
    pub include_n0: bool,
}

impl Default for PrivacySection {
    fn default() -> Self {
        Self {
            lipschitz: 1.0,
            noise_var: 1.0,
            n0: 1.0,
            delta_local: 1e-5,
            delta_prime: DeltaPrimeRule::Fixed { value: 1e-5 },
            delta_tilde: 1e-5,
            include_n0: true,
        }
    }
}

impl PrivacySection {
    pub fn fixed_delta_prime(&self) -> Result<f64> {
        match self.delta_prime {
            DeltaPrimeRule::Fixed { value } => Ok(value),
            DeltaPrimeRule::Adaptive { .. } => {
                Err(AirdpError::Config("this experiment needs a fixed delta_prime".into()))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub users: Vec<u64>,
    /// Range of K used to fit the log-log slope of the central epsilon.
    pub slope_range: [f64; 2],
}

impl Default for SweepSection {
    fn default() -> Self {
        Self { users: vec![100, 1_000, 10_000, 100_000, 1_000_000, 10_000_000], slope_range: [1e5, 1e7] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComposeSection {
    pub users: Vec<u64>,
    pub rounds: Vec<usize>,
    /// Uniform sampling probability; the privacy-optimal value when absent.
    pub p: Option<f64>,
}

impl Default for ComposeSection {
    fn default() -> Self {
        Self { users: vec![1_000, 10_000, 100_000], rounds: vec![10, 50, 100], p: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TableSection {
    pub users: usize,
    pub lipschitz: Vec<f64>,
    pub p: Vec<f64>,
    /// Adds a channel-aware row per lipschitz value when set.
    pub h_threshold: Option<f64>,
    pub channel: ChannelParams,
    /// Fading rounds simulated to estimate the channel-aware mean participation.
    pub mc_rounds: usize,
}

impl Default for TableSection {
    fn default() -> Self {
        Self {
            users: 200,
            lipschitz: vec![1.0],
            p: vec![0.3, 0.9],
            h_threshold: None,
            channel: ChannelParams { rician_gamma: 5.0, temporal_rho: 0.1, n0: 1.0 },
            mc_rounds: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsSection {
    pub users: usize,
    pub p: f64,
    pub rounds: Vec<usize>,
    pub constants: ProblemConstants,
    /// Used for the privacy-optimal probability column.
    pub delta_prime: f64,
}

impl Default for BoundsSection {
    fn default() -> Self {
        Self {
            users: 20,
            p: 0.5,
            rounds: vec![100, 1000, 4000],
            constants: ProblemConstants {
                strong_convexity: 0.2,
                smoothness: 0.9,
                lipschitz: 2.0,
                dimension: 30,
                noise_var_max: 0.1,
                n0: 1.0,
            },
            delta_prime: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub trials: usize,
    /// Rounds at which the summary reports gaps against the bounds.
    pub checkpoints: Vec<usize>,
    pub modes: Vec<EstimatorMode>,
    /// `master_seed` is overwritten by the top-level seed.
    pub config: TrainingConfig,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            trials: 10,
            checkpoints: vec![100, 1000],
            modes: vec![EstimatorMode::Unknown, EstimatorMode::Known],
            config: TrainingConfig {
                task: TaskSpec::default(),
                users: 20,
                rounds: 1000,
                policy: SamplingPolicy::UniformInvariant { p: 0.5 },
                channel: ChannelParams { rician_gamma: 5.0, temporal_rho: 0.1, n0: 1.0 },
                noise_var: 0.1,
                snr_db: vec![10.0],
                clip: 2.0,
                alpha_mode: AlphaMode::Ideal,
                estimator: EstimatorMode::Unknown,
                learning_rate: LearningRate::InverseTime { strong_convexity: 0.2 },
                accountant: AccountantConfig::default(),
                master_seed: 0,
            },
        }
    }
}

/// Full experiment description; every section has defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    pub privacy: PrivacySection,
    pub privacy_sweep: SweepSection,
    pub compose: ComposeSection,
    pub local_dp_table: TableSection,
    pub bounds: BoundsSection,
    pub train: TrainSection,
}

impl ExperimentConfig {
    /// Preset (if any), overlaid by the user's JSON (if any), then the seed override.
    pub fn resolve(preset: Option<&str>, user: Option<Value>, seed: Option<u64>) -> Result<Self> {
        let mut value = match preset {
            Some(name) => preset_json(name)?,
            None => Value::Object(Default::default()),
        };
        if let Some(user) = user {
            if !user.is_object() {
                return Err(AirdpError::Config("config file must hold a JSON object".into()));
            }
            merge(&mut value, user);
        }
        let mut cfg: ExperimentConfig =
            serde_json::from_value(value).map_err(|e| AirdpError::Config(format!("invalid config: {e}")))?;
        if let Some(seed) = seed {
            cfg.seed = seed;
        }
        cfg.train.config.master_seed = cfg.seed;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}
