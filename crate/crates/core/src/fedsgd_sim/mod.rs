//! Over-the-air federated SGD simulator with user sampling and a running privacy accountant.

mod round;
mod task;
mod training;

pub use round::{
    clip_gradient, estimate_known, estimate_unknown, perturb_and_scale, run_round, AlphaMode, EstimatorMode,
    LearningRate, ModelState, RoundOutcome, RoundSetup,
};
pub use task::{TaskKind, TaskSpec, TrainingTask};
pub use training::{
    mean_expected_participants, run_training, AccountantConfig, DeltaPrimeRule, PrivacyAccountant, RoundPrivacy,
    TraceRow, Trainer, TrainingConfig, TrainingTrace,
};
