//! C ABI for the airdp accountant, bounds, simulator and experiment runner.
//!
//! Every function returns an [`AirdpStatus`]; on failure a message is kept per
//! thread and can be read with [`airdp_last_error_message`]. Outputs are written
//! through caller-provided pointers only on success. Strings returned by the
//! library must be released with [`airdp_string_free`], trainers with
//! [`airdp_trainer_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use airdp::conv_bounds::{bound_known, bound_unknown, ConvergenceParams, MomentSource, ParticipationSchedule, ProblemConstants};
use airdp::dp_analysis::{
    central_epsilon_nonuniform, central_epsilon_uniform, compose_homogeneous, local_epsilon,
    optimal_sampling_probability, MechanismParams, PrivacyBudget,
};
use airdp::expcli::{self, Command, ExperimentConfig};
use airdp::fedsgd_sim::{Trainer, TrainingConfig};
use airdp::AirdpError;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AirdpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// The participant count cannot be concentrated at the requested delta'.
    Infeasible = 3,
    Config = 4,
    /// The trainer has already run every configured round.
    Done = 5,
    Internal = 6,
}

/// Per-user mechanism parameters.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct AirdpMechanism {
    pub lipschitz: f64,
    pub sigma_min: f64,
    pub delta_local: f64,
    pub n0: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct AirdpBudget {
    pub epsilon: f64,
    pub delta: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct AirdpProblem {
    pub strong_convexity: f64,
    pub smoothness: f64,
    pub lipschitz: f64,
    pub dimension: usize,
    pub noise_var_max: f64,
    pub n0: f64,
}

/// One training-trace row.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct AirdpTraceRow {
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

/// Opaque training run.
pub struct AirdpTrainer {
    inner: Trainer,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn status_of(err: &AirdpError) -> AirdpStatus {
    match err {
        AirdpError::InfeasibleConcentration { .. } => AirdpStatus::Infeasible,
        AirdpError::Config(_) | AirdpError::Json(_) => AirdpStatus::Config,
        AirdpError::Io(_) => AirdpStatus::Internal,
        AirdpError::Trial { source, .. } => status_of(source),
        _ => AirdpStatus::InvalidArgument,
    }
}

fn guard(f: impl FnOnce() -> Result<(), AirdpStatus>) -> AirdpStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AirdpStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic");
            AirdpStatus::Internal
        }
    }
}

fn check<T>(r: airdp::Result<T>) -> Result<T, AirdpStatus> {
    r.map_err(|e| {
        set_error(e.to_string());
        status_of(&e)
    })
}

fn out<'a, T>(p: *mut T) -> Result<&'a mut T, AirdpStatus> {
    // SAFETY: caller promises a valid, aligned, writable pointer or null.
    unsafe { p.as_mut() }.ok_or_else(|| {
        set_error("null output pointer");
        AirdpStatus::NullPointer
    })
}

fn c_str<'a>(p: *const c_char) -> Result<Option<&'a str>, AirdpStatus> {
    if p.is_null() {
        return Ok(None);
    }
    // SAFETY: caller promises a NUL-terminated string.
    unsafe { CStr::from_ptr(p) }.to_str().map(Some).map_err(|_| {
        set_error("string is not valid UTF-8");
        AirdpStatus::InvalidArgument
    })
}

fn mechanism(m: *const AirdpMechanism) -> Result<MechanismParams, AirdpStatus> {
    // SAFETY: caller promises a valid pointer or null.
    let m = unsafe { m.as_ref() }.ok_or_else(|| {
        set_error("null mechanism pointer");
        AirdpStatus::NullPointer
    })?;
    check(MechanismParams::new(m.lipschitz, m.sigma_min, m.delta_local, m.n0))
}

fn write_budget(dst: *mut AirdpBudget, b: PrivacyBudget) -> Result<(), AirdpStatus> {
    *out(dst)? = AirdpBudget { epsilon: b.epsilon, delta: b.delta };
    Ok(())
}

/// Message of the last failed call on this thread, or NULL. Valid until the next call.
#[no_mangle]
pub extern "C" fn airdp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn airdp_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}

/// Central budget of one round when all `users` sample with probability `p`.
#[no_mangle]
pub extern "C" fn airdp_central_epsilon_uniform(
    p: f64,
    users: usize,
    mech: *const AirdpMechanism,
    delta_prime: f64,
    result: *mut AirdpBudget,
) -> AirdpStatus {
    guard(|| {
        let m = mechanism(mech)?;
        write_budget(result, check(central_epsilon_uniform(p, users, &m, delta_prime))?)
    })
}

/// Central budget of one round for per-user probabilities `p[0..users]`.
#[no_mangle]
pub extern "C" fn airdp_central_epsilon_nonuniform(
    p: *const f64,
    users: usize,
    mech: *const AirdpMechanism,
    delta_prime: f64,
    result: *mut AirdpBudget,
) -> AirdpStatus {
    guard(|| {
        if p.is_null() {
            set_error("null probability array");
            return Err(AirdpStatus::NullPointer);
        }
        // SAFETY: caller promises `users` readable doubles.
        let probs = unsafe { std::slice::from_raw_parts(p, users) };
        let m = mechanism(mech)?;
        write_budget(result, check(central_epsilon_nonuniform(probs, &m, delta_prime))?)
    })
}

/// Per-user local epsilon for a given amplification count `kappa`; negative kappa is clamped to 0.
#[no_mangle]
pub extern "C" fn airdp_local_epsilon(
    mech: *const AirdpMechanism,
    kappa: f64,
    include_n0: bool,
    epsilon: *mut f64,
) -> AirdpStatus {
    guard(|| {
        let m = mechanism(mech)?;
        *out(epsilon)? = check(local_epsilon(&m, kappa, include_n0))?.epsilon;
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn airdp_optimal_sampling_probability(users: usize, delta_prime: f64, p: *mut f64) -> AirdpStatus {
    guard(|| {
        *out(p)? = check(optimal_sampling_probability(users, delta_prime))?;
        Ok(())
    })
}

/// Composition of `rounds` identical per-round budgets.
#[no_mangle]
pub extern "C" fn airdp_compose_homogeneous(
    round: AirdpBudget,
    rounds: usize,
    delta_tilde: f64,
    result: *mut AirdpBudget,
) -> AirdpStatus {
    guard(|| write_budget(result, check(compose_homogeneous(round.epsilon, round.delta, rounds, delta_tilde))?))
}

/// Convergence bound for uniform participation; `known_set` selects the
/// known-participant estimator (exact inverse moments).
#[no_mangle]
pub extern "C" fn airdp_convergence_bound(
    problem: *const AirdpProblem,
    users: usize,
    p: f64,
    rounds: usize,
    known_set: bool,
    bound: *mut f64,
) -> AirdpStatus {
    guard(|| {
        // SAFETY: caller promises a valid pointer or null.
        let c = unsafe { problem.as_ref() }.ok_or_else(|| {
            set_error("null problem pointer");
            AirdpStatus::NullPointer
        })?;
        let params = ConvergenceParams {
            constants: ProblemConstants {
                strong_convexity: c.strong_convexity,
                smoothness: c.smoothness,
                lipschitz: c.lipschitz,
                dimension: c.dimension,
                noise_var_max: c.noise_var_max,
                n0: c.n0,
            },
            schedule: ParticipationSchedule::uniform(users, p, rounds),
        };
        if !(p > 0.0 && p <= 1.0) {
            set_error(format!("sampling probability must lie in (0, 1], got {p}"));
            return Err(AirdpStatus::InvalidArgument);
        }
        *out(bound)? = if known_set {
            check(bound_known(&params, MomentSource::Exact))?
        } else {
            check(bound_unknown(&params))?
        };
        Ok(())
    })
}

/// Creates a trainer from a JSON training configuration for trial `trial`.
#[no_mangle]
pub extern "C" fn airdp_trainer_new(config_json: *const c_char, trial: u64, trainer: *mut *mut AirdpTrainer) -> AirdpStatus {
    guard(|| {
        let slot = out(trainer)?;
        let text = c_str(config_json)?.ok_or_else(|| {
            set_error("null config string");
            AirdpStatus::NullPointer
        })?;
        let cfg: TrainingConfig = serde_json::from_str(text).map_err(|e| {
            set_error(format!("invalid training config: {e}"));
            AirdpStatus::Config
        })?;
        let inner = check(Trainer::new(&cfg, trial))?;
        *slot = Box::into_raw(Box::new(AirdpTrainer { inner }));
        Ok(())
    })
}

/// Runs one round. Returns `AIRDP_STATUS_DONE` once every configured round has run.
#[no_mangle]
pub extern "C" fn airdp_trainer_step(trainer: *mut AirdpTrainer, row: *mut AirdpTraceRow) -> AirdpStatus {
    guard(|| {
        let t = out(trainer)?;
        let dst = out(row)?;
        if t.inner.is_done() {
            return Err(AirdpStatus::Done);
        }
        let (_, r) = check(t.inner.step())?;
        *dst = AirdpTraceRow {
            t: r.t,
            loss: r.loss,
            gap: r.gap,
            eps_local_max: r.eps_local_max,
            eps_central: r.eps_central,
            eps_central_total: r.eps_central_total,
            delta_central_total: r.delta_central_total,
            participants: r.participants,
            effective_noise_var: r.effective_noise_var,
        };
        Ok(())
    })
}

/// Copies the current model into `weights[0..len]`; `needed` receives the model dimension.
/// With a too-small buffer nothing is copied and `AIRDP_STATUS_INVALID_ARGUMENT` is returned.
#[no_mangle]
pub extern "C" fn airdp_trainer_weights(
    trainer: *const AirdpTrainer,
    weights: *mut f64,
    len: usize,
    needed: *mut usize,
) -> AirdpStatus {
    guard(|| {
        // SAFETY: caller promises a valid trainer pointer or null.
        let t = unsafe { trainer.as_ref() }.ok_or_else(|| {
            set_error("null trainer");
            AirdpStatus::NullPointer
        })?;
        let w = &t.inner.model().w;
        *out(needed)? = w.len();
        if len < w.len() || weights.is_null() {
            set_error(format!("weight buffer holds {len} values, model has {}", w.len()));
            return Err(AirdpStatus::InvalidArgument);
        }
        // SAFETY: caller promises `len >= w.len()` writable doubles.
        unsafe { ptr::copy_nonoverlapping(w.as_ptr(), weights, w.len()) };
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn airdp_trainer_free(trainer: *mut AirdpTrainer) {
    if !trainer.is_null() {
        // SAFETY: pointer came from `airdp_trainer_new` and is freed once.
        drop(unsafe { Box::from_raw(trainer) });
    }
}

fn command_of(name: &str) -> Option<Command> {
    Some(match name {
        "privacy-sweep" => Command::PrivacySweep,
        "compose" => Command::Compose,
        "local-dp-table" => Command::LocalDpTable,
        "bounds" => Command::Bounds,
        "train" => Command::Train,
        _ => return None,
    })
}

/// Runs a CLI subcommand in memory and returns its primary CSV table.
///
/// `config_json` and `preset` may each be NULL, but not both. The CSV is
/// returned in `*csv` and must be released with [`airdp_string_free`].
/// An all-infeasible sweep still yields the CSV but returns `AIRDP_STATUS_INFEASIBLE`.
#[no_mangle]
pub extern "C" fn airdp_run_experiment(
    command: *const c_char,
    config_json: *const c_char,
    preset: *const c_char,
    seed: *const u64,
    csv: *mut *mut c_char,
) -> AirdpStatus {
    guard(|| {
        let slot = out(csv)?;
        let name = c_str(command)?.unwrap_or_default();
        let cmd = command_of(name).ok_or_else(|| {
            set_error(format!("unknown command {name:?}"));
            AirdpStatus::InvalidArgument
        })?;
        let user = match c_str(config_json)? {
            Some(text) => Some(serde_json::from_str(text).map_err(|e| {
                set_error(format!("invalid config JSON: {e}"));
                AirdpStatus::Config
            })?),
            None => None,
        };
        let preset = c_str(preset)?;
        if user.is_none() && preset.is_none() {
            set_error("need a config, a preset or both");
            return Err(AirdpStatus::Config);
        }
        // SAFETY: caller promises a valid pointer or null.
        let seed = unsafe { seed.as_ref() }.copied();
        let cfg = check(ExperimentConfig::resolve(preset, user, seed))?;
        let report = check(expcli::execute(cmd, &cfg, false))?;
        let mut buf = Vec::new();
        if let Some((_, table)) = report.tables.first() {
            check(table.write_csv(&mut buf, &cfg.to_json()))?;
        }
        *slot = CString::new(buf).map_err(|_| AirdpStatus::Internal)?.into_raw();
        if report.infeasible_only {
            set_error("every configuration in the sweep was infeasible");
            return Err(AirdpStatus::Infeasible);
        }
        Ok(())
    })
}

/// Releases a string returned by this library. NULL is ignored.
#[no_mangle]
pub extern "C" fn airdp_string_free(s: *mut c_char) {
    if !s.is_null() {
        // SAFETY: pointer came from `CString::into_raw` in this library.
        drop(unsafe { CString::from_raw(s) });
    }
}
