use std::sync::Arc;

use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::output::Table;
use crate::channel::FadingChannel;
use crate::conv_bounds::{
    bound_known, bound_optimal_p, bound_unknown, ConvergenceParams, MomentSource, ParticipationSchedule,
    ProblemConstants,
};
use crate::dp_analysis::{
    beta_from_delta, central_epsilon_uniform, comparator_epsilon, compose_heterogeneous, compose_homogeneous,
    local_epsilon, optimal_sampling_probability, Comparator, MechanismParams, PrivacyBudget,
};
use crate::error::{AirdpError, Result};
use crate::fedsgd_sim::{EstimatorMode, TaskKind, Trainer, TrainingTask, TrainingTrace};
use crate::rng::{Purpose, StreamKey};
use crate::sampling::SamplingPolicy;

/// Result of one subcommand: named tables and whether every row was infeasible.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub tables: Vec<(String, Table)>,
    pub infeasible_only: bool,
}

fn mechanism(cfg: &ExperimentConfig, lipschitz: f64) -> Result<MechanismParams> {
    let p = &cfg.privacy;
    MechanismParams::new(lipschitz, p.noise_var.sqrt(), p.delta_local, p.n0)
        .map_err(|e| AirdpError::Config(e.to_string()))
}

fn users_of(k: u64) -> Result<usize> {
    if k == 0 {
        return Err(AirdpError::Config("number of users must be >= 1".into()));
    }
    usize::try_from(k).map_err(|_| AirdpError::Config(format!("{k} users does not fit in memory indices")))
}

/// Maps an infeasible-concentration error to `None`, passing other errors through.
fn feasible<T>(r: Result<T>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(AirdpError::InfeasibleConcentration { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0 && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Central epsilon against K for over-the-air aggregation with and without sampling,
/// next to the orthogonal-transmission comparators.
pub fn privacy_sweep(cfg: &ExperimentConfig) -> Result<Report> {
    let delta_prime = cfg.privacy.fixed_delta_prime()?;
    let params = mechanism(cfg, cfg.privacy.lipschitz)?;
    let mut table = Table::new(&[
        "K",
        "p_star",
        "eps_wireless_sampling",
        "eps_wireless",
        "eps_orth_sampling",
        "eps_orth",
        "status",
    ]);
    let mut infeasible = 0;
    let mut fit_sampling = Vec::new();
    let mut fit_full = Vec::new();
    let [lo, hi] = cfg.privacy_sweep.slope_range;
    for &k in &cfg.privacy_sweep.users {
        let users = users_of(k)?;
        let p_star = optimal_sampling_probability(users, delta_prime)?;
        let sampled = feasible(central_epsilon_uniform(p_star, users, &params, delta_prime))?;
        let full = feasible(comparator_epsilon(users, &params, delta_prime, Comparator::WirelessNoSampling))?;
        let orth_s = comparator_epsilon(users, &params, delta_prime, Comparator::OrthogonalWithSampling)?;
        let orth = comparator_epsilon(users, &params, delta_prime, Comparator::OrthogonalNoSampling)?;
        let ok = sampled.is_some() && full.is_some();
        if !ok {
            infeasible += 1;
        }
        let eps_s = sampled.map_or(f64::INFINITY, |b| b.epsilon);
        let eps_f = full.unwrap_or(f64::INFINITY);
        let kf = k as f64;
        if kf >= lo && kf <= hi {
            fit_sampling.push((kf, eps_s));
            fit_full.push((kf, eps_f));
        }
        table.push(vec![
            k.into(),
            p_star.into(),
            eps_s.into(),
            eps_f.into(),
            orth_s.into(),
            orth.into(),
            if ok { "ok" } else { "infeasible" }.into(),
        ]);
    }
    for (name, pts) in [("eps_wireless_sampling", &fit_sampling), ("eps_wireless", &fit_full)] {
        let slope = log_log_slope(pts).map_or("nan".to_string(), crate::expcli::output::format_float);
        table.footer.push(format!("log-log slope of {name} over K in [{lo}, {hi}]: {slope}"));
    }
    let infeasible_only = !table.rows.is_empty() && infeasible == table.rows.len();
    Ok(Report { tables: vec![("privacy_sweep".into(), table)], infeasible_only })
}

/// Total central privacy after T identical rounds at a fixed uniform probability.
///
/// `eps_total` uses the closed-form homogeneous composition; the tanh form of the
/// heterogeneous composer is reported alongside.
pub fn composition_sweep(cfg: &ExperimentConfig) -> Result<Report> {
    let delta_prime = cfg.privacy.fixed_delta_prime()?;
    let params = mechanism(cfg, cfg.privacy.lipschitz)?;
    let delta_tilde = cfg.privacy.delta_tilde;
    let mut table = Table::new(&[
        "K",
        "T",
        "p",
        "eps_round",
        "delta_round",
        "eps_total",
        "delta_total",
        "eps_total_heterogeneous",
        "status",
    ]);
    let mut infeasible = 0;
    for &k in &cfg.compose.users {
        let users = users_of(k)?;
        let p = match cfg.compose.p {
            Some(p) => p,
            None => optimal_sampling_probability(users, delta_prime)?,
        };
        let round = feasible(central_epsilon_uniform(p, users, &params, delta_prime))?;
        for &t in &cfg.compose.rounds {
            if t == 0 {
                return Err(AirdpError::Config("number of rounds must be >= 1".into()));
            }
            let row = match round {
                Some(b) => {
                    let total = compose_homogeneous(b.epsilon, b.delta, t, delta_tilde)?;
                    let het = compose_heterogeneous(&vec![b.epsilon; t], &vec![b.delta; t], delta_tilde)?;
                    (b, total, het.epsilon, "ok")
                }
                None => {
                    infeasible += 1;
                    let inf = PrivacyBudget { epsilon: f64::INFINITY, delta: 1.0 };
                    (inf, inf, f64::INFINITY, "infeasible")
                }
            };
            table.push(vec![
                k.into(),
                t.into(),
                p.into(),
                row.0.epsilon.into(),
                row.0.delta.into(),
                row.1.epsilon.into(),
                row.1.delta.into(),
                row.2.into(),
                row.3.into(),
            ]);
        }
    }
    let infeasible_only = !table.rows.is_empty() && infeasible == table.rows.len();
    Ok(Report { tables: vec![("compose".into(), table)], infeasible_only })
}

/// Mean expected participant count of a channel-aware policy over simulated fading.
pub fn channel_aware_mean_participation(cfg: &ExperimentConfig, h_threshold: f64) -> Result<f64> {
    let s = &cfg.local_dp_table;
    if s.mc_rounds == 0 {
        return Err(AirdpError::Config("mc_rounds must be >= 1".into()));
    }
    let policy = SamplingPolicy::ChannelAware { h_threshold };
    policy.validate(s.users, s.mc_rounds)?;
    let seed = cfg.seed;
    let mut channel = FadingChannel::new(s.channel, s.users, |k| {
        StreamKey::new(seed, 0, 0, k as u64, Purpose::FadingInit).rng()
    })?;
    let mut total = 0.0;
    for t in 1..=s.mc_rounds {
        let gains = channel.advance(|k| StreamKey::new(seed, 0, t as u64, k as u64, Purpose::Fading).rng());
        let p = policy.resolve(s.users, t - 1, Some(gains))?;
        total += p.iter().sum::<f64>();
    }
    Ok(total / s.mc_rounds as f64)
}

/// Per-user local epsilon including receiver noise, for uniform and channel-aware sampling.
pub fn local_dp_table(cfg: &ExperimentConfig) -> Result<Report> {
    let s = &cfg.local_dp_table;
    let users = s.users;
    if users < 2 {
        return Err(AirdpError::Config("local table needs at least 2 users".into()));
    }
    let k = users as f64;
    let mut table = Table::new(&["lipschitz", "policy", "p", "mean_participants", "delta_prime", "kappa", "eps_local", "kappa_clamped"]);
    let mut rows: Vec<(&str, f64, f64)> = Vec::new();
    for &p in &s.p {
        if !(p > 0.0 && p <= 1.0) {
            return Err(AirdpError::Config(format!("table probability must lie in (0, 1], got {p}")));
        }
        rows.push(("uniform", p, k * p));
    }
    if let Some(h) = s.h_threshold {
        let mu = channel_aware_mean_participation(cfg, h)?;
        rows.push(("channel_aware", mu / k, mu));
    }
    for &lip in &s.lipschitz {
        let params = mechanism(cfg, lip)?;
        for &(policy, p, mu) in &rows {
            let delta_prime = cfg.privacy.delta_prime.resolve(mu, users);
            // every other user participates with the same mean probability
            let kappa = if delta_prime < 1.0 {
                mu * (k - 1.0) / k - beta_from_delta(delta_prime, users)? * k
            } else {
                f64::NEG_INFINITY
            };
            let local = local_epsilon(&params, kappa, cfg.privacy.include_n0)?;
            table.push(vec![
                lip.into(),
                policy.into(),
                p.into(),
                mu.into(),
                delta_prime.into(),
                local.kappa.into(),
                local.epsilon.into(),
                if local.kappa_clamped { "true" } else { "false" }.into(),
            ]);
        }
    }
    Ok(Report { tables: vec![("local_dp_table".into(), table)], infeasible_only: false })
}

/// Convergence bounds against T for the configured uniform probability.
pub fn bound_curves(cfg: &ExperimentConfig) -> Result<Report> {
    let s = &cfg.bounds;
    let mut table = Table::new(&[
        "T",
        "bound_unknown",
        "bound_known_taylor",
        "bound_known_exact",
        "rel_gap",
        "p_star",
        "bound_optimal_p",
        "optimal_p_fallback",
    ]);
    for &t in &s.rounds {
        let params = ConvergenceParams {
            constants: s.constants,
            schedule: ParticipationSchedule::uniform(s.users, s.p, t),
        };
        let unknown = bound_unknown(&params)?;
        let taylor = bound_known(&params, MomentSource::Taylor)?;
        let exact = bound_known(&params, MomentSource::Exact)?;
        let opt = bound_optimal_p(&s.constants, t, s.delta_prime, s.users)?;
        table.push(vec![
            t.into(),
            unknown.into(),
            taylor.into(),
            exact.into(),
            ((unknown - taylor) / unknown).into(),
            opt.p_star.into(),
            opt.value.into(),
            if opt.fallback { "true" } else { "false" }.into(),
        ]);
    }
    Ok(Report { tables: vec![("bounds".into(), table)], infeasible_only: false })
}

fn mode_name(mode: EstimatorMode) -> &'static str {
    match mode {
        EstimatorMode::Unknown => "unknown",
        EstimatorMode::Known => "known",
    }
}

/// Mean and normal-approximation 95% confidence half-width.
pub fn mean_ci(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, 1.959_963_984_540_054 * (var / n).sqrt())
}

/// Runs every configured trial in one estimator mode, in parallel, in trial order.
pub fn run_trials(cfg: &ExperimentConfig, mode: EstimatorMode, task: &Arc<TrainingTask>) -> Result<Vec<TrainingTrace>> {
    let mut tc = cfg.train.config.clone();
    tc.estimator = mode;
    (0..cfg.train.trials as u64)
        .into_par_iter()
        .map(|trial| Trainer::with_task(&tc, trial, Arc::clone(task))?.run())
        .collect()
}

/// Bound constants implied by a quadratic training configuration.
fn training_constants(cfg: &ExperimentConfig) -> Option<ProblemConstants> {
    let tc = &cfg.train.config;
    (tc.task.kind == TaskKind::Quadratic).then_some(ProblemConstants {
        strong_convexity: tc.task.strong_convexity,
        smoothness: tc.task.smoothness,
        lipschitz: tc.clip,
        dimension: tc.task.dimension,
        noise_var_max: tc.noise_var,
        n0: tc.channel.n0,
    })
}

fn trace_table(trace: &TrainingTrace) -> Table {
    let mut table = Table::new(&crate::fedsgd_sim::TraceRow::COLUMNS);
    for r in &trace.rows {
        table.push(vec![
            r.t.into(),
            r.loss.into(),
            r.gap.into(),
            r.eps_local_max.into(),
            r.eps_central.into(),
            r.eps_central_total.into(),
            r.delta_central_total.into(),
            r.participants.into(),
            r.effective_noise_var.into(),
        ]);
    }
    table.footer.push(format!("skipped rounds: {}", trace.skipped_rounds));
    table
}

/// Monte-Carlo training in each estimator mode; a summary at the checkpoints plus one trace per trial.
pub fn train(cfg: &ExperimentConfig, with_traces: bool) -> Result<Report> {
    let s = &cfg.train;
    if s.trials == 0 {
        return Err(AirdpError::Config("trials must be >= 1".into()));
    }
    s.config.validate().map_err(|e| AirdpError::Config(e.to_string()))?;
    let rounds = s.config.rounds;
    if let Some(&bad) = s.checkpoints.iter().find(|&&t| t == 0 || t > rounds) {
        return Err(AirdpError::Config(format!("checkpoint {bad} outside 1..={rounds}")));
    }
    let task = Arc::new(TrainingTask::generate(&s.config.task, s.config.users, s.config.master_seed)?);
    let constants = training_constants(cfg);
    let uniform_p = match s.config.policy {
        SamplingPolicy::UniformInvariant { p } => Some(p),
        _ => None,
    };
    let mut summary = Table::new(&[
        "mode",
        "t",
        "mean_gap",
        "ci_half_width",
        "bound_unknown",
        "bound_known",
        "mean_participants",
        "mean_eps_central_total",
        "skipped_rounds",
    ]);
    let mut tables = Vec::new();
    for &mode in &s.modes {
        let traces = run_trials(cfg, mode, &task)?;
        for &t in &s.checkpoints {
            let gaps: Vec<f64> = traces.iter().map(|tr| tr.rows[t - 1].gap).collect();
            let (mean, half) = mean_ci(&gaps);
            let (bu, bk) = match (constants, uniform_p) {
                (Some(c), Some(p)) => {
                    let params = ConvergenceParams {
                        constants: c,
                        schedule: ParticipationSchedule::uniform(s.config.users, p, t),
                    };
                    (bound_unknown(&params)?, bound_known(&params, MomentSource::Exact)?)
                }
                _ => (f64::NAN, f64::NAN),
            };
            let n = traces.len() as f64;
            let parts = traces.iter().map(|tr| tr.rows[..t].iter().map(|r| r.participants as f64).sum::<f64>() / t as f64).sum::<f64>() / n;
            let eps = traces.iter().map(|tr| tr.rows[t - 1].eps_central_total).sum::<f64>() / n;
            let skipped: usize = traces.iter().map(|tr| tr.skipped_rounds).sum();
            summary.push(vec![
                mode_name(mode).into(),
                t.into(),
                mean.into(),
                half.into(),
                bu.into(),
                bk.into(),
                parts.into(),
                eps.into(),
                skipped.into(),
            ]);
        }
        if with_traces {
            for (trial, trace) in traces.iter().enumerate() {
                tables.push((format!("trace_{}_{trial:04}", mode_name(mode)), trace_table(trace)));
            }
        }
    }
    tables.insert(0, ("summary".into(), summary));
    Ok(Report { tables, infeasible_only: false })
}
