use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{domain, ensure, AirdpError, Result};
use crate::rng::{Purpose, StreamKey};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    /// `F(w) = 1/2 w'Aw - b'w` with diagonal `A`, eigenvalues evenly spaced on `[lambda, smoothness]`.
    Quadratic,
    /// L2-regularized logistic regression on two Gaussian classes.
    Logistic,
}

/// Synthetic task description; the data itself is generated from the master seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub dimension: usize,
    pub strong_convexity: f64,
    pub smoothness: f64,
    pub samples_per_user: usize,
    pub batch_size: usize,
    /// Per-point spread around the quadratic's linear term; 0 makes every point identical.
    pub data_spread: f64,
    /// Logistic only.
    pub l2_reg: f64,
    /// Logistic only: distance of each class mean from the origin.
    pub class_separation: f64,
}

impl Default for TaskSpec {
    fn default() -> Self {
        Self {
            kind: TaskKind::Quadratic,
            dimension: 30,
            strong_convexity: 0.2,
            smoothness: 0.9,
            samples_per_user: 50,
            batch_size: 10,
            data_spread: 1.0,
            l2_reg: 0.1,
            class_separation: 1.0,
        }
    }
}

impl TaskSpec {
    pub fn validate(&self) -> Result<()> {
        ensure(self.dimension >= 1, || "task dimension must be >= 1".to_string())?;
        ensure(self.samples_per_user >= 1, || "samples_per_user must be >= 1".to_string())?;
        ensure(self.batch_size >= 1, || "batch_size must be >= 1".to_string())?;
        ensure(self.data_spread >= 0.0, || "data_spread must be >= 0".to_string())?;
        match self.kind {
            TaskKind::Quadratic => {
                ensure(self.strong_convexity > 0.0 && self.smoothness >= self.strong_convexity, || {
                    format!(
                        "need 0 < strong_convexity <= smoothness, got {} and {}",
                        self.strong_convexity, self.smoothness
                    )
                })
            }
            TaskKind::Logistic => ensure(self.l2_reg > 0.0, || "logistic task needs l2_reg > 0".to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Model {
    Quadratic { diag: Vec<f64>, b: Vec<f64> },
    Logistic { l2_reg: f64 },
}

/// A strongly convex objective split into equal-size per-user shards.
#[derive(Debug, Clone)]
pub struct TrainingTask {
    model: Model,
    /// `shards[user][i]` is a feature vector.
    features: Vec<Vec<Vec<f64>>>,
    /// Logistic labels in {-1, +1}; empty for the quadratic task.
    labels: Vec<Vec<f64>>,
    batch_size: usize,
    dimension: usize,
    optimum: Vec<f64>,
    optimal_loss: f64,
}

impl TrainingTask {
    /// Generates the task's data deterministically from `master_seed`.
    pub fn generate(spec: &TaskSpec, users: usize, master_seed: u64) -> Result<Self> {
        spec.validate()?;
        ensure(users >= 1, || "number of users must be >= 1".to_string())?;
        let d = spec.dimension;
        let n = spec.samples_per_user;
        let mut rng = StreamKey::shared(master_seed, 0, 0, Purpose::TaskData).rng();
        let gauss = |rng: &mut rand_chacha::ChaCha8Rng| -> f64 { rng.sample(StandardNormal) };
        match spec.kind {
            TaskKind::Quadratic => {
                let diag: Vec<f64> = (0..d)
                    .map(|i| {
                        if d == 1 {
                            spec.strong_convexity
                        } else {
                            spec.strong_convexity + (spec.smoothness - spec.strong_convexity) * i as f64 / (d - 1) as f64
                        }
                    })
                    .collect();
                let center: Vec<f64> = (0..d).map(|_| gauss(&mut rng)).collect();
                let features: Vec<Vec<Vec<f64>>> = (0..users)
                    .map(|_| {
                        (0..n)
                            .map(|_| center.iter().map(|c| c + spec.data_spread * gauss(&mut rng)).collect())
                            .collect()
                    })
                    .collect();
                let total = (users * n) as f64;
                let mut b = vec![0.0; d];
                for u in features.iter().flatten() {
                    for (bi, ui) in b.iter_mut().zip(u) {
                        *bi += ui / total;
                    }
                }
                Self::quadratic(diag, b, features, spec.batch_size)
            }
            TaskKind::Logistic => {
                let mut features = Vec::with_capacity(users);
                let mut labels = Vec::with_capacity(users);
                let sep = spec.class_separation / (d as f64).sqrt();
                for _ in 0..users {
                    let mut fu = Vec::with_capacity(n);
                    let mut lu = Vec::with_capacity(n);
                    for _ in 0..n {
                        let v = if rng.random::<bool>() { 1.0 } else { -1.0 };
                        fu.push((0..d).map(|_| v * sep + gauss(&mut rng)).collect());
                        lu.push(v);
                    }
                    features.push(fu);
                    labels.push(lu);
                }
                Self::logistic(features, labels, spec.l2_reg, spec.batch_size)
            }
        }
    }

    /// Quadratic task with explicit diagonal curvature, linear term and per-user points.
    ///
    /// Each point `u` contributes `1/2 w'Aw - u'w`; `b` must be the mean of all points
    /// for the closed-form optimum to be exact.
    pub fn quadratic(diag: Vec<f64>, b: Vec<f64>, features: Vec<Vec<Vec<f64>>>, batch_size: usize) -> Result<Self> {
        let d = diag.len();
        ensure(d >= 1 && diag.iter().all(|a| *a > 0.0), || "curvature must be positive".to_string())?;
        if b.len() != d {
            return Err(AirdpError::Shape { expected: d, actual: b.len() });
        }
        check_shards(&features, d)?;
        let optimum: Vec<f64> = b.iter().zip(&diag).map(|(bi, ai)| bi / ai).collect();
        let mut task = Self {
            model: Model::Quadratic { diag, b },
            features,
            labels: Vec::new(),
            batch_size,
            dimension: d,
            optimum,
            optimal_loss: 0.0,
        };
        task.optimal_loss = task.loss(&task.optimum.clone());
        Ok(task)
    }

    /// Every user holds the single point `b`, so every local gradient is the exact `Aw - b`.
    pub fn quadratic_exact(diag: Vec<f64>, b: Vec<f64>, users: usize) -> Result<Self> {
        let features = vec![vec![b.clone()]; users];
        Self::quadratic(diag, b, features, 1)
    }

    pub fn logistic(features: Vec<Vec<Vec<f64>>>, labels: Vec<Vec<f64>>, l2_reg: f64, batch_size: usize) -> Result<Self> {
        ensure(l2_reg > 0.0, || "logistic task needs l2_reg > 0".to_string())?;
        let d = features.first().and_then(|s| s.first()).map(Vec::len).unwrap_or(0);
        ensure(d >= 1, || "logistic task needs data".to_string())?;
        check_shards(&features, d)?;
        for (f, l) in features.iter().zip(&labels) {
            if f.len() != l.len() {
                return Err(AirdpError::Shape { expected: f.len(), actual: l.len() });
            }
        }
        let mut task = Self {
            model: Model::Logistic { l2_reg },
            features,
            labels,
            batch_size,
            dimension: d,
            optimum: vec![0.0; d],
            optimal_loss: 0.0,
        };
        task.optimum = task.solve_reference()?;
        task.optimal_loss = task.loss(&task.optimum.clone());
        Ok(task)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn users(&self) -> usize {
        self.features.len()
    }

    pub fn shard_len(&self, user: usize) -> usize {
        self.features[user].len()
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn optimum(&self) -> &[f64] {
        &self.optimum
    }

    /// Global objective `F(w)` over all users' data.
    pub fn loss(&self, w: &[f64]) -> f64 {
        match &self.model {
            Model::Quadratic { diag, b } => diag
                .iter()
                .zip(b)
                .zip(w)
                .map(|((a, bi), wi)| 0.5 * a * wi * wi - bi * wi)
                .sum(),
            Model::Logistic { l2_reg } => {
                let n: usize = self.features.iter().map(Vec::len).sum();
                let data: f64 = self
                    .features
                    .iter()
                    .flatten()
                    .zip(self.labels.iter().flatten())
                    .map(|(u, v)| softplus(-v * dot(u, w)))
                    .sum();
                data / n as f64 + 0.5 * l2_reg * dot(w, w)
            }
        }
    }

    /// `F(w) - F(w*)`; closed form for the quadratic task.
    pub fn gap(&self, w: &[f64]) -> f64 {
        match &self.model {
            Model::Quadratic { diag, .. } => diag
                .iter()
                .zip(w.iter().zip(&self.optimum))
                .map(|(a, (wi, si))| 0.5 * a * (wi - si) * (wi - si))
                .sum(),
            Model::Logistic { .. } => self.loss(w) - self.optimal_loss,
        }
    }

    /// Minibatch-average gradient of `user`'s objective at `w`, regularizer included.
    pub fn local_gradient(&self, user: usize, w: &[f64], batch: &[usize]) -> Result<Vec<f64>> {
        if batch.is_empty() {
            return domain("minibatch is empty");
        }
        if w.len() != self.dimension {
            return Err(AirdpError::Shape { expected: self.dimension, actual: w.len() });
        }
        let shard = self.features.get(user).ok_or_else(|| AirdpError::Domain(format!("no user {user}")))?;
        if let Some(&bad) = batch.iter().find(|&&i| i >= shard.len()) {
            return domain(format!("batch index {bad} outside shard of size {}", shard.len()));
        }
        let scale = 1.0 / batch.len() as f64;
        match &self.model {
            Model::Quadratic { diag, .. } => {
                let mut g: Vec<f64> = diag.iter().zip(w).map(|(a, wi)| a * wi).collect();
                for &i in batch {
                    for (gi, ui) in g.iter_mut().zip(&shard[i]) {
                        *gi -= ui * scale;
                    }
                }
                Ok(g)
            }
            Model::Logistic { l2_reg } => {
                let mut g: Vec<f64> = w.iter().map(|wi| l2_reg * wi).collect();
                for &i in batch {
                    let v = self.labels[user][i];
                    let coef = -v * sigmoid(-v * dot(&shard[i], w)) * scale;
                    for (gi, ui) in g.iter_mut().zip(&shard[i]) {
                        *gi += coef * ui;
                    }
                }
                Ok(g)
            }
        }
    }

    fn full_gradient(&self, w: &[f64]) -> Vec<f64> {
        let n: usize = self.features.iter().map(Vec::len).sum();
        let mut g = vec![0.0; self.dimension];
        for user in 0..self.users() {
            let all: Vec<usize> = (0..self.shard_len(user)).collect();
            let gu = self.local_gradient(user, w, &all).expect("full shard batch is valid");
            let weight = all.len() as f64 / n as f64;
            for (gi, x) in g.iter_mut().zip(gu) {
                *gi += weight * x;
            }
        }
        g
    }

    /// Gradient descent to machine precision for the logistic reference optimum.
    fn solve_reference(&self) -> Result<Vec<f64>> {
        let Model::Logistic { l2_reg } = &self.model else {
            return Ok(self.optimum.clone());
        };
        let max_sq = self.features.iter().flatten().map(|u| dot(u, u)).fold(0.0, f64::max);
        let step = 1.0 / (0.25 * max_sq + l2_reg);
        let mut w = vec![0.0; self.dimension];
        for _ in 0..200_000 {
            let g = self.full_gradient(&w);
            if dot(&g, &g).sqrt() < 1e-12 {
                return Ok(w);
            }
            for (wi, gi) in w.iter_mut().zip(&g) {
                *wi -= step * gi;
            }
        }
        log::warn!("logistic reference solve stopped before reaching 1e-12 gradient norm");
        Ok(w)
    }
}

fn check_shards(features: &[Vec<Vec<f64>>], d: usize) -> Result<()> {
    ensure(!features.is_empty(), || "task needs at least one user".to_string())?;
    let n = features[0].len();
    ensure(n >= 1, || "every shard needs at least one point".to_string())?;
    for shard in features {
        if shard.len() != n {
            return Err(AirdpError::Shape { expected: n, actual: shard.len() });
        }
        for u in shard {
            if u.len() != d {
                return Err(AirdpError::Shape { expected: d, actual: u.len() });
            }
        }
    }
    Ok(())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}
