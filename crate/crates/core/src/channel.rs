//! Block flat-fading Rician channel, power control and the Gaussian MAC.
//!
//! The diffuse component follows a stationary AR(1) complex Gaussian process
//! `s_t = rho s_{t-1} + sqrt(1 - rho^2) w_t`, `w_t ~ CN(0, 1)`, and the gain is
//! `h = |sqrt(G/(G+1)) + sqrt(1/(G+1)) s_t|`, so `E[h^2] = 1`. One gain per
//! user per round, reused across all `d` channel uses of that round.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, AirdpError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// LOS-to-scatter power ratio.
    pub rician_gamma: f64,
    /// AR(1) correlation of the diffuse component across rounds.
    pub temporal_rho: f64,
    /// Receiver noise variance per channel use.
    pub n0: f64,
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        ensure(self.rician_gamma > 0.0, || format!("rician gamma must be > 0, got {}", self.rician_gamma))?;
        ensure((0.0..1.0).contains(&self.temporal_rho), || {
            format!("temporal rho must lie in [0, 1), got {}", self.temporal_rho)
        })?;
        ensure(self.n0 >= 0.0, || format!("N0 must be >= 0, got {}", self.n0))
    }
}

/// Standard circularly-symmetric complex Gaussian, `E|w|^2 = 1`.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Gain for a given diffuse state.
pub fn rician_gain(state: Complex64, gamma: f64) -> f64 {
    let los = (gamma / (gamma + 1.0)).sqrt();
    let nlos = (1.0 / (gamma + 1.0)).sqrt();
    (Complex64::new(los, 0.0) + state * nlos).norm()
}

/// Advances the diffuse state by one round and returns the new gain and state.
pub fn fading_step<R: Rng + ?Sized>(state: Complex64, gamma: f64, rho: f64, rng: &mut R) -> (f64, Complex64) {
    let next = state * rho + complex_normal(rng) * (1.0 - rho * rho).sqrt();
    (rician_gain(next, gamma), next)
}

/// Per-user fading states for a whole population.
#[derive(Debug, Clone)]
pub struct FadingChannel {
    params: ChannelParams,
    states: Vec<Complex64>,
    gains: Vec<f64>,
}

impl FadingChannel {
    /// Starts every user from the stationary distribution; `init_rng(k)` yields user k's stream.
    pub fn new<R: Rng, F: FnMut(usize) -> R>(params: ChannelParams, users: usize, mut init_rng: F) -> Result<Self> {
        params.validate()?;
        let states: Vec<Complex64> = (0..users).map(|k| complex_normal(&mut init_rng(k))).collect();
        let gains = states.iter().map(|&s| rician_gain(s, params.rician_gamma)).collect();
        Ok(Self { params, states, gains })
    }

    /// Advances every user; `step_rng(k)` yields user k's stream for this round.
    pub fn advance<R: Rng, F: FnMut(usize) -> R>(&mut self, mut step_rng: F) -> &[f64] {
        for (k, (state, gain)) in self.states.iter_mut().zip(self.gains.iter_mut()).enumerate() {
            let (h, next) = fading_step(*state, self.params.rician_gamma, self.params.temporal_rho, &mut step_rng(k));
            *state = next;
            *gain = h;
        }
        &self.gains
    }

    pub fn gains(&self) -> &[f64] {
        &self.gains
    }

    pub fn params(&self) -> &ChannelParams {
        &self.params
    }
}

/// Transmit power budget from `SNR = P / (d N0)`.
pub fn snr_to_power(snr_db: f64, dimension: usize, n0: f64) -> Result<f64> {
    ensure(dimension >= 1, || "dimension must be >= 1".to_string())?;
    ensure(n0 >= 0.0, || format!("N0 must be >= 0, got {n0}"))?;
    Ok(10f64.powf(snr_db / 10.0) * dimension as f64 * n0)
}

/// Channel-inversion scaling `1/h`.
pub fn inversion_alpha(h: f64) -> Result<f64> {
    ensure(h > 0.0, || format!("channel gain must be > 0 for inversion, got {h}"))?;
    Ok(1.0 / h)
}

/// Power-constrained scaling `min(1/h, sqrt(P / (|g|^2 + d sigma^2)))`.
pub fn empirical_alpha(h: f64, power: f64, grad_sq_norm: f64, dimension: usize, sigma2: f64) -> Result<f64> {
    ensure(power >= 0.0 && grad_sq_norm >= 0.0 && sigma2 >= 0.0, || {
        "power, gradient norm and noise variance must be >= 0".to_string()
    })?;
    let inv = inversion_alpha(h)?;
    if power == 0.0 {
        return Ok(0.0);
    }
    let energy = grad_sq_norm + dimension as f64 * sigma2;
    if energy == 0.0 {
        return Ok(inv);
    }
    Ok(inv.min((power / energy).sqrt()))
}

/// `y = sum_k h_k x_k + m`, `m ~ N(0, N0 I)`.
pub fn mac_superpose<R: Rng + ?Sized>(
    signals: &[Vec<f64>],
    gains: &[f64],
    dimension: usize,
    n0: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if signals.len() != gains.len() {
        return Err(AirdpError::Shape { expected: signals.len(), actual: gains.len() });
    }
    ensure(n0 >= 0.0, || format!("N0 must be >= 0, got {n0}"))?;
    let mut y = vec![0.0; dimension];
    for (x, &h) in signals.iter().zip(gains) {
        if x.len() != dimension {
            return Err(AirdpError::Shape { expected: dimension, actual: x.len() });
        }
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi += h * xi;
        }
    }
    if n0 > 0.0 {
        let sd = n0.sqrt();
        for yi in y.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *yi += sd * z;
        }
    }
    Ok(y)
}
