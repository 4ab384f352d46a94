//! Deterministic random streams.
//!
//! Every random draw in a simulation comes from a stream identified by
//! `(master_seed, trial, round, user, purpose)`. Streams are derived by
//! hashing that key, so the draws a user sees in a round never depend on
//! how many other draws happened before, on thread scheduling, or on which
//! estimator the trial runs with.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. Part of the stream key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Sampling = 1,
    Fading = 2,
    Minibatch = 3,
    Perturbation = 4,
    ReceiverNoise = 5,
    TaskData = 6,
    FadingInit = 7,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub master_seed: u64,
    pub trial: u64,
    pub round: u64,
    pub user: u64,
    pub purpose: Purpose,
}

impl StreamKey {
    pub fn new(master_seed: u64, trial: u64, round: u64, user: u64, purpose: Purpose) -> Self {
        Self { master_seed, trial, round, user, purpose }
    }

    /// Stream not tied to a particular user (receiver noise, sampling).
    pub fn shared(master_seed: u64, trial: u64, round: u64, purpose: Purpose) -> Self {
        Self::new(master_seed, trial, round, u64::MAX, purpose)
    }

    pub fn seed(&self) -> u64 {
        let mut h = splitmix64(self.master_seed);
        for word in [self.trial, self.round, self.user, self.purpose as u64] {
            h = splitmix64(h ^ word);
        }
        h
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed())
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}
