//! Deterministic RNG substreams for reproducible parallel Monte Carlo.
//!
//! Every random draw in the library comes from a [`SeedStream`]: a ChaCha8
//! generator keyed by the experiment's master seed and positioned on a
//! dedicated stream. Stream tags encode (trial, purpose, user), so any trial
//! can be regenerated in isolation and results are invariant to worker count
//! and execution order.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// What a stream is consumed for within one trial. Keeping purposes on
/// separate streams means adding draws to one consumer never perturbs another.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StreamPurpose {
    /// Channel realizations.
    Channel = 0,
    /// CSI-feedback codebooks (quantizing the own channel toward the BS).
    CsiCodebook = 1,
    /// Precoder-selection codebooks.
    PrecoderCodebook = 2,
    /// D2D exchange codebooks and emulated quantization errors.
    ExchangeCodebook = 3,
    /// Test-channel noise of the ideal distortion-rate quantizer.
    QuantizerNoise = 4,
    /// Scratch streams for tests and oracles.
    Aux = 5,
}

/// Trial slot reserved for per-experiment streams (objects built once and
/// shared by every trial, e.g. large exchange codebooks).
pub const EXPERIMENT_SLOT: u64 = (1 << 47) - 1;

/// Packs (trial, purpose, user) into a ChaCha stream tag.
/// Layout: trial in the high bits, purpose byte, user byte.
pub fn stream_tag(trial: u64, purpose: StreamPurpose, user: usize) -> u64 {
    debug_assert!(trial <= EXPERIMENT_SLOT, "trial index exceeds stream space");
    debug_assert!(user < 256, "user index exceeds stream space");
    (trial << 16) | ((purpose as u64) << 8) | user as u64
}

/// A seeded, tagged RNG stream. The tag identifies the substream so that
/// outputs (e.g. channel realizations) can record their provenance.
#[derive(Clone, Debug)]
pub struct SeedStream {
    tag: u64,
    rng: ChaCha8Rng,
}

impl SeedStream {
    /// Stream for an explicit tag.
    pub fn new(master_seed: u64, tag: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(tag);
        SeedStream { tag, rng }
    }

    /// Stream for one (trial, purpose, user) slot.
    pub fn for_trial(master_seed: u64, trial: u64, purpose: StreamPurpose, user: usize) -> Self {
        Self::new(master_seed, stream_tag(trial, purpose, user))
    }

    /// Stream for a per-experiment object shared across trials.
    pub fn for_experiment(master_seed: u64, purpose: StreamPurpose, user: usize) -> Self {
        Self::new(master_seed, stream_tag(EXPERIMENT_SLOT, purpose, user))
    }

    pub fn tag(&self) -> u64 {
        self.tag
    }
}

impl RngCore for SeedStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.rng.try_fill_bytes(dest)
    }
}
