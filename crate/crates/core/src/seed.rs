//! Seed splitting.
//!
//! Every trial owns a ChaCha8 key derived from `(master_seed, trial_index)`;
//! inside a trial every consumer of randomness reads from its own ChaCha
//! stream id. Results therefore never depend on evaluation order or on the
//! number of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One round of SplitMix64.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Key of trial `trial_index` under `master_seed`.
pub fn trial_seed(master_seed: u64, trial_index: u64) -> u64 {
    splitmix64(master_seed ^ splitmix64(trial_index.wrapping_add(0x5EED)))
}

/// Stream ids used inside a trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Placement,
    Scatterers,
    Los,
    Shadowing,
    Pilots,
    /// Per-sample pilot signs when scrambling is enabled.
    PilotSigns,
    /// Channel synthesis for link `k * M + m`.
    Link(usize),
    /// Training noise at AP `m`.
    TrainingNoise(usize),
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Placement => 0,
            Stream::Scatterers => 1,
            Stream::Los => 2,
            Stream::Shadowing => 3,
            Stream::Pilots => 4,
            Stream::PilotSigns => 5,
            Stream::Link(i) => (1 << 32) | i as u64,
            Stream::TrainingNoise(m) => (2 << 32) | m as u64,
        }
    }
}

/// Factory for the per-purpose random streams of one trial.
#[derive(Debug, Clone, Copy)]
pub struct TrialSeeds {
    key: u64,
}

impl TrialSeeds {
    pub fn new(master_seed: u64, trial_index: u64) -> Self {
        Self {
            key: trial_seed(master_seed, trial_index),
        }
    }

    pub fn from_key(key: u64) -> Self {
        Self { key }
    }

    pub fn key(&self) -> u64 {
        self.key
    }

    pub fn rng(&self, stream: Stream) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.key);
        rng.set_stream(stream.id());
        rng
    }
}
