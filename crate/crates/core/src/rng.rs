//! Counter-based, splittable random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 stream whose 256-bit
//! key is the literal tuple `(seed, point, trial, domain tag)` and whose
//! 64-bit stream id names the purpose of the draw (design, noise, masks, ...).
//! Because the key is the tuple itself rather than a hash of it, distinct
//! `(seed, point, trial)` triples can never collide, and a trial's draws do
//! not depend on which thread runs it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

const DOMAIN_TAG: u64 = u64::from_le_bytes(*b"mskpls01");

/// Position of one trial inside a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct TrialId {
    pub point: u64,
    pub trial: u64,
}

impl TrialId {
    pub fn new(point: u64, trial: u64) -> Self {
        Self { point, trial }
    }
}

/// Full key of a trial's random streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TrialKey {
    pub seed: u64,
    pub id: TrialId,
}

impl TrialKey {
    pub fn new(seed: u64, id: TrialId) -> Self {
        Self { seed, id }
    }

    pub fn root(seed: u64) -> Self {
        Self::new(seed, TrialId::default())
    }

    /// The raw ChaCha key bytes.
    pub fn key_bytes(&self) -> [u8; 32] {
        let mut key = [0u8; 32];
        key[0..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&self.id.point.to_le_bytes());
        key[16..24].copy_from_slice(&self.id.trial.to_le_bytes());
        key[24..32].copy_from_slice(&DOMAIN_TAG.to_le_bytes());
        key
    }

    pub fn stream(&self, stream: Stream) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.key_bytes());
        rng.set_stream(stream.id());
        rng
    }
}

/// Named substreams. Ids are fixed; never renumber them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    Design,
    Noise,
    MaskX,
    MaskY,
    Directions,
    Split,
    /// Start vectors for iterative eigen-solvers.
    Start,
    /// Anything seeded directly by a user-facing `seed` argument.
    User,
}

impl Stream {
    pub fn id(self) -> u64 {
        match self {
            Stream::Design => 1,
            Stream::Noise => 2,
            Stream::MaskX => 3,
            Stream::MaskY => 4,
            Stream::Directions => 5,
            Stream::Split => 6,
            Stream::Start => 7,
            Stream::User => 8,
        }
    }
}
