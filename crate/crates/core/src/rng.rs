//! Named, reproducible randomness streams.
//!
//! One root seed feeds every source of randomness in a run. Each source draws
//! from its own ChaCha stream keyed by the root seed and selected by
//! `(label, index)`, so turning one source on or off never shifts the draws
//! seen by another.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Registered randomness sources.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamLabel {
    Channel,
    Noise,
    Data,
    Policy,
}

impl StreamLabel {
    pub const ALL: [StreamLabel; 4] = [
        StreamLabel::Channel,
        StreamLabel::Noise,
        StreamLabel::Data,
        StreamLabel::Policy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StreamLabel::Channel => "channel",
            StreamLabel::Noise => "noise",
            StreamLabel::Data => "data",
            StreamLabel::Policy => "policy",
        }
    }

    fn tag(self) -> u64 {
        match self {
            StreamLabel::Channel => 1,
            StreamLabel::Noise => 2,
            StreamLabel::Data => 3,
            StreamLabel::Policy => 4,
        }
    }
}

impl fmt::Display for StreamLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StreamLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StreamLabel::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown random stream label `{s}`")))
    }
}

/// Root of all randomness in a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStreams {
    seed: u64,
}

// Index space per label: the top 8 bits of the ChaCha stream id carry the label.
const INDEX_BITS: u32 = 56;

impl RngStreams {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Stream for `label` at `index` (an iteration, or a worker id for data).
    pub fn stream(&self, label: StreamLabel, index: u64) -> ChaCha8Rng {
        debug_assert!(index < (1 << INDEX_BITS));
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream((label.tag() << INDEX_BITS) | (index & ((1 << INDEX_BITS) - 1)));
        rng
    }

    /// String-keyed variant of [`RngStreams::stream`]; rejects unregistered labels.
    pub fn derive_stream(&self, label: &str, index: u64) -> crate::Result<ChaCha8Rng> {
        Ok(self.stream(label.parse()?, index))
    }
}
