//! Seeded random substreams.
//!
//! Every random decision in a session draws from a ChaCha8 stream keyed by
//! `(seed, subsystem)` and positioned at a fixed offset per round. Changing
//! how many values one subsystem consumes (for example enabling an
//! eavesdropper) therefore never shifts the draws of any other subsystem or
//! of any later round.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Words reserved per round in each substream.
const ROUND_STRIDE_WORDS: u128 = 1 << 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Substream {
    Source,
    Channel,
    AliceDetector,
    BobDetector,
    Choices,
    Guesses,
    Eve,
    Estimator,
}

impl Substream {
    fn id(self) -> u64 {
        match self {
            Substream::Source => 1,
            Substream::Channel => 2,
            Substream::AliceDetector => 3,
            Substream::BobDetector => 4,
            Substream::Choices => 5,
            Substream::Guesses => 6,
            Substream::Eve => 7,
            Substream::Estimator => 8,
        }
    }
}

/// Factory for per-round generators derived from one session seed.
#[derive(Debug, Clone)]
pub struct SeedTree {
    seed: u64,
}

impl SeedTree {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// A generator for the whole of `stream`, starting at its origin.
    pub fn stream(&self, stream: Substream) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream.id());
        rng
    }

    /// A generator for `stream` positioned at the start of `round`.
    pub fn round(&self, stream: Substream, round: u64) -> ChaCha8Rng {
        let mut rng = self.stream(stream);
        rng.set_word_pos(ROUND_STRIDE_WORDS * u128::from(round));
        rng
    }
}
