//! Seeded random streams.
//!
//! Every stochastic routine takes an [`RngStream`] rather than a generator so
//! that a `(seed, stream)` pair fully names a draw sequence. Parallel workers
//! get disjoint sub-streams via [`RngStream::split`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Named stream ids hanging off a run's root seed.
pub mod streams {
    pub const BOOTSTRAP: u64 = 1;
    pub const SAMPLER: u64 = 2;
    pub const VERIFY: u64 = 3;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    /// Child stream `index`. Children of distinct parents or distinct indices never collide
    /// as long as parent stream ids stay below 2³² and indices below 2³².
    pub fn split(&self, index: u64) -> RngStream {
        debug_assert!(index < (1 << 32));
        let stream = (self.stream << 32) | (index & 0xffff_ffff);
        RngStream { seed: self.seed.wrapping_add(self.stream >> 32), stream }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}
