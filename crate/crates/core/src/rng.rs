//! Seed lanes.
//!
//! Every random object in the crate is a pure function of a [`Lane`]: a
//! 64-bit seed plus a 64-bit stream index fed to ChaCha8. Replica `i` of an
//! experiment uses stream `i`, and independent purposes (path increments,
//! white noise, solver restarts) get distinct seeds derived from the base
//! seed by a salted SplitMix64 step.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Purpose tags used to derive independent seeds from one base seed.
pub mod purpose {
    pub const PATH: u64 = 0x5041_5448;
    pub const PATH_B: u64 = 0x5041_5442;
    pub const NOISE: u64 = 0x4e4f_4953;
    pub const RESTART: u64 = 0x5253_5452;
    pub const ORACLE: u64 = 0x4f52_434c;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Lane {
    pub seed: u64,
    pub stream: u64,
}

impl Lane {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    /// Lane for `purpose` derived from a base seed, stream 0.
    pub fn derive(base_seed: u64, purpose: u64) -> Self {
        Self {
            seed: splitmix64(base_seed ^ splitmix64(purpose)),
            stream: 0,
        }
    }

    pub fn replica(self, index: u64) -> Self {
        Self {
            seed: self.seed,
            stream: index,
        }
    }

    pub fn rng(self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
