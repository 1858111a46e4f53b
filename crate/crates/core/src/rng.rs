//! Counter-based random streams.
//!
//! Path `i` of a run with seed `s` draws from ChaCha8 keyed by `s` on stream
//! `i`, so a path's noise depends only on `(s, i)` and never on which thread
//! or in which order paths are generated.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamLayout {
    /// ChaCha8 keyed by the seed, stream number = path index.
    Chacha8PathIndex,
}

/// Seed plus the stream layout, recorded in every output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngDescriptor {
    pub seed: u64,
    pub layout: StreamLayout,
}

impl RngDescriptor {
    pub fn new(seed: u64) -> Self {
        RngDescriptor {
            seed,
            layout: StreamLayout::Chacha8PathIndex,
        }
    }

    pub fn path_stream(&self, path: u64) -> PathRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(path);
        PathRng { rng }
    }
}

pub struct PathRng {
    rng: ChaCha8Rng,
}

impl PathRng {
    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }
}
