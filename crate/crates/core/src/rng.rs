//! Counter-based random streams.
//!
//! Each Monte-Carlo path owns its own ChaCha8 stream, selected by the path
//! index, so a path's draws depend only on `(seed, path)`. Results do not
//! change with the thread count or with how the index range is partitioned.

use crate::normal;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

pub struct PathRng {
    inner: ChaCha8Rng,
}

impl PathRng {
    pub fn new(seed: u64, path: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(path);
        inner.set_word_pos(0);
        PathRng { inner }
    }

    /// Uniform on the open interval (0, 1).
    pub fn uniform(&mut self) -> f64 {
        let bits = self.inner.next_u64() >> 11;
        (bits as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal by inverse transform: exactly one uniform per draw.
    pub fn normal(&mut self) -> f64 {
        normal::quantile(self.uniform())
    }
}
