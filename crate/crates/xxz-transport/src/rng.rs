//! Counter-based random streams keyed by (master seed, trajectory id), so
//! ensembles are reproducible trajectory by trajectory and workers need no
//! coordination. ChaCha8 gives an addressable word position that checkpoints
//! can capture and restore exactly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream id 0 is reserved for non-trajectory draws; trajectory `id` maps to
/// stream `id + 1`.
#[derive(Debug, Clone)]
pub struct TrajectoryRng {
    inner: ChaCha8Rng,
}

impl TrajectoryRng {
    pub fn new(master_seed: u64, trajectory_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(master_seed);
        inner.set_stream(trajectory_id.wrapping_add(1));
        Self { inner }
    }

    /// Uniform draw in [0, 1).
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    /// Position in the stream, for checkpointing.
    pub fn word_pos(&self) -> u128 {
        self.inner.get_word_pos()
    }

    pub fn set_word_pos(&mut self, pos: u128) {
        self.inner.set_word_pos(pos);
    }
}
