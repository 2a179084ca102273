//! Seeded random streams.
//!
//! Every consumer draws from a ChaCha8 generator keyed by the master seed,
//! with stream id `4 * index + kind`. Path `j` of a batch is therefore
//! reproducible on its own, independently of how many paths run or in which
//! order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamKind {
    /// Brownian increments of the state.
    Noise = 0,
    /// Attack schedule generation.
    Attack = 1,
    /// Network initialisation and batch sampling.
    Training = 2,
}

pub fn substream(master_seed: u64, index: u64, kind: StreamKind) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index.wrapping_mul(4).wrapping_add(kind as u64));
    rng
}
