//! Seeded random-number streams.
//!
//! Every consumer of randomness receives its own ChaCha8 generator derived
//! from a root seed by a fixed rule, so results never depend on scheduling:
//! the generator for stream `s` is `ChaCha8Rng::seed_from_u64(root)` with
//! its stream id set to `s`. Replications reserve a block of
//! [`STREAMS_PER_REPLICATION`] consecutive stream ids each; the channel
//! constants below name the slots inside a block.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream ids reserved per replication.
pub const STREAMS_PER_REPLICATION: u64 = 8;

/// Channel for dataset generation (design points and noise).
pub const CHANNEL_DATA: u64 = 0;
/// Channel for the training/learning split seed.
pub const CHANNEL_SPLIT: u64 = 1;
/// Channel for fresh MISE evaluation points.
pub const CHANNEL_TEST: u64 = 2;

/// Generator for the given stream of a root seed.
pub fn derive_rng(root_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(root_seed);
    rng.set_stream(stream);
    rng
}

/// Generator for one channel of one replication.
pub fn replication_rng(root_seed: u64, replication: usize, channel: u64) -> ChaCha8Rng {
    debug_assert!(channel < STREAMS_PER_REPLICATION);
    derive_rng(
        root_seed,
        replication as u64 * STREAMS_PER_REPLICATION + channel,
    )
}
