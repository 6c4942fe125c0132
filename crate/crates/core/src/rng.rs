//! Reproducible random streams.
//!
//! Every trajectory owns one ChaCha8 stream. Replica `j` of a run with master
//! seed `s` uses the stream `(seed_from_u64(s), set_stream(j))`, so ensembles
//! are reproducible and independent of scheduling order. A single unsharded
//! run is, by convention, replica 0.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// Stream for replica `replica` of the run seeded by `seed`.
pub fn replica_stream(seed: u64, replica: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica);
    rng
}
