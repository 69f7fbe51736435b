//! Seeded random streams.
//!
//! Every sampler takes a 64-bit seed. Independent workers use the same seed
//! with distinct ChaCha stream ids, so a replication's draws do not depend on
//! which thread ran it or in which order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
