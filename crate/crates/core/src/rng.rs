//! Seeded random streams.
//!
//! Every stochastic step draws from a ChaCha8 stream keyed by `(seed,
//! stream)`, so independent consumers (one per tree, one for shuffling, one
//! for weight init) never share state and stay reproducible.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64, stream: u64) -> SeededRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
