//! Reproducible parallel random streams. Each (seed, index) pair maps to its
//! own ChaCha stream, and draws advance the stream's block counter, so a
//! sample path is a pure function of (seed, index, step).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
