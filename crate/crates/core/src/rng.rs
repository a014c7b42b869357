//! Counter-based random streams.
//!
//! Every randomized routine derives one independent ChaCha stream per unit of
//! work (replicate, year, bootstrap draw) from `(seed, stream index)`. The
//! output therefore never depends on how work is scheduled across threads.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Independent generator for stream `index` under the master `seed`.
pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Master seed for an independent task sharing a user seed.
pub fn derive_seed(seed: u64, purpose: u64) -> u64 {
    seed ^ purpose.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Generator for a sub-stream, e.g. (replicate, purpose).
pub fn substream(seed: u64, index: u64, purpose: u64) -> ChaCha8Rng {
    stream(derive_seed(seed, purpose), index)
}

/// Uniform draw on the open interval (0, 1) with 53 bits of resolution.
pub fn open_unit<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let bits = rng.next_u64() >> 11;
        if bits != 0 {
            return bits as f64 * (1.0 / (1u64 << 53) as f64);
        }
    }
}
