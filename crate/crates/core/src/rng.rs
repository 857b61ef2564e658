//! Counter-based random streams.
//!
//! Every stochastic quantity in a simulation draws from a ChaCha8 keystream
//! selected by `(seed, stream)`. ChaCha is a counter-mode generator, so a
//! stream's output depends only on its key, never on how many other streams
//! were consumed before it. That is what lets per-pixel work run in any
//! order and still reproduce bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// What a stream is used for. Keeps laser and detector noise of the same
/// pixel statistically independent.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum StreamPurpose {
    LaserPhase = 1,
    DetectorNoise = 2,
}

/// Stream id for one pixel's noise source.
pub fn pixel_stream(pixel: usize, purpose: StreamPurpose) -> u64 {
    ((pixel as u64) << 8) | purpose as u64
}

/// Keyed generator for a single stream.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Fills `out` with independent standard normal draws from `(seed, stream)`.
pub fn standard_normals(seed: u64, stream: u64, out: &mut [f64]) {
    let mut rng = stream_rng(seed, stream);
    for v in out.iter_mut() {
        *v = StandardNormal.sample(&mut rng);
    }
}

/// SplitMix64 finalizer, used to derive child seeds from a master seed.
pub fn derive_seed(master: u64, salt: u64) -> u64 {
    let mut z = master ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
