//! Counter-based random streams: every draw is a function of
//! `(seed, stream, index)`, never of global state or thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for item `index` of stream `stream` under `seed`.
pub fn stream_rng(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(splitmix(stream ^ splitmix(index)));
    rng
}

/// Stream ids used by the samplers, kept distinct so that e.g. chain 0 of a
/// Metropolis run never reuses the ancestral draws.
pub(crate) mod streams {
    pub const ANCESTRAL: u64 = 0x414E_4300_0000_0000;
    pub const METROPOLIS: u64 = 0x4D48_0000_0000_0000;
}
