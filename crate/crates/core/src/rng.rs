//! Reproducible random streams.
//!
//! Every random quantity is drawn from a ChaCha8 stream selected by
//! `(seed, stream id)`. ChaCha is a counter-based generator, so a stream can
//! be opened independently on any thread and yields the same sequence no
//! matter how work is scheduled. Normal variates come from the ziggurat
//! transform in `rand_distr::StandardNormal`, consumed in a fixed order
//! within each stream (for simulation: step-major, then coordinate).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Domain tags used to derive independent seeds for different consumers.
pub mod tag {
    pub const INITIAL: u64 = 0x494e_4954;
    pub const SIMULATE: u64 = 0x5349_4d55;
    pub const SHUFFLE: u64 = 0x5348_5546;
    pub const METROPOLIS: u64 = 0x4d45_5452;
    pub const PERMUTATION: u64 = 0x5045_524d;
    pub const RESAMPLE: u64 = 0x5245_5341;
    pub const REPLICATE: u64 = 0x5245_504c;
    pub const EVAL: u64 = 0x4556_414c;
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and a tag.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    mix(mix(seed) ^ tag.rotate_left(17))
}

/// Opens stream `stream` of the generator keyed by `seed`.
pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[inline]
pub fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Fills `out` with independent standard normals.
pub fn fill_normal<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    for z in out.iter_mut() {
        *z = rng.sample(StandardNormal);
    }
}
