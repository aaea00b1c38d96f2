//! Seeded 64-bit mixing used for sketch hashing, id generation and seed derivation.

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer. A bijection on `u64`.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seeded hash of a 64-bit element id.
#[inline]
pub fn hash64(x: u64, seed: u64) -> u64 {
    let key = mix64(seed ^ GOLDEN);
    mix64(mix64(x.wrapping_add(key)) ^ key.rotate_left(32))
}

/// Derives an independent seed for sub-stream `stream` of `master`.
#[inline]
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    mix64(master ^ mix64(stream.wrapping_mul(GOLDEN).wrapping_add(GOLDEN)))
}

/// `true` with probability `p` as a pure function of `h`.
#[inline]
pub(crate) fn bernoulli_from_hash(h: u64, p: f64) -> bool {
    if p >= 1.0 {
        return true;
    }
    if p <= 0.0 {
        return false;
    }
    // 53 high bits give a uniform in [0, 1).
    ((h >> 11) as f64) * (1.0 / (1u64 << 53) as f64) < p
}
