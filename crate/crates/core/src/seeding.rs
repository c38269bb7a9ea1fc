use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

// splitmix64 finalizer
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent stream from a base seed and a tuple of stream ids.
pub(crate) fn stream(seed: u64, ids: &[u64]) -> ChaCha8Rng {
    let mut state = mix(seed);
    for &id in ids {
        state = mix(state ^ mix(id));
    }
    ChaCha8Rng::seed_from_u64(state)
}

pub(crate) mod tags {
    pub const SPLIT: u64 = 1;
    pub const INIT: u64 = 2;
    pub const SELECT: u64 = 3;
    pub const CLIENT: u64 = 4;
}
