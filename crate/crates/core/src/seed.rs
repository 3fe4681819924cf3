//! Stable hashing and per-stage seed derivation.

/// 64-bit FNV-1a; stable across platforms and releases, unlike `DefaultHasher`.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for a named stage, derived from the run's root seed.
pub fn derive_seed(root: u64, stage: &str) -> u64 {
    let mut bytes = root.to_le_bytes().to_vec();
    bytes.extend_from_slice(stage.as_bytes());
    splitmix64(fnv1a(&bytes))
}
