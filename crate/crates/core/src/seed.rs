//! Child-seed derivation so each stage draws from its own stream.

/// SplitMix64 finalizer.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a, used to turn stage tags and user identifiers into seed material.
pub fn hash_str(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Seed for a named stage under `root`.
pub fn derive(root: u64, tag: &str) -> u64 {
    mix(root ^ mix(hash_str(tag)))
}

/// Seed for the `index`-th item of a stage.
pub fn derive_indexed(root: u64, tag: &str, index: u64) -> u64 {
    mix(derive(root, tag) ^ mix(index.wrapping_add(1)))
}
