//! Deterministic seed derivation.
//!
//! Every randomized stage derives its own stream from one master seed so a
//! whole run replays byte-for-byte. Sub-seeds are
//! `splitmix64(master ^ fnv1a64(label) ^ splitmix64(index))`; the label names
//! the stage ("smallworld", "ga", "dataset", ...) and the index separates
//! per-sample streams within a stage.

/// One round of the splitmix64 generator; used as a seed mixer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a 64-bit hash; also used for content hashes in reports.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Derive the sub-seed for stage `label`, stream `index`, from `master`.
pub fn derive(master: u64, label: &str, index: u64) -> u64 {
    splitmix64(master ^ fnv1a64(label.as_bytes()) ^ splitmix64(index))
}
