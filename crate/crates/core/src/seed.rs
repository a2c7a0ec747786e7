//! Seed derivation for reproducible sub-streams.

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for stream `tag` at position `index` under `master`.
pub fn derive_seed(master: u64, tag: &str, index: u64) -> u64 {
    let mut h = splitmix64(master);
    for b in tag.bytes() {
        h = splitmix64(h ^ b as u64);
    }
    splitmix64(h ^ index)
}
