//! Deterministic seed derivation.
//!
//! All randomness in the crate flows from explicit `u64` seeds through
//! ChaCha8. Sub-seeds (per trial, per thread partition) are derived with
//! splitmix64 over an FNV-1a hash of the context, so runs reproduce
//! bit-for-bit across machines and thread counts.

/// One step of the splitmix64 generator.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a over a byte slice. Stable across platforms, unlike `DefaultHasher`.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Trial seed for a phase-transition cell: `splitmix64(master ^ fnv1a(method, n, r, trial))`.
pub fn trial_seed(master: u64, method: &str, n: usize, r: usize, trial: usize) -> u64 {
    let mut bytes = Vec::with_capacity(method.len() + 24);
    bytes.extend_from_slice(method.as_bytes());
    bytes.extend_from_slice(&(n as u64).to_le_bytes());
    bytes.extend_from_slice(&(r as u64).to_le_bytes());
    bytes.extend_from_slice(&(trial as u64).to_le_bytes());
    splitmix64(master ^ fnv1a(&bytes))
}

/// Seed for partition `index` of a parallel sampling run.
pub fn partition_seed(master: u64, index: usize) -> u64 {
    splitmix64(master ^ splitmix64(index as u64))
}
