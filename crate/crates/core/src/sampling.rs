//! Seeded sampling primitives used wherever the engine needs repeatable
//! randomness (splits, epoch shuffles, pool draws).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent stream seed from a base seed and a salt string,
/// so that different pools drawn under one user seed do not share a stream.
pub fn derive_seed(seed: u64, salt: &str) -> u64 {
    // FNV-1a over the salt, mixed with the base seed through splitmix64.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in salt.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(seed ^ h)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// In-place Fisher–Yates shuffle (Durstenfeld variant, walking downwards).
pub fn fisher_yates<T, R: Rng + ?Sized>(items: &mut [T], rng: &mut R) {
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}

/// Returns `0..n` in seeded shuffled order.
pub fn shuffled_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    fisher_yates(&mut idx, &mut rng(seed));
    idx
}

/// Number of items sent to the held-out side when splitting a group of `n`
/// by `fraction`. Groups with at least two members keep one item on each side.
pub fn held_out_count(n: usize, fraction: f64) -> usize {
    let raw = (n as f64 * fraction + 0.5).floor() as usize;
    if n >= 2 {
        raw.clamp(1, n - 1)
    } else {
        0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shuffle_is_a_permutation_and_repeatable() {
        let a = shuffled_indices(100, 9);
        let b = shuffled_indices(100, 9);
        assert_eq!(a, b);
        let mut sorted = a.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..100).collect::<Vec<_>>());
        assert_ne!(a, shuffled_indices(100, 10));
    }

    #[test]
    fn held_out_counts() {
        assert_eq!(held_out_count(100, 0.1), 10);
        assert_eq!(held_out_count(50, 0.1), 5);
        assert_eq!(held_out_count(3, 0.1), 1);
        assert_eq!(held_out_count(1, 0.5), 0);
        assert_eq!(held_out_count(2, 0.99), 1);
    }

    #[test]
    fn derived_seeds_differ_by_salt() {
        assert_ne!(derive_seed(1, "known"), derive_seed(1, "unknown"));
        assert_eq!(derive_seed(1, "known"), derive_seed(1, "known"));
    }
}
