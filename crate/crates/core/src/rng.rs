//! Seed plumbing. Every stochastic routine draws from a ChaCha stream derived
//! from an explicit `u64`, so results never depend on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn rng_from(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
pub fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and a stream tag.
pub fn derive(seed: u64, tag: u64) -> u64 {
    splitmix(seed ^ splitmix(tag))
}

/// Order-sensitive hash of a sequence of words (FNV-1a over the words, then mixed).
pub fn hash_words<I: IntoIterator<Item = u64>>(words: I) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for w in words {
        h ^= w;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    splitmix(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn derived_streams_are_reproducible_and_distinct() {
        let a: u64 = rng_from(derive(7, 1)).gen();
        let b: u64 = rng_from(derive(7, 1)).gen();
        let c: u64 = rng_from(derive(7, 2)).gen();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn word_hash_is_order_sensitive() {
        assert_ne!(hash_words([1, 2]), hash_words([2, 1]));
        assert_eq!(hash_words([3, 4, 5]), hash_words(vec![3, 4, 5]));
    }
}
