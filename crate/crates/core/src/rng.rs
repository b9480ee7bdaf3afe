//! Counter-based seed splitting.
//!
//! Stream `k` of master seed `s` is a pure function of `(s, k)`, so work
//! split across any number of workers draws the same numbers.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Generator for stream `index` of `master_seed`.
pub fn stream(master_seed: u64, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// A child seed derived from `(master_seed, index)`.
pub fn derive_seed(master_seed: u64, index: u64) -> u64 {
    stream(master_seed, index).next_u64()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_pure_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| 0).scan(stream(7, 3), |r, _| Some(r.next_u64())).collect();
        let b: Vec<u64> = (0..4).map(|_| 0).scan(stream(7, 3), |r, _| Some(r.next_u64())).collect();
        assert_eq!(a, b);
        assert_ne!(stream(7, 3).next_u64(), stream(7, 4).next_u64());
        assert_ne!(derive_seed(7, 0), derive_seed(8, 0));
    }
}
