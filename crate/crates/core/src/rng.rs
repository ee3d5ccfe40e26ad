//! Reproducible random streams.
//!
//! Every independent block of work gets its own ChaCha8 stream addressed by
//! `(seed, stream index)`. ChaCha is counter based, so stream `k` does not
//! depend on how many values other streams consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream index reserved for template construction, far away from the chunk
/// indices used by the estimators.
pub const TEMPLATE_STREAM: u64 = 1 << 62;
/// Stream offset used by the reference Monte Carlo oracle.
pub const ORACLE_STREAM_BASE: u64 = 1 << 61;

pub fn stream(seed: u64, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Splits `total` items into `parts` contiguous blocks whose sizes differ by
/// at most one; the first `total % parts` blocks are the larger ones.
pub fn block_sizes(total: u64, parts: u64) -> Vec<u64> {
    let base = total / parts;
    let extra = total % parts;
    (0..parts).map(|i| base + u64::from(i < extra)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_independent_of_each_other() {
        let mut a = stream(7, 0);
        let mut b = stream(7, 1);
        let xa: u64 = a.random();
        let xb: u64 = b.random();
        assert_ne!(xa, xb);
        let mut a2 = stream(7, 0);
        assert_eq!(xa, a2.random::<u64>());
    }

    #[test]
    fn blocks_cover_total() {
        let b = block_sizes(10, 3);
        assert_eq!(b, vec![4, 3, 3]);
        assert_eq!(block_sizes(5, 5), vec![1; 5]);
    }
}
