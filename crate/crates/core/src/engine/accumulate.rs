//! Per-chunk streaming sums.
//!
//! Values are first added into a plain `f64` block buffer which is flushed
//! into Neumaier-compensated totals every [`FLUSH_EVERY`] samples. Chunk
//! totals are merged in chunk-index order, so the result depends only on the
//! chunk layout and never on scheduling.

pub(crate) const FLUSH_EVERY: u32 = 256;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &Neumaier) {
        self.add(other.sum);
        self.comp += other.comp;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// A vector of running sums with a block buffer in front.
#[derive(Debug, Clone)]
pub(crate) struct Sums {
    pub block: Vec<f64>,
    totals: Vec<Neumaier>,
}

impl Sums {
    pub fn new(n: usize) -> Self {
        Sums {
            block: vec![0.0; n],
            totals: vec![Neumaier::default(); n],
        }
    }

    pub fn flush(&mut self) {
        for (t, b) in self.totals.iter_mut().zip(self.block.iter_mut()) {
            if *b != 0.0 {
                t.add(*b);
                *b = 0.0;
            }
        }
    }

    pub fn merge(&mut self, other: &Sums) {
        debug_assert!(other.block.iter().all(|&b| b == 0.0));
        for (t, o) in self.totals.iter_mut().zip(&other.totals) {
            t.merge(o);
        }
    }

    pub fn values(&self) -> Vec<f64> {
        self.totals.iter().map(Neumaier::value).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut n = Neumaier::default();
        n.add(1e16);
        for _ in 0..1000 {
            n.add(1.0);
        }
        n.add(-1e16);
        assert_eq!(n.value(), 1000.0);
    }

    #[test]
    fn merge_matches_sequential() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64).sin() * 1e3).collect();
        let mut all = Neumaier::default();
        xs.iter().for_each(|&x| all.add(x));
        let (mut a, mut b) = (Neumaier::default(), Neumaier::default());
        xs[..500].iter().for_each(|&x| a.add(x));
        xs[500..].iter().for_each(|&x| b.add(x));
        a.merge(&b);
        assert!((a.value() - all.value()).abs() < 1e-12);
    }
}
