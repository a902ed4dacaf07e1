//! Seedable, splittable pseudorandom streams.
//!
//! A stream is identified by its 64-bit seed. [`Rng::derive`] produces a
//! child stream whose seed depends only on the parent seed and the labels,
//! never on how many draws the parent has made, so per-layer and per-epoch
//! streams are independent of evaluation order.

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::error::{param_err, Result};

#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Child stream keyed by `labels`; independent of this stream's position.
    pub fn derive(&self, labels: &[u64]) -> Rng {
        let mut h = splitmix64(self.seed ^ 0x6A09_E667_F3BC_C908);
        for &label in labels {
            h = splitmix64(h ^ splitmix64(label));
        }
        Rng::new(h)
    }

    /// One uniform draw in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.random::<u64>()
    }

    /// Uniform index in `0..n`. `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// `count` independent Bernoulli(p) draws as 0.0 / 1.0, one uniform each.
    pub fn bernoulli(&mut self, count: usize, p: f64) -> Result<Vec<f64>> {
        if !(0.0..=1.0).contains(&p) {
            return Err(param_err!("bernoulli probability {p} outside [0, 1]"));
        }
        Ok((0..count)
            .map(|_| if self.next_f64() < p { 1.0 } else { 0.0 })
            .collect())
    }

    /// `count` i.i.d. draws from `[lo, hi)`; `lo == hi` yields `lo` exactly.
    pub fn uniform(&mut self, count: usize, lo: f64, hi: f64) -> Result<Vec<f64>> {
        if lo > hi || !lo.is_finite() || !hi.is_finite() {
            return Err(param_err!("uniform interval [{lo}, {hi}) is invalid"));
        }
        if lo == hi {
            // keep stream consumption identical to the nondegenerate case
            return Ok((0..count)
                .map(|_| {
                    self.next_f64();
                    lo
                })
                .collect());
        }
        let dist = Uniform::new(lo, hi).map_err(|e| param_err!("uniform: {e}"))?;
        Ok((0..count).map(|_| dist.sample(&mut self.inner)).collect())
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean(v: &[f64]) -> f64 {
        v.iter().sum::<f64>() / v.len() as f64
    }

    #[test]
    fn degenerate_bernoulli() {
        let mut rng = Rng::new(1);
        assert!(rng.bernoulli(1000, 1.0).unwrap().iter().all(|&v| v == 1.0));
        assert!(rng.bernoulli(1000, 0.0).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bernoulli_rejects_bad_probability() {
        let mut rng = Rng::new(1);
        assert!(rng.bernoulli(1, 1.5).is_err());
        assert!(rng.bernoulli(1, -0.1).is_err());
        assert!(rng.bernoulli(1, f64::NAN).is_err());
    }

    #[test]
    fn bernoulli_mean_within_three_sigma() {
        // sigma = sqrt(0.9 * 0.1 / 1e5) ~= 0.00095
        let draws = Rng::new(7).bernoulli(100_000, 0.9).unwrap();
        let m = mean(&draws);
        assert!((0.897..=0.903).contains(&m), "mean {m}");
    }

    #[test]
    fn bernoulli_consumes_exactly_count_draws() {
        let mut a = Rng::new(3);
        let mut b = Rng::new(3);
        a.bernoulli(17, 0.3).unwrap();
        for _ in 0..17 {
            b.next_f64();
        }
        assert_eq!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn uniform_degenerate_and_range() {
        let mut rng = Rng::new(5);
        assert!(rng.uniform(100, 1.0, 1.0).unwrap().iter().all(|&v| v == 1.0));
        let vals = rng.uniform(10_000, 0.6, 1.4).unwrap();
        assert!(vals.iter().all(|&v| (0.6..1.4).contains(&v)));
        assert!(rng.uniform(1, 2.0, 1.0).is_err());
    }

    #[test]
    fn uniform_mean_within_three_sigma() {
        // sigma = 0.8 / sqrt(12) / sqrt(1e5) ~= 0.00073
        let vals = Rng::new(11).uniform(100_000, 0.6, 1.4).unwrap();
        let m = mean(&vals);
        assert!((0.9978..=1.0022).contains(&m), "mean {m}");
    }

    #[test]
    fn same_seed_same_sequence() {
        let a: Vec<u64> = {
            let mut r = Rng::new(42);
            (0..64).map(|_| r.next_u64()).collect()
        };
        let b: Vec<u64> = {
            let mut r = Rng::new(42);
            (0..64).map(|_| r.next_u64()).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn derive_ignores_parent_position() {
        let fresh = Rng::new(9);
        let mut used = Rng::new(9);
        for _ in 0..100 {
            used.next_u64();
        }
        assert_eq!(
            fresh.derive(&[1, 2]).next_u64(),
            used.derive(&[1, 2]).next_u64()
        );
        assert_ne!(
            fresh.derive(&[1, 2]).next_u64(),
            fresh.derive(&[2, 1]).next_u64()
        );
    }

    #[test]
    fn bernoulli_mean_bound_holds_across_seeds() {
        // |mean - p| < 3 sigma in at least 99% of seeds
        let (n, p) = (100_000usize, 0.5);
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        let passes = (0..100u64)
            .filter(|&s| {
                let m = mean(&Rng::new(s).bernoulli(n, p).unwrap());
                (m - p).abs() < 3.0 * sigma
            })
            .count();
        assert!(passes >= 99, "{passes}/100 seeds within 3 sigma");
    }
}
