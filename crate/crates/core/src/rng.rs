//! Counter-based deterministic random number generation.
//!
//! Every consumer derives an independent stream from a seed plus a list of
//! integer key parts (frame index, beam index, azimuth step, ...). Streams
//! never share state, so parallel or reordered generation produces identical
//! values for identical keys.

/// SplitMix64 finalizer. Bijective on u64.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic stream keyed by `(seed, parts...)`.
#[derive(Debug, Clone)]
pub struct StreamRng {
    key: u64,
    counter: u64,
    cached_gauss: Option<f64>,
}

impl StreamRng {
    pub fn new(seed: u64, parts: &[u64]) -> Self {
        let mut key = mix(seed);
        for &p in parts {
            key = mix(key ^ p);
        }
        StreamRng {
            key,
            counter: 0,
            cached_gauss: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        let v = mix(self.key.wrapping_add(self.counter.wrapping_mul(0xd1b5_4a32_d192_ed03)));
        self.counter += 1;
        v
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform index in [0, n). `n` must be nonzero.
    pub fn index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        (((self.next_u64() as u128) * (n as u128)) >> 64) as usize
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    /// Standard normal via Box-Muller; the paired value is cached.
    pub fn gauss(&mut self) -> f64 {
        if let Some(z) = self.cached_gauss.take() {
            return z;
        }
        // u1 in (0, 1] keeps the logarithm finite.
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.cached_gauss = Some(r * theta.sin());
        r * theta.cos()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_keys_give_identical_streams() {
        let mut a = StreamRng::new(42, &[3, 17]);
        let mut b = StreamRng::new(42, &[3, 17]);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn different_key_parts_decorrelate() {
        let mut a = StreamRng::new(42, &[3, 17]);
        let mut b = StreamRng::new(42, &[3, 18]);
        let equal = (0..100).filter(|_| a.next_u64() == b.next_u64()).count();
        assert_eq!(equal, 0);
    }

    #[test]
    fn unit_interval_bounds() {
        let mut r = StreamRng::new(7, &[]);
        for _ in 0..10_000 {
            let x = r.next_f64();
            assert!((0.0..1.0).contains(&x));
        }
    }

    #[test]
    fn gauss_moments_are_plausible() {
        let mut r = StreamRng::new(1, &[9]);
        let n = 100_000;
        let samples: Vec<f64> = (0..n).map(|_| r.gauss()).collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.03, "var {var}");
    }

    #[test]
    fn index_covers_range_without_overflow() {
        let mut r = StreamRng::new(5, &[1]);
        let mut seen = [false; 10];
        for _ in 0..1_000 {
            seen[r.index(10)] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }
}
