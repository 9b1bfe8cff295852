//! Counter-based, seed-addressable random streams.
//!
//! Every feature block in a model is regenerated on demand from
//! `(base_seed, block_index)` alone, so the generator must be a pure
//! function of that address with no retained state between blocks. We use
//! the SplitMix64 output function over an affine counter: the n-th raw draw
//! is `mix(key + n * GAMMA)`, which gives random access by construction and
//! keeps the whole model reproducible from one integer seed.

/// Weyl increment for the SplitMix64 counter.
const GAMMA: u64 = 0x9E3779B97F4A7C15;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Derive the stream key for `(base_seed, block_index)`.
///
/// Two rounds of mixing decorrelate seeds and indices that differ in few
/// bits; distinct block indices give statistically independent streams.
fn derive_key(base_seed: u64, block_index: u64) -> u64 {
    mix(mix(base_seed.wrapping_add(GAMMA)) ^ block_index.wrapping_mul(GAMMA))
}

/// A deterministic random stream addressed by `(base_seed, block_index)`.
#[derive(Debug, Clone)]
pub struct Stream {
    key: u64,
    counter: u64,
    /// Second Box-Muller variate, held for the next normal draw.
    spare_normal: Option<f64>,
}

/// Stream for the feature block `block_index` (Algorithm 1's "seed i").
pub fn derive_stream(base_seed: u64, block_index: u64) -> Stream {
    Stream {
        key: derive_key(base_seed, block_index),
        counter: 0,
        spare_normal: None,
    }
}

/// Salts carving the seed space into independent purposes, so that e.g.
/// data sampling never shares draws with feature generation.
pub mod salt {
    pub const FEATURES: u64 = 0;
    pub const DATA: u64 = 0x5F92_1D47_A3C8_0001;
    pub const FEATURES_PRIME: u64 = 0x5F92_1D47_A3C8_0002;
    pub const SPLIT: u64 = 0x5F92_1D47_A3C8_0003;
    pub const MEDIAN: u64 = 0x5F92_1D47_A3C8_0004;
    pub const SYNTH: u64 = 0x5F92_1D47_A3C8_0005;
}

/// Stream for purpose `salt` and index; `salt::FEATURES` matches
/// [`derive_stream`] exactly.
pub fn derive_salted(base_seed: u64, salt: u64, index: u64) -> Stream {
    derive_stream(base_seed ^ salt, index)
}

impl Stream {
    /// Next raw 64-bit draw.
    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let n = self.counter;
        self.counter = self.counter.wrapping_add(1);
        mix(self.key.wrapping_add(n.wrapping_mul(GAMMA)))
    }

    /// Uniform on [0, 1) with 53 bits of precision.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on (0, 1], safe as a log argument.
    #[inline]
    fn uniform_open(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in [0, n). Uses rejection to avoid modulo bias.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return v % n;
            }
        }
    }

    /// Standard normal via Box-Muller.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = self.uniform_open();
        let u2 = self.uniform();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(radius * angle.sin());
        radius * angle.cos()
    }

    /// Standard Cauchy via inverse CDF.
    pub fn cauchy(&mut self) -> f64 {
        (std::f64::consts::PI * (self.uniform() - 0.5)).tan()
    }

    /// Standard Laplace (density exp(-|x|)/2) via inverse CDF.
    pub fn laplace(&mut self) -> f64 {
        let u = self.uniform() - 0.5;
        -u.signum() * (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE).ln()
    }

    /// Rademacher sign, -1 or +1 with equal probability.
    #[inline]
    pub fn sign(&mut self) -> f64 {
        if self.next_u64() & 1 == 0 {
            1.0
        } else {
            -1.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_address_same_sequence() {
        let mut a = derive_stream(7, 3);
        let mut b = derive_stream(7, 3);
        for _ in 0..1000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn distinct_indices_differ() {
        let mut a = derive_stream(7, 3);
        let mut b = derive_stream(7, 4);
        let same = (0..64).filter(|_| a.next_u64() == b.next_u64()).count();
        assert_eq!(same, 0);
    }

    #[test]
    fn uniform_mean_near_half() {
        // Monte Carlo check against the uniform law.
        for idx in 0..4 {
            let mut s = derive_stream(42, idx);
            let mean: f64 = (0..10_000).map(|_| s.uniform()).sum::<f64>() / 1e4;
            assert!((mean - 0.5).abs() < 0.02, "mean {mean} for index {idx}");
        }
    }

    #[test]
    fn normal_moments() {
        let mut s = derive_stream(1, 0);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| s.normal()).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.02);
        assert!((var - 1.0).abs() < 0.03);
    }

    #[test]
    fn laplace_is_symmetric_unit_scale() {
        let mut s = derive_stream(9, 0);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| s.laplace()).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let mean_abs = draws.iter().map(|x| x.abs()).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.03);
        // E|X| = 1 for the standard Laplace.
        assert!((mean_abs - 1.0).abs() < 0.03);
    }

    #[test]
    fn below_is_unbiased_enough() {
        let mut s = derive_stream(3, 0);
        let mut counts = [0usize; 10];
        for _ in 0..100_000 {
            counts[s.below(10) as usize] += 1;
        }
        for c in counts {
            assert!((c as f64 - 10_000.0).abs() < 500.0);
        }
    }

    #[test]
    fn salted_streams_are_independent_of_feature_streams() {
        let mut a = derive_salted(7, salt::DATA, 3);
        let mut b = derive_stream(7, 3);
        assert_ne!(a.next_u64(), b.next_u64());
    }
}
