//! Counter-based random streams.
//!
//! Every random decision in a sample is a pure function of
//! `(seed, key, tag)`, where `key` is a deterministic label (a vertex path
//! label, a canopy position, a replica index) and `tag` names the decision.
//! Nothing depends on the order in which decisions are evaluated, which is
//! what makes lazy expansion order-independent and replicas replayable.
//!
//! The mixer is the splitmix64 finalizer; combining is done by feeding the
//! running state through it once per word.

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags, spelled as ASCII bytes.
#[allow(clippy::mistyped_literal_suffixes)]
pub(crate) mod tag {
    pub const XI: u64 = 0x78_69;
    pub const XI_HI: u64 = 0x78_69_68;
    pub const ROOT: u64 = 0x72_6f_6f_74;
    pub const VERTEX: u64 = 0x76_78;
    pub const ADD: u64 = 0x61_64_64;
    pub const DEL: u64 = 0x64_65_6c;
    pub const REPLICA: u64 = 0x72_65_70;
    pub const ATTEMPT: u64 = 0x61_74_74;
    pub const NOISE_SEED: u64 = 0x6e_73;
}

#[inline]
pub const fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Order-sensitive combination of two words.
#[inline]
pub const fn mix(a: u64, b: u64) -> u64 {
    splitmix64(splitmix64(a) ^ b.rotate_left(23) ^ 0x6a09_e667_f3bc_c909)
}

#[inline]
pub fn mix_all(words: &[u64]) -> u64 {
    words.iter().fold(0x243f_6a88_85a3_08d3, |acc, &w| mix(acc, w))
}

/// 53-bit uniform in `[0, 1)`.
#[inline]
pub fn unit_f64(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Stateless keyed generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Keyed {
    seed: u64,
}

impl Keyed {
    pub const fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub const fn seed(&self) -> u64 {
        self.seed
    }

    #[inline]
    pub fn bits(&self, key: u64, tag: u64) -> u64 {
        mix(mix(self.seed, tag), key)
    }

    #[inline]
    pub fn uniform(&self, key: u64, tag: u64) -> f64 {
        unit_f64(self.bits(key, tag))
    }

    /// Exact Bernoulli(4^-level) from integer bits: the event is that the
    /// top `2 * level` bits of a 128-bit word are all zero. Levels above 63
    /// have probability below 2^-128 and are reported as 0.
    pub fn bernoulli_pow4(&self, key: u64, level: u32) -> bool {
        if level == 0 {
            return true;
        }
        if level > 63 {
            return false;
        }
        let shift = 2 * level;
        let hi = self.bits(key, tag::XI);
        if shift <= 64 {
            return shift == 64 && hi == 0 || shift < 64 && (hi >> (64 - shift)) == 0;
        }
        if hi != 0 {
            return false;
        }
        let lo = self.bits(key, tag::XI_HI);
        (lo >> (128 - shift)) == 0
    }

    /// A sequential stream for one key and tag.
    pub fn stream(&self, key: u64, tag: u64) -> CounterRng {
        CounterRng::new(self.bits(key, tag))
    }
}

/// Sequential generator whose `i`-th output is `mix(key, i)`.
#[derive(Debug, Clone)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    pub const fn new(key: u64) -> Self {
        Self { key, counter: 0 }
    }
}

impl RngCore for CounterRng {
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        let out = mix(self.key, self.counter);
        self.counter += 1;
        out
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}

/// Seed for replica `index` of a run with master seed `seed`.
pub fn replica_seed(seed: u64, index: u64) -> u64 {
    mix_all(&[seed, tag::REPLICA, index])
}

/// ChaCha stream for bulk sampling inside one replica (branching processes).
pub fn replica_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keyed_bits_are_pure() {
        let k = Keyed::new(7);
        assert_eq!(k.bits(3, tag::XI), k.bits(3, tag::XI));
        assert_ne!(k.bits(3, tag::XI), k.bits(4, tag::XI));
        assert_ne!(k.bits(3, tag::XI), Keyed::new(8).bits(3, tag::XI));
    }

    #[test]
    fn pow4_bernoulli_frequencies() {
        let k = Keyed::new(11);
        for level in 1..=4u32 {
            let n = 1_000_000u64;
            let hits = (0..n).filter(|&i| k.bernoulli_pow4(i, level)).count() as f64;
            let p = 4f64.powi(-(level as i32));
            let sd = (p * (1.0 - p) / n as f64).sqrt();
            assert!((hits / n as f64 - p).abs() < 3.0 * sd, "level {level}");
        }
        assert!(k.bernoulli_pow4(99, 0));
        assert!(!k.bernoulli_pow4(99, 64));
    }

    #[test]
    fn counter_rng_matches_keyed_outputs() {
        let mut a = CounterRng::new(5);
        let mut b = CounterRng::new(5);
        let xs: Vec<u64> = (0..4).map(|_| a.next_u64()).collect();
        let ys: Vec<u64> = (0..4).map(|_| b.next_u64()).collect();
        assert_eq!(xs, ys);
        assert_eq!(xs[2], mix(5, 2));
    }
}
