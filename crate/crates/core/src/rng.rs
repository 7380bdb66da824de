//! Deterministic counter-based random streams.
//!
//! Every random draw in this crate is a pure function of a small tuple of
//! integers, typically `(seed, domain, index, counter)`. Work units can
//! therefore be evaluated on any thread in any order and still reproduce
//! the same bits, which is what makes the parallel samplers and the
//! parallel integrator bit-identical across thread counts.
//!
//! The mixer is three rounds of the splitmix64 finalizer with a distinct
//! odd multiplier injected between words. It is not cryptographic; it is
//! a statistically solid stream hash for Monte Carlo use.

use std::f64::consts::TAU;

const C0: u64 = 0x9e37_79b9_7f4a_7c15;
const C1: u64 = 0x4528_21e6_38d0_1377;
const C2: u64 = 0x1319_8a2e_0370_7344;
const SALT: u64 = 0x243f_6a88_85a3_08d3;

/// Domain tags keeping unrelated consumers of one user seed apart.
pub mod domain {
    pub const GRAPH: u64 = 1;
    pub const NOISE: u64 = 2;
    pub const SHUFFLE: u64 = 3;
    pub const VALIDATE: u64 = 4;
    pub const DICTIONARY: u64 = 5;
    pub const BOOTSTRAP: u64 = 6;
    pub const INIT: u64 = 7;
    pub const REPLICA: u64 = 8;
}

#[inline]
fn fmix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes three words into one uniform 64-bit word.
#[inline]
pub fn hash3(a: u64, b: u64, c: u64) -> u64 {
    let mut z = fmix(a.wrapping_mul(C0) ^ SALT);
    z = fmix(z ^ b.wrapping_mul(C1));
    z = fmix(z ^ c.wrapping_mul(C2));
    z
}

/// Uniform in `[0, 1)` with 53 random bits.
#[inline]
pub fn uniform(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform in `(0, 1]`; safe as a log argument.
#[inline]
fn uniform_open(bits: u64) -> f64 {
    ((bits >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// One standard normal draw for counter `ctr` of the stream `(key, idx)`.
///
/// Box–Muller on two hashed lanes; lane pairing is `(2 ctr, 2 ctr + 1)` so
/// consecutive counters never share bits.
#[inline]
pub fn normal(key: u64, idx: u64, ctr: u64) -> f64 {
    let u1 = uniform_open(hash3(key, idx, 2 * ctr));
    let u2 = uniform(hash3(key, idx, 2 * ctr + 1));
    (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
}

/// Unbiased integer in `[0, bound)` from a hashed word (Lemire reduction,
/// accepting the negligible modulo bias at 64 bits).
#[inline]
pub fn bounded(bits: u64, bound: usize) -> usize {
    ((bits as u128 * bound as u128) >> 64) as usize
}

/// Deterministic Fisher–Yates shuffle keyed by `seed`.
pub fn shuffle<T>(items: &mut [T], seed: u64) {
    for i in (1..items.len()).rev() {
        let j = bounded(hash3(seed, domain::SHUFFLE, i as u64), i + 1);
        items.swap(i, j);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_deterministic() {
        assert_eq!(hash3(1, 2, 3), hash3(1, 2, 3));
        assert_ne!(hash3(1, 2, 3), hash3(1, 3, 2));
        assert_ne!(hash3(0, 0, 0), hash3(0, 0, 1));
    }

    #[test]
    fn uniform_stays_in_unit_interval() {
        for k in 0..10_000u64 {
            let u = uniform(hash3(42, 0, k));
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn normal_moments_are_plausible() {
        let n = 200_000u64;
        let (mut s1, mut s2) = (0.0, 0.0);
        for k in 0..n {
            let z = normal(7, 0, k);
            s1 += z;
            s2 += z * z;
        }
        let mean = s1 / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }

    #[test]
    fn shuffle_is_a_permutation() {
        let mut v: Vec<u32> = (0..100).collect();
        shuffle(&mut v, 99);
        let mut w = v.clone();
        w.sort_unstable();
        assert_eq!(w, (0..100).collect::<Vec<_>>());
        let mut v2: Vec<u32> = (0..100).collect();
        shuffle(&mut v2, 99);
        assert_eq!(v, v2);
    }
}
