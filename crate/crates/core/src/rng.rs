//! Seeded pseudo-random numbers.
//!
//! The generator is PCG64 (XSL-RR 128/64, `rand_pcg::Pcg64`):
//!
//! ```text
//! state  <- state * 0x2360ed051fc65da44385df649fccf645 + increment   (mod 2^128)
//! output =  rotate_right((state >> 64) ^ state as u64, state >> 122)
//! ```
//!
//! with the output taken from the state *after* the update and
//! `increment = 2 * STREAM + 1`. A seed `s` starts from
//! `state = (s as u128 ^ SEED_MIX) + increment` followed by one update.
//! Uniform reals use the top 53 bits of one output: `(x >> 11) * 2^-53`,
//! which lies in `[0, 1)`.

use rand_core::Rng as _;
use rand_pcg::Pcg64;

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

const SEED_MIX: u128 = 0x9e37_79b9_7f4a_7c15_f39c_c060_5ced_c834;
const STREAM: u128 = 0xa02b_dbf7_bb3c_0a7a_c28f_a16a_64ab_f96f;

#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: Pcg64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            seed,
            inner: Pcg64::new(seed as u128 ^ SEED_MIX, STREAM),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent generator derived from this seed and a label.
    pub fn derive(seed: u64, label: u64) -> Self {
        // splitmix64 finalizer keeps nearby labels far apart.
        let mut z = seed ^ label.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        Rng::new(z ^ (z >> 31))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, bound)` by rejection (no modulo bias).
    pub fn below(&mut self, bound: usize) -> usize {
        assert!(bound > 0, "bound must be positive");
        let bound = bound as u64;
        let zone = u64::MAX - (u64::MAX % bound);
        loop {
            let x = self.next_u64();
            if x < zone {
                return (x % bound) as usize;
            }
        }
    }

    /// Fisher-Yates shuffle, walking from the back.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        self.shuffle(&mut p);
        p
    }
}

pub fn random_uniform<T: Real>(rng: &mut Rng, shape: &[usize], low: f64, high: f64) -> Result<Tensor<T>> {
    if !(low < high) {
        return Err(Error::invalid(format!(
            "random_uniform requires low < high, got [{low}, {high})"
        )));
    }
    let mut data = Vec::with_capacity(shape.iter().product());
    for _ in 0..shape.iter().product::<usize>() {
        let mut v = T::of(low + (high - low) * rng.next_f64());
        // Rounding to f32 can land exactly on `high`.
        if v >= T::of(high) {
            v = T::of(low).max(T::of(high).prev_below());
        }
        data.push(v);
    }
    Tensor::new(shape.to_vec(), data)
}

trait PrevBelow {
    fn prev_below(self) -> Self;
}

impl<T: Real> PrevBelow for T {
    fn prev_below(self) -> Self {
        let eps = T::epsilon() * self.abs().max(T::min_positive_value());
        self - eps
    }
}
