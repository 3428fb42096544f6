#![allow(dead_code)]

pub mod oracle;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<Complex64> {
    (0..rows * cols)
        .map(|_| Complex64::new(StandardNormal.sample(rng), StandardNormal.sample(rng)))
        .collect()
}

pub fn random_scale(rng: &mut ChaCha8Rng) -> Complex64 {
    let mag = 10f64.powf(rng.random_range(-6.0..6.0));
    Complex64::from_polar(mag, rng.random_range(0.0..std::f64::consts::TAU))
}
