#![allow(dead_code)]

use clubgood::economy::Economy;
use clubgood::verification::random_regular_economy;
use rand::Rng;

pub fn random_economy<R: Rng>(rng: &mut R, n: usize) -> Economy {
    random_regular_economy(rng, n).unwrap()
}

pub fn random_profile<R: Rng>(rng: &mut R, economy: &Economy) -> Vec<f64> {
    (0..economy.n()).map(|_| rng.gen_range(0.0..=economy.upper())).collect()
}
