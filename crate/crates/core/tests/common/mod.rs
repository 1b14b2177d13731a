//! Random states and setups shared by the integration tests.
#![allow(dead_code)]

use num_complex::Complex64;
use pathtomo::detection::LocalOscillatorConfig;
use pathtomo::fock::{CMatrix, DensityOperator, FockSpace};
use pathtomo::models::StructuredState;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gaussish(rng: &mut ChaCha8Rng) -> f64 {
    // sum of uniforms is enough for a generic full-rank matrix
    (0..4).map(|_| rng.random::<f64>() - 0.5).sum()
}

/// Random density matrix supported on vacuum plus the `n` single-photon
/// kets, embedded at `cutoff`. `rank` columns feed `G G†`.
pub fn random_single_photon_density(n: usize, cutoff: usize, rank: usize, rng: &mut ChaCha8Rng) -> DensityOperator {
    let space = FockSpace::new(n, cutoff).unwrap();
    let d = n + 1;
    let g = CMatrix::from_fn(d, rank, |_, _| Complex64::new(gaussish(rng), gaussish(rng)));
    let block = &g * g.adjoint();
    let tr = block.trace().re;
    let mut idx = vec![space.index_of(&vec![0; n]).unwrap()];
    for k in 0..n {
        let mut occ = vec![0; n];
        occ[k] = 1;
        idx.push(space.index_of(&occ).unwrap());
    }
    let mut m = CMatrix::zeros(space.dim(), space.dim());
    for r in 0..d {
        for c in 0..d {
            m[(idx[r], idx[c])] = block[(r, c)] / tr;
        }
    }
    DensityOperator::new(space, m).unwrap()
}

pub fn random_model(n: usize, rng: &mut ChaCha8Rng) -> StructuredState {
    let rank = rng.random_range(1..=n + 1);
    let rho = random_single_photon_density(n, 1, rank, rng);
    StructuredState::extract_structure(&rho).unwrap().model
}

/// Random model without vacuum coherences: a random single-photon state
/// mixed with vacuum.
pub fn random_heralded_model(n: usize, rng: &mut ChaCha8Rng) -> StructuredState {
    let mut m = random_model(n, rng);
    m.vacuum_coherences.clear();
    m
}

pub fn random_lo(n: usize, max_mag: f64, rng: &mut ChaCha8Rng) -> LocalOscillatorConfig {
    let mags = (0..n).map(|_| max_mag * (0.1 + 0.9 * rng.random::<f64>())).collect();
    let phases = (0..n).map(|_| 2.0 * PI * rng.random::<f64>()).collect();
    LocalOscillatorConfig::new(mags, phases).unwrap()
}
