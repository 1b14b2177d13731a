//! Parametric Poisson bootstrap over every count cell.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::counting::{CountTable, FringeDataset};
use crate::error::{Error, Result};

use super::reconstruct::{analyze, phase_diff, Analysis, MeasurementData, PairSweep, ReconstructionOptions, SinglesSweep};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub seed: u64,
    pub replicates: usize,
    /// Replicates whose reconstruction failed and were left out.
    pub failed: usize,
}

fn draw(mean: f64, rng: &mut ChaCha8Rng) -> f64 {
    if !(mean > 0.0) {
        return 0.0;
    }
    Poisson::new(mean).map(|d| d.sample(rng)).unwrap_or(mean)
}

/// Every exclusive cell, including heralds without clicks, drawn from a
/// Poisson law with the observed count as mean; the shot number follows.
pub fn resample_table(table: &CountTable, rng: &mut ChaCha8Rng) -> CountTable {
    let mut out = table.clone();
    for row in &mut out.rows {
        for c in row.exclusive.iter_mut() {
            *c = draw(*c, rng);
        }
        row.shots = row.exclusive.iter().sum();
    }
    out
}

fn resample_dataset(data: &FringeDataset, rng: &mut ChaCha8Rng) -> FringeDataset {
    FringeDataset { signal: resample_table(&data.signal, rng), background: resample_table(&data.background, rng) }
}

/// Replicate `index` of the data under `seed`.
pub fn resample(data: &MeasurementData, seed: u64, index: u64) -> MeasurementData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    MeasurementData {
        diagonals: resample_table(&data.diagonals, &mut rng),
        pairs: data.pairs.iter().map(|p| PairSweep { pair: p.pair, data: resample_dataset(&p.data, &mut rng) }).collect(),
        singles: data
            .singles
            .iter()
            .map(|s| SinglesSweep { channel: s.channel, data: resample_dataset(&s.data, &mut rng) })
            .collect(),
    }
}

fn std_dev(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Phase spread around the point estimate.
fn phase_std(values: &[f64], center: f64) -> f64 {
    let diffs: Vec<f64> = values.iter().map(|v| phase_diff(*v, center)).collect();
    std_dev(&diffs)
}

/// Replaces the propagated errors of `analysis` with bootstrap standard
/// deviations.
pub(crate) fn bootstrap_errors(
    data: &MeasurementData,
    options: &ReconstructionOptions,
    analysis: &mut Analysis,
    seed: u64,
    replicates: usize,
) -> Result<BootstrapSummary> {
    if replicates < 2 {
        return Err(Error::InvalidParameter(format!("bootstrap needs at least 2 replicates, got {replicates}")));
    }
    let runs: Vec<Option<Analysis>> =
        (0..replicates as u64).into_par_iter().map(|b| analyze(&resample(data, seed, b), options).ok()).collect();
    let ok: Vec<&Analysis> = runs.iter().flatten().collect();
    let failed = replicates - ok.len();
    if ok.len() < 2 {
        return Err(Error::Degenerate(format!("only {} of {replicates} bootstrap replicates succeeded", ok.len())));
    }
    let collect = |f: &dyn Fn(&Analysis) -> f64| -> Vec<f64> { ok.iter().map(|a| f(a)).collect() };

    for (k, pair) in analysis.pairs.iter_mut().enumerate() {
        pair.estimate.magnitude_err = std_dev(&collect(&|a| a.pairs[k].estimate.magnitude));
        pair.estimate.phase_err = phase_std(&collect(&|a| a.pairs[k].estimate.phase), pair.estimate.phase);
        if let Some(c) = pair.corrected.as_mut() {
            c.magnitude_err = std_dev(&collect(&|a| a.pairs[k].corrected.as_ref().map_or(0.0, |c| c.magnitude)));
            c.phase_err = pair.estimate.phase_err;
        }
    }
    for (k, v) in analysis.vacuum.iter_mut().enumerate() {
        let re = collect(&|a| a.vacuum[k].estimate.value[0]);
        let im = collect(&|a| a.vacuum[k].estimate.value[1]);
        let (mr, mi) = (re.iter().sum::<f64>() / re.len() as f64, im.iter().sum::<f64>() / im.len() as f64);
        let m = re.len() as f64 - 1.0;
        let cov_ri = re.iter().zip(&im).map(|(r, i)| (r - mr) * (i - mi)).sum::<f64>() / m;
        let (sr, si) = (std_dev(&re), std_dev(&im));
        v.estimate.covariance = [[sr * sr, cov_ri], [cov_ri, si * si]];
        v.estimate.magnitude_err = std_dev(&collect(&|a| a.vacuum[k].estimate.magnitude));
        v.estimate.phase_err = phase_std(&collect(&|a| a.vacuum[k].estimate.phase), v.estimate.phase);
    }
    for (k, (raw, corrected)) in analysis.fidelities.iter_mut().enumerate() {
        raw.error = std_dev(&collect(&|a| a.fidelities[k].0.value));
        if let Some(c) = corrected.as_mut() {
            c.error = std_dev(&collect(&|a| a.fidelities[k].1.map_or(0.0, |c| c.value)));
        }
    }
    let keys: Vec<String> = analysis.diagonals.probabilities.keys().cloned().collect();
    for key in keys {
        let err = std_dev(&collect(&|a| a.diagonals.probabilities.get(&key).copied().unwrap_or(0.0)));
        analysis.diagonals.std_errors.insert(key, err);
    }
    analysis.diagonals.two_photon_mass_err = std_dev(&collect(&|a| a.diagonals.two_photon_mass));
    Ok(BootstrapSummary { seed, replicates, failed })
}
