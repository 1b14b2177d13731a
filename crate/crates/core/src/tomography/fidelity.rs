//! Overlap of reconstructed states with W-type targets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{DensityOperator, StateVector};
use crate::models::WStateSpec;

use super::coherence::OffDiagonalEstimate;

/// `<ψ|ρ|ψ>`.
pub fn fidelity(rho: &DensityOperator, target: &StateVector) -> Result<f64> {
    if rho.space() != target.space() {
        return Err(Error::DimensionMismatch { expected: rho.space().dim(), found: target.space().dim() });
    }
    let v = target.amplitudes();
    Ok(v.dotc(&(rho.matrix() * v)).re)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelityEstimate {
    pub value: f64,
    pub error: f64,
}

/// Fidelity with a W-type target computed on the single-photon block
/// normalized to unit trace:
/// `F = (Σ w_i² p_i + 2 Σ_{i<j} w_i w_j Re d_ij) / Σ p_i`, with
/// first-order error propagation from the diagonal and coherence errors.
pub fn subspace_fidelity(
    singles: &[f64],
    singles_err: &[f64],
    pairs: &[OffDiagonalEstimate],
    target: &WStateSpec,
) -> Result<FidelityEstimate> {
    let w = target.amplitudes()?;
    let n = w.len();
    if singles.len() != n || singles_err.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: singles.len() });
    }
    let mass: f64 = singles.iter().sum();
    if !(mass > 0.0) {
        return Err(Error::NotNormalizable);
    }
    let mut num: f64 = w.iter().zip(singles).map(|(wi, p)| wi * wi * p).sum();
    for est in pairs {
        let (i, j) = est.pair;
        if i >= n || j >= n || i == j {
            return Err(Error::ModeOutOfRange { index: i.max(j), num_modes: n });
        }
        num += 2.0 * w[i] * w[j] * est.value().re;
    }
    let f = num / mass;
    let mut var = 0.0;
    for k in 0..n {
        var += ((w[k] * w[k] - f) / mass * singles_err[k]).powi(2);
    }
    for est in pairs {
        let (i, j) = est.pair;
        var += (2.0 * w[i] * w[j] / mass * est.real_err()).powi(2);
    }
    Ok(FidelityEstimate { value: f, error: var.sqrt() })
}
