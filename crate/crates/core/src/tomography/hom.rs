//! Mode-overlap calibration from two-photon interference between the
//! heralded photon and a weak oscillator.
//!
//! The coincidences normalized to the oscillator-only baseline follow
//! `N_cc(M) = 1 + 2 n_ph (1 - M)`, where `n_ph` is the photon-number ratio
//! of signal to oscillator and `M` the mode overlap. Far from the dip
//! `M = 0`, and the depth of the dip divided by the full gap `2 n_ph` is the
//! overlap at the dip.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomResult {
    pub n_ph: f64,
    /// `N_cc(0) - N_cc(1)`.
    pub gap: f64,
    /// Plateau minus the dip minimum.
    pub depth: f64,
    pub m_dip: f64,
    pub dip_delay: f64,
    pub plateau: f64,
    pub normalized: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomOptions {
    /// Points at least this far from the dip form the plateau.
    pub plateau_distance: f64,
}

/// `M_dip = Δ / gap`.
pub fn m_dip_from_gap(gap: f64, depth: f64) -> Result<f64> {
    if !(gap > 0.0) {
        return Err(Error::Degenerate(format!("gap {gap} must be positive")));
    }
    Ok(depth / gap)
}

/// Normalized coincidences for a known overlap.
pub fn hom_normalized(n_ph: f64, overlap: f64) -> f64 {
    1.0 + 2.0 * n_ph * (1.0 - overlap)
}

pub fn hom_analyze(delays: &[f64], counts: &[f64], baseline: &[f64], options: HomOptions) -> Result<HomResult> {
    if delays.len() != counts.len() || delays.len() != baseline.len() {
        return Err(Error::DimensionMismatch { expected: delays.len(), found: counts.len().min(baseline.len()) });
    }
    if delays.is_empty() {
        return Err(Error::Degenerate("no delay points".into()));
    }
    if let Some(b) = baseline.iter().find(|b| !(**b > 0.0)) {
        return Err(Error::Degenerate(format!("baseline count {b} is not positive")));
    }
    let normalized: Vec<f64> = counts.iter().zip(baseline).map(|(c, b)| c / b).collect();
    let (dip_idx, &dip_value) = normalized
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty");
    let dip_delay = delays[dip_idx];
    let plateau_points: Vec<f64> = delays
        .iter()
        .zip(&normalized)
        .filter(|(d, _)| (*d - dip_delay).abs() >= options.plateau_distance)
        .map(|(_, n)| *n)
        .collect();
    if plateau_points.is_empty() {
        return Err(Error::Degenerate("no points far enough from the dip to form a plateau".into()));
    }
    let plateau = plateau_points.iter().sum::<f64>() / plateau_points.len() as f64;
    let gap = plateau - 1.0;
    let depth = plateau - dip_value;
    let m_dip = m_dip_from_gap(gap, depth)?;
    Ok(HomResult { n_ph: gap / 2.0, gap, depth, m_dip, dip_delay, plateau, normalized })
}
