//! Coherence magnitudes and phases from fitted fringes.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::detection::wrap_phase;
use crate::error::{Error, Result};

/// `|d| = V (r p_i + p_j) / (2√r)`.
pub fn coherence_from_visibility(v: f64, p_i: f64, p_j: f64, r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::InvalidParameter(format!("intensity ratio {r} must be positive")));
    }
    Ok(v * (r * p_i + p_j) / (2.0 * r.sqrt()))
}

/// First-order standard error of `coherence_from_visibility`, treating the
/// three inputs as independent.
pub fn coherence_from_visibility_err(v: f64, v_err: f64, p_i: f64, p_i_err: f64, p_j: f64, p_j_err: f64, r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::InvalidParameter(format!("intensity ratio {r} must be positive")));
    }
    let sr = r.sqrt();
    let dv = (r * p_i + p_j) / (2.0 * sr);
    let dpi = v * r / (2.0 * sr);
    let dpj = v / (2.0 * sr);
    Ok(((dv * v_err).powi(2) + (dpi * p_i_err).powi(2) + (dpj * p_j_err).powi(2)).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffDiagonalEstimate {
    pub pair: (usize, usize),
    pub magnitude: f64,
    pub magnitude_err: f64,
    /// Phase of `d_ij` in `(-π, π]` under the recorded gauge.
    pub phase: f64,
    pub phase_err: f64,
    /// Magnitude exceeds `sqrt(p_i p_j)` of the diagonal estimate.
    #[serde(default)]
    pub exceeds_bound: bool,
    #[serde(default)]
    pub mode_match_corrected: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overlaps: Option<(f64, f64)>,
}

impl OffDiagonalEstimate {
    pub fn value(&self) -> Complex64 {
        Complex64::from_polar(self.magnitude, self.phase)
    }

    /// Standard error of `Re d`.
    pub fn real_err(&self) -> f64 {
        let (c, s) = (self.phase.cos(), self.phase.sin());
        ((c * self.magnitude_err).powi(2) + (self.magnitude * s * self.phase_err).powi(2)).sqrt()
    }
}

/// Undoes the reduction of the interference term by imperfect mode overlap.
pub fn mode_match_correct(est: &OffDiagonalEstimate, v_i: f64, v_j: f64) -> Result<OffDiagonalEstimate> {
    for v in [v_i, v_j] {
        if !(v > 0.0 && v <= 1.0) {
            return Err(Error::InvalidParameter(format!("mode overlap {v} outside (0, 1]")));
        }
    }
    let f = (v_i * v_j).sqrt();
    Ok(OffDiagonalEstimate {
        magnitude: est.magnitude / f,
        magnitude_err: est.magnitude_err / f,
        mode_match_corrected: true,
        overlaps: Some((v_i, v_j)),
        ..est.clone()
    })
}

/// How fringe phases are turned into coherence phases.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PhaseConvention {
    /// Oscillator phases are known absolutely.
    #[default]
    Absolute,
    /// The first `N - 1` pairs of the pair order, which must connect every
    /// mode, are declared to have zero phase.
    ReferencePairs,
    /// Known per-channel phase offsets of the oscillators.
    ChannelOffsets { offsets: Vec<f64> },
}

/// Fringe phase and its error for one pair; the fringe variable is
/// `φ_i - φ_j` of the nominal oscillator phases.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairPhase {
    pub pair: (usize, usize),
    pub theta0: f64,
    pub err: f64,
}

/// Channel offsets `o` (with `o_0 = 0`) such that the true oscillator
/// phase is the nominal phase plus `o`, together with each offset's
/// variance; only differences of offsets matter.
pub fn solve_offsets(convention: &PhaseConvention, num_modes: usize, phases: &[PairPhase]) -> Result<(Vec<f64>, Vec<f64>)> {
    match convention {
        PhaseConvention::Absolute => Ok((vec![0.0; num_modes], vec![0.0; num_modes])),
        PhaseConvention::ChannelOffsets { offsets } => {
            if offsets.len() != num_modes {
                return Err(Error::DimensionMismatch { expected: num_modes, found: offsets.len() });
            }
            Ok((offsets.clone(), vec![0.0; num_modes]))
        }
        PhaseConvention::ReferencePairs => {
            if num_modes < 2 {
                return Ok((vec![0.0; num_modes], vec![0.0; num_modes]));
            }
            if phases.len() < num_modes - 1 {
                return Err(Error::InvalidParameter("not enough reference pairs".into()));
            }
            // θ_ij = θ₀ + o_i - o_j = 0 on the reference pairs
            let refs = &phases[..num_modes - 1];
            let mut offset: Vec<Option<(f64, f64)>> = vec![None; num_modes];
            offset[0] = Some((0.0, 0.0));
            for _ in 0..num_modes {
                for p in refs {
                    let (i, j) = p.pair;
                    match (offset[i], offset[j]) {
                        (Some((oi, vi)), None) => offset[j] = Some((oi + p.theta0, vi + p.err * p.err)),
                        (None, Some((oj, vj))) => offset[i] = Some((oj - p.theta0, vj + p.err * p.err)),
                        _ => {}
                    }
                }
            }
            if offset.iter().any(Option::is_none) {
                return Err(Error::InvalidParameter("reference pairs do not connect every mode".into()));
            }
            let (o, v) = offset.into_iter().map(Option::unwrap).unzip();
            Ok((o, v))
        }
    }
}

/// Phase of `d_ij` from its fringe phase under the given offsets, with its
/// standard error. Reference pairs come out as exactly zero. The offset
/// variance uses the tree path from mode 0, exact when one mode lies on the
/// other's path (always true for a chain of reference pairs).
pub fn assign_phase(p: &PairPhase, offsets: &(Vec<f64>, Vec<f64>), is_reference: bool) -> (f64, f64) {
    if is_reference {
        return (0.0, 0.0);
    }
    let (i, j) = p.pair;
    let (o, v) = offsets;
    let theta = wrap_phase(p.theta0 + o[i] - o[j]);
    (theta, (p.err * p.err + (v[i] - v[j]).abs()).sqrt())
}

/// Sum `θ_ij + θ_jk - θ_ik` over a triangle, wrapped to `(-π, π]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleCheck {
    pub modes: (usize, usize, usize),
    pub residual: f64,
    pub sigma: f64,
}

pub fn cycle_checks(phases: &BTreeMap<(usize, usize), (f64, f64)>, num_modes: usize) -> Vec<CycleCheck> {
    let mut out = Vec::new();
    for i in 0..num_modes {
        for j in (i + 1)..num_modes {
            for k in (j + 1)..num_modes {
                if let (Some(a), Some(b), Some(c)) = (phases.get(&(i, j)), phases.get(&(j, k)), phases.get(&(i, k))) {
                    out.push(CycleCheck {
                        modes: (i, j, k),
                        residual: wrap_phase(a.0 + b.0 - c.0),
                        sigma: (a.1 * a.1 + b.1 * b.1 + c.1 * c.1).sqrt(),
                    });
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VacuumCoherenceEstimate {
    pub channel: usize,
    /// `<0|ρ|1_k>` as `[re, im]`.
    pub value: [f64; 2],
    pub magnitude: f64,
    pub magnitude_err: f64,
    pub phase: f64,
    pub phase_err: f64,
    /// Covariance of `(Re, Im)`.
    pub covariance: [[f64; 2]; 2],
}

impl VacuumCoherenceEstimate {
    pub fn complex(&self) -> Complex64 {
        Complex64::new(self.value[0], self.value[1])
    }
}

/// Vacuum coherence of channel `k` from the fit of its net singles against
/// the absolute oscillator phase `φ_k`: the fringe is
/// `shots·η|α| Re(e^{iφ} d)`, so `a = c Re d` and `b = -c Im d`.
pub fn vacuum_coherence_from_fit(
    channel: usize,
    fit: &super::fit::FringeFit,
    shots: f64,
    efficiency: f64,
    lo_magnitude: f64,
    offset: f64,
) -> Result<VacuumCoherenceEstimate> {
    let c = shots * efficiency * lo_magnitude;
    if !(c > 0.0) {
        return Err(Error::Degenerate(format!("channel {channel} has no oscillator or no efficiency")));
    }
    let (a, b) = fit.phasor();
    let lc = fit.linear_covariance;
    // offset rotates the phase: the true φ is nominal + offset
    let raw = Complex64::new(a / c, -b / c);
    let rot = Complex64::from_polar(1.0, -offset);
    let d = raw * rot;
    // covariance of (Re raw, Im raw) then rotated
    let cov_raw = [[lc[1][1] / (c * c), -lc[1][2] / (c * c)], [-lc[2][1] / (c * c), lc[2][2] / (c * c)]];
    let (cs, sn) = (rot.re, rot.im);
    let r = [[cs, -sn], [sn, cs]];
    let mut cov = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    cov[i][j] += r[i][k] * cov_raw[k][l] * r[j][l];
                }
            }
        }
    }
    let mag = d.norm();
    let (mag_err, phase_err) = if mag > 0.0 {
        let (u, w) = (d.re / mag, d.im / mag);
        let var_m = u * u * cov[0][0] + 2.0 * u * w * cov[0][1] + w * w * cov[1][1];
        let var_p = (w * w * cov[0][0] - 2.0 * u * w * cov[0][1] + u * u * cov[1][1]) / (mag * mag);
        (var_m.max(0.0).sqrt(), var_p.max(0.0).sqrt())
    } else {
        ((cov[0][0] + cov[1][1]).max(0.0).sqrt(), f64::INFINITY)
    };
    Ok(VacuumCoherenceEstimate {
        channel,
        value: [d.re, d.im],
        magnitude: mag,
        magnitude_err: mag_err,
        phase: d.arg(),
        phase_err,
        covariance: cov,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::visibility_analytic;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn inversion_examples() {
        assert_abs_diff_eq!(coherence_from_visibility(1.0, 1.0 / 3.0, 1.0 / 3.0, 1.0).unwrap(), 1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(coherence_from_visibility(0.0, 0.2, 0.1, 2.0).unwrap(), 0.0);
        let v = visibility_analytic(0.1, 0.2, 4.0, 0.1).unwrap();
        assert_abs_diff_eq!(coherence_from_visibility(v, 0.1, 0.2, 4.0).unwrap(), 0.1, epsilon = 1e-15);
        assert!(coherence_from_visibility(0.5, 0.1, 0.1, 0.0).is_err());
    }

    #[test]
    fn mode_match_identity_and_errors() {
        let est = OffDiagonalEstimate {
            pair: (0, 1),
            magnitude: 0.2,
            magnitude_err: 0.01,
            phase: 0.3,
            phase_err: 0.02,
            exceeds_bound: false,
            mode_match_corrected: false,
            overlaps: None,
        };
        let same = mode_match_correct(&est, 1.0, 1.0).unwrap();
        assert_eq!(same.magnitude, 0.2);
        assert_eq!(same.phase, 0.3);
        assert!(same.mode_match_corrected);
        assert!(mode_match_correct(&est, 0.0, 1.0).is_err());
        let c = mode_match_correct(&est, 0.81, 0.81).unwrap();
        assert_abs_diff_eq!(c.magnitude, 0.2 / 0.81, epsilon = 1e-15);
    }

    #[test]
    fn reference_pairs_zero_and_propagate() {
        let phases = [
            PairPhase { pair: (0, 1), theta0: 0.4, err: 0.01 },
            PairPhase { pair: (1, 2), theta0: -0.2, err: 0.02 },
            PairPhase { pair: (0, 2), theta0: 0.5, err: 0.03 },
        ];
        let conv = PhaseConvention::ReferencePairs;
        let offs = solve_offsets(&conv, 3, &phases).unwrap();
        assert_abs_diff_eq!(assign_phase(&phases[1], &offs, false).0, 0.0, epsilon = 1e-15);
        assert_eq!(assign_phase(&phases[0], &offs, true), (0.0, 0.0));
        let (t, e) = assign_phase(&phases[2], &offs, false);
        assert_abs_diff_eq!(t, 0.5 - 0.4 + 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(e, (0.01f64.powi(2) + 0.02f64.powi(2) + 0.03f64.powi(2)).sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn reference_pairs_must_connect() {
        let phases = [PairPhase { pair: (0, 1), theta0: 0.0, err: 0.0 }, PairPhase { pair: (0, 1), theta0: 0.0, err: 0.0 }];
        assert!(solve_offsets(&PhaseConvention::ReferencePairs, 3, &phases).is_err());
    }

    #[test]
    fn cycle_of_consistent_phases_is_zero() {
        let mut m = BTreeMap::new();
        m.insert((0, 1), (PI, 0.1));
        m.insert((1, 2), (0.0, 0.1));
        m.insert((0, 2), (-PI, 0.1));
        let c = cycle_checks(&m, 3);
        assert_eq!(c.len(), 1);
        assert_abs_diff_eq!(c[0].residual, 0.0, epsilon = 1e-15);
    }
}
