//! Click probabilities for signal modes mixed with weak local oscillators.
//!
//! Channel `k` observes output port 1 of a balanced beamsplitter whose
//! inputs are signal mode `k` and a coherent local oscillator, so the
//! detected field is `(a_k + a_LO)/√2`. Closed forms below keep terms up to
//! the single-photon block; the exact routines evaluate the same quantities
//! by explicit Fock-space algebra.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{
    coherent_state, cutoff_for_tail, poisson_tail, two_mode_beamsplitter, CMatrix, CVector, DensityOperator,
    FockSpace, StateVector,
};
use crate::models::StructuredState;

/// Largest truncated Poisson tail accepted by the exact oracles.
pub const ORACLE_TAIL_LIMIT: f64 = 1e-9;
/// Poisson tail targeted when the simulator picks its own truncation.
pub const ENGINE_TAIL: f64 = 1e-12;

/// Wraps an angle into `(-π, π]`.
pub fn wrap_phase(x: f64) -> f64 {
    let mut y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y -= 2.0 * PI;
    }
    y
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalOscillatorConfig {
    pub magnitudes: Vec<f64>,
    #[serde(default)]
    pub phases: Vec<f64>,
    /// Spectral/temporal overlap of each oscillator with its signal mode.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mode_overlaps: Vec<f64>,
}

impl LocalOscillatorConfig {
    pub fn new(magnitudes: Vec<f64>, phases: Vec<f64>) -> Result<Self> {
        let lo = LocalOscillatorConfig { magnitudes, phases, mode_overlaps: Vec::new() };
        lo.validate(lo.magnitudes.len())?;
        Ok(lo.normalized_phases())
    }

    pub fn off(num_channels: usize) -> Self {
        LocalOscillatorConfig { magnitudes: vec![0.0; num_channels], phases: Vec::new(), mode_overlaps: Vec::new() }
    }

    pub fn uniform(num_channels: usize, magnitude: f64) -> Self {
        LocalOscillatorConfig {
            magnitudes: vec![magnitude; num_channels],
            phases: Vec::new(),
            mode_overlaps: Vec::new(),
        }
    }

    pub fn num_channels(&self) -> usize {
        self.magnitudes.len()
    }

    pub fn magnitude(&self, ch: usize) -> f64 {
        self.magnitudes[ch]
    }

    pub fn phase(&self, ch: usize) -> f64 {
        self.phases.get(ch).copied().unwrap_or(0.0)
    }

    pub fn overlap(&self, ch: usize) -> f64 {
        self.mode_overlaps.get(ch).copied().unwrap_or(1.0)
    }

    pub fn amplitude(&self, ch: usize) -> Complex64 {
        Complex64::from_polar(self.magnitude(ch), self.phase(ch))
    }

    /// `r = |β|²/|α|²` with `α` on channel `i` and `β` on channel `j`.
    pub fn intensity_ratio(&self, i: usize, j: usize) -> Result<f64> {
        let a = self.magnitude(i).powi(2);
        if a == 0.0 {
            return Err(Error::InvalidParameter(format!("oscillator on channel {i} is off")));
        }
        Ok(self.magnitude(j).powi(2) / a)
    }

    pub fn with_phases(&self, phases: &[f64]) -> Self {
        LocalOscillatorConfig { phases: phases.iter().map(|&p| wrap_phase(p)).collect(), ..self.clone() }
    }

    pub fn with_overlaps(&self, overlaps: Vec<f64>) -> Self {
        LocalOscillatorConfig { mode_overlaps: overlaps, ..self.clone() }
    }

    /// Same oscillators with every magnitude set to zero.
    pub fn switched_off(&self) -> Self {
        LocalOscillatorConfig { magnitudes: vec![0.0; self.num_channels()], ..self.clone() }
    }

    fn normalized_phases(mut self) -> Self {
        for p in &mut self.phases {
            *p = wrap_phase(*p);
        }
        self
    }

    pub fn validate(&self, num_channels: usize) -> Result<()> {
        if self.magnitudes.len() != num_channels {
            return Err(Error::DimensionMismatch { expected: num_channels, found: self.magnitudes.len() });
        }
        if !self.phases.is_empty() && self.phases.len() != num_channels {
            return Err(Error::DimensionMismatch { expected: num_channels, found: self.phases.len() });
        }
        if !self.mode_overlaps.is_empty() && self.mode_overlaps.len() != num_channels {
            return Err(Error::DimensionMismatch { expected: num_channels, found: self.mode_overlaps.len() });
        }
        if let Some(m) = self.magnitudes.iter().find(|m| !m.is_finite() || **m < 0.0) {
            return Err(Error::InvalidParameter(format!("oscillator magnitude {m} is negative")));
        }
        if let Some(p) = self.phases.iter().find(|p| !p.is_finite()) {
            return Err(Error::InvalidParameter(format!("oscillator phase {p} is not finite")));
        }
        if let Some(m) = self.mode_overlaps.iter().find(|m| !(0.0..=1.0).contains(*m)) {
            return Err(Error::InvalidParameter(format!("mode overlap {m} outside [0, 1]")));
        }
        Ok(())
    }
}

/// Threshold detectors, one per channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    pub efficiencies: Vec<f64>,
    /// Probability of an uncorrelated accidental click per herald.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub background: Vec<f64>,
}

impl DetectorModel {
    pub fn uniform(num_channels: usize, efficiency: f64) -> Self {
        DetectorModel { efficiencies: vec![efficiency; num_channels], background: Vec::new() }
    }

    pub fn num_channels(&self) -> usize {
        self.efficiencies.len()
    }

    pub fn efficiency(&self, ch: usize) -> f64 {
        self.efficiencies[ch]
    }

    pub fn background(&self, ch: usize) -> f64 {
        self.background.get(ch).copied().unwrap_or(0.0)
    }

    pub fn validate(&self, num_channels: usize) -> Result<()> {
        if self.efficiencies.len() != num_channels {
            return Err(Error::DimensionMismatch { expected: num_channels, found: self.efficiencies.len() });
        }
        if !self.background.is_empty() && self.background.len() != num_channels {
            return Err(Error::DimensionMismatch { expected: num_channels, found: self.background.len() });
        }
        for v in self.efficiencies.iter().chain(&self.background) {
            if !(0.0..=1.0).contains(v) {
                return Err(Error::InvalidParameter(format!("detector probability {v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceBreakdown {
    /// Phase-independent part.
    pub p_nif: f64,
    /// Phase-dependent part, may be negative.
    pub p_if: f64,
    pub p_xy: f64,
    /// Oscillator-only offset.
    pub p_coh: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinglesProbabilities {
    pub p_x: f64,
    pub p_y: f64,
}

fn check_channel(model: &StructuredState, ch: usize) -> Result<()> {
    if ch >= model.num_modes() {
        return Err(Error::ModeOutOfRange { index: ch, num_modes: model.num_modes() });
    }
    Ok(())
}

fn check_setup(num: usize, lo: &LocalOscillatorConfig, det: &DetectorModel) -> Result<()> {
    lo.validate(num)?;
    det.validate(num)
}

/// Closed-form coincidence probability between channels `pair.0` (X, with
/// oscillator `α`) and `pair.1` (Y, with `β`). Photon numbers above one are
/// ignored, and the interference terms carry the mode overlaps.
pub fn coincidence_analytic(
    model: &StructuredState,
    pair: (usize, usize),
    lo: &LocalOscillatorConfig,
    det: &DetectorModel,
) -> Result<CoincidenceBreakdown> {
    let (i, j) = pair;
    check_channel(model, i)?;
    check_channel(model, j)?;
    if i == j {
        return Err(Error::DuplicateMode(i));
    }
    check_setup(model.num_modes(), lo, det)?;
    let pre = det.efficiency(i) * det.efficiency(j) / 4.0;
    let (a2, b2) = (lo.magnitude(i).powi(2), lo.magnitude(j).powi(2));
    // matched parts of the oscillators
    let alpha = lo.amplitude(i) * lo.overlap(i).sqrt();
    let beta = lo.amplitude(j) * lo.overlap(j).sqrt();
    let (pi, pj) = (model.p_single(i), model.p_single(j));
    let d = model.coherence(i, j);
    let (di, dj) = (model.vacuum_coherence(i), model.vacuum_coherence(j));

    let p_coh = pre * a2 * b2;
    let p_nif = pre * (a2 * b2 + pi * b2 + pj * a2);
    let p_if = pre * (2.0 * (alpha.conj() * beta * d).re + 2.0 * b2 * (alpha * di).re + 2.0 * a2 * (beta * dj).re);
    Ok(CoincidenceBreakdown { p_nif, p_if, p_xy: p_nif + p_if, p_coh })
}

/// Closed-form click probability of one channel.
pub fn single_channel_analytic(
    model: &StructuredState,
    ch: usize,
    lo: &LocalOscillatorConfig,
    det: &DetectorModel,
) -> Result<f64> {
    check_channel(model, ch)?;
    check_setup(model.num_modes(), lo, det)?;
    let alpha = lo.amplitude(ch) * lo.overlap(ch).sqrt();
    let di = model.vacuum_coherence(ch);
    Ok(det.efficiency(ch) / 2.0 * (lo.magnitude(ch).powi(2) + model.p_single(ch) + 2.0 * (alpha * di).re))
}

pub fn singles_analytic(
    model: &StructuredState,
    pair: (usize, usize),
    lo: &LocalOscillatorConfig,
    det: &DetectorModel,
) -> Result<SinglesProbabilities> {
    Ok(SinglesProbabilities {
        p_x: single_channel_analytic(model, pair.0, lo, det)?,
        p_y: single_channel_analytic(model, pair.1, lo, det)?,
    })
}

/// Fringe visibility of the background-subtracted coincidences,
/// `2√r|d| / (r p₁₀ + p₀₁)`.
pub fn visibility_analytic(p10: f64, p01: f64, r: f64, d_abs: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::InvalidParameter(format!("intensity ratio {r} must be positive")));
    }
    let den = r * p10 + p01;
    if den == 0.0 {
        return Err(Error::Degenerate("zero visibility denominator".into()));
    }
    Ok(2.0 * r.sqrt() * d_abs / den)
}

/// How `coincidence_exact` models detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExactForm {
    /// `η_X η_Y Tr[N_X N_Y ρ_out]`.
    NumberOperator,
    /// Both detectors click, with per-channel element `I - (1-η)^N`.
    Threshold,
}

fn check_tail(lo: &LocalOscillatorConfig, cutoff: usize) -> Result<()> {
    for ch in 0..lo.num_channels() {
        let tail = poisson_tail(lo.magnitude(ch).powi(2), cutoff);
        if tail > ORACLE_TAIL_LIMIT {
            return Err(Error::CutoffTooSmall { cutoff, tail, limit: ORACLE_TAIL_LIMIT });
        }
    }
    Ok(())
}

/// Nonzero entries `(row, col, value)` of a density matrix.
fn support(rho: &DensityOperator) -> Vec<(usize, usize, Complex64)> {
    let m = rho.matrix();
    let mut out = Vec::new();
    for c in 0..m.ncols() {
        for r in 0..m.nrows() {
            let z = m[(r, c)];
            if z != Complex64::default() {
                out.push((r, c, z));
            }
        }
    }
    out
}

/// Exact coincidence probability for a two-mode signal state. Oscillators
/// are appended as two extra modes (order A₁, B₁, A₂, B₂) and truncated at
/// `lo_cutoff`.
pub fn coincidence_exact(
    state: &DensityOperator,
    lo: &LocalOscillatorConfig,
    det: &DetectorModel,
    form: ExactForm,
    lo_cutoff: usize,
) -> Result<f64> {
    if state.space().num_modes() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: state.space().num_modes() });
    }
    check_setup(2, lo, det)?;
    check_tail(lo, lo_cutoff)?;
    match form {
        ExactForm::NumberOperator => number_form(state, lo, det),
        ExactForm::Threshold => threshold_form(state, lo, det, lo_cutoff),
    }
}

/// Trace formula evaluated in the frame where the oscillators are displaced
/// to vacuum: `b_X = (a_A1 + a_A2 + √M α)/√2`. Annihilators never leave
/// the truncated space, so no truncation error enters.
fn number_form(state: &DensityOperator, lo: &LocalOscillatorConfig, det: &DetectorModel) -> Result<f64> {
    let sys = *state.space();
    let space = FockSpace::new(4, sys.cutoff())?;
    let h = 0.5f64.sqrt();
    let apply_b = |v: &StateVector, ch: usize| -> Result<StateVector> {
        let shift = lo.amplitude(ch) * lo.overlap(ch).sqrt();
        Ok(v.annihilate(ch)?.add(&v.annihilate(ch + 2)?)?.add(&v.scale(shift))?.scale(Complex64::new(h, 0.0)))
    };
    let perp: Vec<f64> = (0..2).map(|ch| (1.0 - lo.overlap(ch)) * lo.magnitude(ch).powi(2) / 2.0).collect();

    let mut kets = Vec::with_capacity(sys.dim());
    for k in 0..sys.dim() {
        let mut occ = sys.occupation(k);
        occ.extend([0, 0]);
        let v = StateVector::basis(space, &occ)?;
        let x = apply_b(&v, 0)?;
        let y = apply_b(&v, 1)?;
        let xy = apply_b(&x, 1)?;
        kets.push((x, y, xy));
    }
    let mut acc = Complex64::default();
    for (r, c, z) in support(state) {
        // ρ[r,c] multiplies <ket_c|...|ket_r>
        let (xr, yr, wr) = &kets[r];
        let (xc, yc, wc) = &kets[c];
        let nxy = wc.inner(wr)?;
        let nx = xc.inner(xr)?;
        let ny = yc.inner(yr)?;
        let id = if r == c { 1.0 } else { 0.0 };
        acc += z * (nxy + nx * perp[1] + ny * perp[0] + id * perp[0] * perp[1]);
    }
    Ok(det.efficiency(0) * det.efficiency(1) * acc.re)
}

fn threshold_form(state: &DensityOperator, lo: &LocalOscillatorConfig, det: &DetectorModel, lo_cutoff: usize) -> Result<f64> {
    let sys = *state.space();
    let cutoff = sys.cutoff() + lo_cutoff;
    let space = FockSpace::new(4, cutoff)?;
    let levels = cutoff + 1;
    let coh: Vec<StateVector> = (0..2)
        .map(|ch| coherent_state(lo.amplitude(ch) * lo.overlap(ch).sqrt(), lo_cutoff))
        .collect::<Result<_>>()?;
    let u = two_mode_beamsplitter(cutoff, 0.5)?;

    let mut kets = Vec::with_capacity(sys.dim());
    for k in 0..sys.dim() {
        let occ = sys.occupation(k);
        let mut amps = CVector::zeros(space.dim());
        for (na, a) in coh[0].amplitudes().iter().enumerate() {
            for (nb, b) in coh[1].amplitudes().iter().enumerate() {
                let idx = ((occ[0] * levels + occ[1]) * levels + na) * levels + nb;
                amps[idx] = a * b;
            }
        }
        let v = StateVector::new(space, amps)?
            .apply_local(&u, &[0, 2])?
            .apply_local(&u, &[1, 3])?;
        kets.push(v);
    }
    let no_click: Vec<Vec<f64>> = (0..2)
        .map(|ch| {
            let eta = det.efficiency(ch);
            let perp = (-(eta * (1.0 - lo.overlap(ch)) * lo.magnitude(ch).powi(2) / 2.0)).exp();
            (0..levels).map(|n| (1.0 - eta).powi(n as i32) * perp).collect()
        })
        .collect();
    let weights: Vec<f64> = (0..space.dim())
        .map(|k| (1.0 - no_click[0][space.photons(k, 0)]) * (1.0 - no_click[1][space.photons(k, 1)]))
        .collect();
    let mut acc = Complex64::default();
    for (r, c, z) in support(state) {
        let (vr, vc) = (kets[r].amplitudes(), kets[c].amplitudes());
        let mut g = Complex64::default();
        for k in 0..space.dim() {
            if weights[k] != 0.0 {
                g += vc[k].conj() * vr[k] * weights[k];
            }
        }
        acc += z * g;
    }
    Ok(acc.re)
}

/// Detector response used by the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionRegime {
    /// Threshold detectors: a true probability distribution.
    #[default]
    Threshold,
    /// Click operator `η N`; its inclusive marginals reproduce the trace
    /// formula exactly but the outcome weights may be slightly negative.
    Linear,
}

/// Matrix elements `<φ_m|E|φ_n>` of one channel's click and no-click
/// elements between signal photon numbers `m` (row) and `n` (column).
struct ChannelResponse {
    click: CMatrix,
    no_click: CMatrix,
}

/// Channel response for direct detection of the signal mode, with no
/// beamsplitter in the path.
fn direct_response(sys_cutoff: usize, eta: f64, background: f64, regime: DetectionRegime) -> ChannelResponse {
    let levels = sys_cutoff + 1;
    let diag = CVector::from_iterator(
        levels,
        (0..levels).map(|n| {
            let p = match regime {
                DetectionRegime::Threshold => 1.0 - (1.0 - eta).powi(n as i32),
                DetectionRegime::Linear => eta * n as f64,
            };
            Complex64::new(background + (1.0 - background) * p, 0.0)
        }),
    );
    let click = CMatrix::from_diagonal(&diag);
    let no_click = CMatrix::identity(levels, levels) - &click;
    ChannelResponse { click, no_click }
}

fn interfered_response(
    sys_cutoff: usize,
    alpha: Complex64,
    overlap: f64,
    eta: f64,
    background: f64,
    regime: DetectionRegime,
) -> Result<ChannelResponse> {
    let levels = sys_cutoff + 1;
    let matched = alpha * overlap.sqrt();
    let total = alpha.norm_sqr();
    let click = match regime {
        DetectionRegime::Linear => {
            // (η/2) <m|(a† + α̃*)(a + α̃)|n> + (1 - M)|α|² part, exact
            let mut n_op = CMatrix::zeros(levels, levels);
            for n in 0..levels {
                n_op[(n, n)] = Complex64::new(n as f64 + total, 0.0);
                if n + 1 < levels {
                    n_op[(n + 1, n)] = matched * ((n + 1) as f64).sqrt();
                    n_op[(n, n + 1)] = matched.conj() * ((n + 1) as f64).sqrt();
                }
            }
            let lin = n_op.map(|z| z * (eta / 2.0) * (1.0 - background));
            lin + CMatrix::identity(levels, levels).map(|z| z * background)
        }
        DetectionRegime::Threshold => {
            let lo_cutoff = cutoff_for_tail(matched.norm_sqr(), ENGINE_TAIL);
            let cutoff = sys_cutoff + lo_cutoff;
            let ch_levels = cutoff + 1;
            let coh = coherent_state(matched, lo_cutoff)?;
            let u = two_mode_beamsplitter(cutoff, 0.5)?;
            let phis: Vec<CVector> = (0..levels)
                .map(|n| {
                    let mut v = CVector::zeros(ch_levels * ch_levels);
                    for (k, a) in coh.amplitudes().iter().enumerate() {
                        v[n * ch_levels + k] = *a;
                    }
                    &u * v
                })
                .collect();
            let perp = (-(eta * (1.0 - overlap) * total / 2.0)).exp();
            let weight: Vec<f64> =
                (0..ch_levels * ch_levels).map(|k| (1.0 - eta).powi((k / ch_levels) as i32) * perp * (1.0 - background)).collect();
            let mut no_click = CMatrix::zeros(levels, levels);
            for m in 0..levels {
                for n in 0..levels {
                    let mut g = Complex64::default();
                    for (k, w) in weight.iter().enumerate() {
                        g += phis[m][k].conj() * phis[n][k] * *w;
                    }
                    no_click[(m, n)] = g;
                }
            }
            CMatrix::identity(levels, levels) - no_click
        }
    };
    let no_click = CMatrix::identity(levels, levels) - &click;
    Ok(ChannelResponse { click, no_click })
}

/// Joint click distribution over all channels. Entry `s` is the probability
/// that exactly the channels whose bits are set in `s` click (bit `k` is
/// channel `k`). Channel `k` observes signal mode `k`, mixed with its
/// oscillator when `lo` is given and detected directly otherwise.
pub fn joint_click_distribution(
    rho: &DensityOperator,
    lo: Option<&LocalOscillatorConfig>,
    det: &DetectorModel,
    regime: DetectionRegime,
) -> Result<Vec<f64>> {
    let space = *rho.space();
    let n = space.num_modes();
    det.validate(n)?;
    let responses: Vec<ChannelResponse> = match lo {
        Some(lo) => {
            lo.validate(n)?;
            (0..n)
                .map(|ch| {
                    let (eta, bg) = (det.efficiency(ch), det.background(ch));
                    interfered_response(space.cutoff(), lo.amplitude(ch), lo.overlap(ch), eta, bg, regime)
                })
                .collect::<Result<_>>()?
        }
        None => (0..n)
            .map(|ch| direct_response(space.cutoff(), det.efficiency(ch), det.background(ch), regime))
            .collect(),
    };
    let entries = support(rho);
    let occupations: Vec<Vec<usize>> = (0..space.dim()).map(|k| space.occupation(k)).collect();
    let mut dist = vec![0.0; 1 << n];
    for (s, slot) in dist.iter_mut().enumerate() {
        let mut acc = Complex64::default();
        for &(r, c, z) in &entries {
            let (or, oc) = (&occupations[r], &occupations[c]);
            let mut prod = z;
            for (ch, resp) in responses.iter().enumerate() {
                let g = if s >> ch & 1 == 1 { &resp.click } else { &resp.no_click };
                prod *= g[(oc[ch], or[ch])];
            }
            acc += prod;
        }
        *slot = acc.re;
    }
    Ok(dist)
}

/// Joint distribution for a structured model, assembled at the smallest
/// cutoff that holds it.
pub fn model_click_distribution(
    model: &StructuredState,
    lo: Option<&LocalOscillatorConfig>,
    det: &DetectorModel,
    regime: DetectionRegime,
) -> Result<Vec<f64>> {
    let rho = model.to_density_unchecked(model.required_cutoff())?;
    joint_click_distribution(&rho, lo, det, regime)
}

/// Probability that every channel in `mask` clicks, whatever the others do.
pub fn inclusive_probability(dist: &[f64], mask: usize) -> f64 {
    dist.iter().enumerate().filter(|(s, _)| s & mask == mask).map(|(_, p)| p).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Pattern;
    use approx::assert_abs_diff_eq;

    fn two_mode(p10: f64, p01: f64, d: Complex64) -> StructuredState {
        StructuredState::single_photon(&[p10, p01], &[((0, 1), d)]).unwrap()
    }

    #[test]
    fn hand_evaluated_coincidence() {
        let m = two_mode(0.01, 0.01, Complex64::new(0.01, 0.0));
        let lo = LocalOscillatorConfig::uniform(2, 0.1);
        let det = DetectorModel::uniform(2, 1.0);
        let b = coincidence_analytic(&m, (0, 1), &lo, &det).unwrap();
        assert_abs_diff_eq!(b.p_nif, 7.5e-5, epsilon = 1e-18);
        assert_abs_diff_eq!(b.p_if, 5e-5, epsilon = 1e-18);
        assert_abs_diff_eq!(b.p_xy, 1.25e-4, epsilon = 1e-18);
        assert_abs_diff_eq!(b.p_coh, 2.5e-5, epsilon = 1e-18);
    }

    #[test]
    fn quadrature_phase_kills_interference() {
        let m = two_mode(0.01, 0.01, Complex64::from_polar(0.01, 0.4));
        // θ - φ_α + φ_β = π/2
        let lo = LocalOscillatorConfig::new(vec![0.1, 0.1], vec![0.4 - PI / 2.0, 0.0]).unwrap();
        let b = coincidence_analytic(&m, (0, 1), &lo, &DetectorModel::uniform(2, 1.0)).unwrap();
        assert_abs_diff_eq!(b.p_if, 0.0, epsilon = 1e-18);
    }

    #[test]
    fn hand_evaluated_singles() {
        let mut m = two_mode(0.01, 0.01, Complex64::default());
        m.vacuum_coherences.insert(0, Complex64::new(0.05, 0.0));
        let det = DetectorModel::uniform(2, 1.0);
        let mut values = Vec::new();
        for k in 0..64 {
            let phi = 2.0 * PI * k as f64 / 64.0;
            let lo = LocalOscillatorConfig::new(vec![0.1, 0.1], vec![phi, 0.0]).unwrap();
            values.push(single_channel_analytic(&m, 0, &lo, &det).unwrap());
        }
        assert_abs_diff_eq!(values[0], 0.015, epsilon = 1e-15);
        let max = values.iter().cloned().fold(f64::MIN, f64::max);
        let min = values.iter().cloned().fold(f64::MAX, f64::min);
        assert_abs_diff_eq!((max - min) / 2.0, 0.005, epsilon = 1e-15);
    }

    #[test]
    fn visibility_examples() {
        assert_abs_diff_eq!(visibility_analytic(0.3, 0.3, 1.0, 0.3).unwrap(), 1.0);
        assert_eq!(visibility_analytic(0.3, 0.3, 1.0, 0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(visibility_analytic(0.1, 0.2, 4.0, 0.1).unwrap(), 0.4 / 0.6, epsilon = 1e-15);
        assert!(visibility_analytic(0.0, 0.0, 1.0, 0.0).is_err());
        assert!(visibility_analytic(0.1, 0.1, 0.0, 0.0).is_err());
    }

    #[test]
    fn exact_forms_trivial_cases() {
        let space = FockSpace::new(2, 2).unwrap();
        let det = DetectorModel::uniform(2, 0.5);
        let vac = DensityOperator::vacuum(space);
        for form in [ExactForm::NumberOperator, ExactForm::Threshold] {
            let p = coincidence_exact(&vac, &LocalOscillatorConfig::off(2), &det, form, 4).unwrap();
            assert_eq!(p, 0.0);
            let one = StateVector::basis(space, &[1, 0]).unwrap().to_density();
            let lo = LocalOscillatorConfig::new(vec![0.3, 0.0], vec![]).unwrap();
            let p = coincidence_exact(&one, &lo, &det, form, 6).unwrap();
            assert_abs_diff_eq!(p, 0.0, epsilon = 1e-16);
        }
    }

    #[test]
    fn exact_rejects_short_cutoff() {
        let rho = DensityOperator::vacuum(FockSpace::new(2, 1).unwrap());
        let lo = LocalOscillatorConfig::uniform(2, 0.3);
        let err = coincidence_exact(&rho, &lo, &DetectorModel::uniform(2, 1.0), ExactForm::Threshold, 3);
        assert!(matches!(err, Err(Error::CutoffTooSmall { .. })));
    }

    #[test]
    fn linear_regime_inclusive_matches_analytic() {
        let mut m = two_mode(0.2, 0.15, Complex64::from_polar(0.1, 0.7));
        m.vacuum_coherences.insert(0, Complex64::from_polar(0.05, -0.3));
        m.vacuum_coherences.insert(1, Complex64::from_polar(0.04, 1.1));
        let lo = LocalOscillatorConfig::new(vec![0.25, 0.3], vec![0.2, -1.0]).unwrap().with_overlaps(vec![0.9, 0.8]);
        let det = DetectorModel { efficiencies: vec![0.3, 0.6], background: Vec::new() };
        let dist = model_click_distribution(&m, Some(&lo), &det, DetectionRegime::Linear).unwrap();
        assert_abs_diff_eq!(dist.iter().sum::<f64>(), 1.0, epsilon = 1e-14);
        let b = coincidence_analytic(&m, (0, 1), &lo, &det).unwrap();
        assert_abs_diff_eq!(inclusive_probability(&dist, 0b11), b.p_xy, epsilon = 1e-15);
        let s = singles_analytic(&m, (0, 1), &lo, &det).unwrap();
        assert_abs_diff_eq!(inclusive_probability(&dist, 0b01), s.p_x, epsilon = 1e-15);
        assert_abs_diff_eq!(inclusive_probability(&dist, 0b10), s.p_y, epsilon = 1e-15);
    }

    #[test]
    fn threshold_engine_matches_oracle() {
        let m = two_mode(0.3, 0.25, Complex64::from_polar(0.2, 0.9));
        let rho = m.to_density_unchecked(1).unwrap();
        let lo = LocalOscillatorConfig::new(vec![0.3, 0.2], vec![0.5, 2.0]).unwrap();
        let det = DetectorModel::uniform(2, 0.6);
        let dist = joint_click_distribution(&rho, Some(&lo), &det, DetectionRegime::Threshold).unwrap();
        assert_abs_diff_eq!(dist.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert!(dist.iter().all(|p| *p >= 0.0));
        let exact = coincidence_exact(&rho, &lo, &det, ExactForm::Threshold, 7).unwrap();
        assert_abs_diff_eq!(dist[3], exact, epsilon = 1e-11);
    }

    #[test]
    fn single_photon_clicks_once_with_unit_efficiency() {
        let m = StructuredState::from_w(&crate::models::WStateSpec::plus(3)).unwrap();
        let dist =
            model_click_distribution(&m, None, &DetectorModel::uniform(3, 1.0), DetectionRegime::Threshold)
                .unwrap();
        for (s, p) in dist.iter().enumerate() {
            let expected = if (s as u32).count_ones() == 1 { 1.0 / 3.0 } else { 0.0 };
            assert_abs_diff_eq!(*p, expected, epsilon = 1e-14);
        }
    }

    #[test]
    fn two_photon_block_clicks_pairs() {
        let mut m = StructuredState::vacuum(2).unwrap();
        m.diagonals.insert(Pattern::vacuum(2), 0.0);
        m.diagonals.insert(Pattern::ones(2, &[0, 1]), 1.0);
        let dist =
            model_click_distribution(&m, None, &DetectorModel::uniform(2, 1.0), DetectionRegime::Threshold)
                .unwrap();
        assert_abs_diff_eq!(dist[3], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn wrap_phase_range() {
        assert_abs_diff_eq!(wrap_phase(PI), PI);
        assert_abs_diff_eq!(wrap_phase(-PI), PI);
        assert_abs_diff_eq!(wrap_phase(3.0 * PI / 2.0), -PI / 2.0, epsilon = 1e-15);
    }
}
