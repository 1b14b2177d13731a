//! Pairwise assembly of the full state from oscillator-off diagonals and
//! one fringe sweep per mode pair.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::counting::{estimate_diagonals, estimate_diagonals_raw, subset_label, CountTable, DiagonalEstimate, FringeDataset};
use crate::detection::{wrap_phase, DetectorModel, LocalOscillatorConfig};
use crate::error::{Error, Result};
use crate::fock::{CMatrix, FockSpace};
use crate::models::{make_w_state, Pattern, StructuredState, WStateSpec};

use super::bootstrap::{bootstrap_errors, BootstrapSummary};
use super::coherence::{
    assign_phase, coherence_from_visibility, coherence_from_visibility_err, cycle_checks, mode_match_correct,
    solve_offsets, vacuum_coherence_from_fit, CycleCheck, OffDiagonalEstimate, PairPhase, PhaseConvention,
    VacuumCoherenceEstimate,
};
use super::fidelity::{fidelity, subspace_fidelity, FidelityEstimate};
use super::fit::{fit_samples, FringeFit, FringeSample};

/// Share of the smallest single-photon probability above which the
/// two-photon mass is no longer negligible.
pub const TWO_PHOTON_WARNING_RATIO: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSweep {
    pub pair: (usize, usize),
    pub data: FringeDataset,
}

/// Sweep of one channel's oscillator phase, used for its singles fringe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinglesSweep {
    pub channel: usize,
    pub data: FringeDataset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementData {
    /// Oscillator-off counts.
    pub diagonals: CountTable,
    pub pairs: Vec<PairSweep>,
    #[serde(default)]
    pub singles: Vec<SinglesSweep>,
}

impl MeasurementData {
    pub fn channels(&self) -> &[String] {
        &self.diagonals.channels
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VacuumHandling {
    /// Assume `<0|ρ|1_k> = 0`, as for a heralded source.
    #[default]
    Ignore,
    /// Fit every channel's singles fringe and subtract the vacuum terms
    /// from the coincidence fringes before inverting them.
    Estimate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ErrorMethod {
    Propagation,
    Bootstrap { seed: u64, replicates: usize },
}

impl Default for ErrorMethod {
    fn default() -> Self {
        ErrorMethod::Bootstrap { seed: 0, replicates: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub name: String,
    pub state: WStateSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionOptions {
    pub lo: LocalOscillatorConfig,
    pub detectors: DetectorModel,
    #[serde(default)]
    pub gauge: PhaseConvention,
    #[serde(default)]
    pub vacuum: VacuumHandling,
    /// Measured mode overlaps per channel; enables the corrected estimate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode_overlaps: Option<Vec<f64>>,
    #[serde(default)]
    pub project_psd: bool,
    #[serde(default)]
    pub targets: Vec<Target>,
    #[serde(default)]
    pub errors: ErrorMethod,
    /// Order in which pairs are processed; reference pairs come first.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_order: Option<Vec<(usize, usize)>>,
}

impl ReconstructionOptions {
    pub fn new(lo: LocalOscillatorConfig, detectors: DetectorModel) -> Self {
        ReconstructionOptions {
            lo,
            detectors,
            gauge: PhaseConvention::default(),
            vacuum: VacuumHandling::default(),
            mode_overlaps: None,
            project_psd: false,
            targets: Vec::new(),
            errors: ErrorMethod::default(),
            pair_order: None,
        }
    }
}

/// Neighbouring pairs `(0,1), (1,2), ...` first, then the rest in
/// lexicographic order.
pub fn default_pair_order(num_modes: usize) -> Vec<(usize, usize)> {
    let mut order: Vec<(usize, usize)> = (1..num_modes).map(|j| (j - 1, j)).collect();
    for i in 0..num_modes {
        for j in (i + 2)..num_modes {
            order.push((i, j));
        }
    }
    order
}

pub fn pair_label(channels: &[String], pair: (usize, usize)) -> String {
    subset_label(channels, (1 << pair.0) | (1 << pair.1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarningKind {
    TwoPhotonMass,
    CoherenceBound,
    Visibility,
    UndefinedPhase,
    ZeroCounts,
    PhaseCycle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Warning {
    pub kind: WarningKind,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairResult {
    pub pair: (usize, usize),
    pub label: String,
    pub fit: FringeFit,
    pub estimate: OffDiagonalEstimate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corrected: Option<OffDiagonalEstimate>,
    pub reference: bool,
    pub vacuum_subtracted: bool,
    pub zero_count_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinglesResult {
    pub channel: usize,
    /// Dataset the singles fringe was taken from.
    pub source: String,
    pub fit: FringeFit,
    pub estimate: VacuumCoherenceEstimate,
}

/// Row-major matrix with `[re, im]` entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixDoc {
    pub normalization: String,
    pub basis: Vec<String>,
    pub entries: Vec<Vec<[f64; 2]>>,
}

impl MatrixDoc {
    pub fn new(normalization: &str, basis: Vec<String>, m: &CMatrix) -> Self {
        let entries = (0..m.nrows()).map(|r| (0..m.ncols()).map(|c| [m[(r, c)].re, m[(r, c)].im]).collect()).collect();
        MatrixDoc { normalization: normalization.into(), basis, entries }
    }

    pub fn to_matrix(&self) -> CMatrix {
        let n = self.entries.len();
        CMatrix::from_fn(n, n, |r, c| Complex64::new(self.entries[r][c][0], self.entries[r][c][1]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub target: String,
    /// Single-photon subspace normalization.
    pub raw: FidelityEstimate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corrected: Option<FidelityEstimate>,
    /// `<W|ρ|W>` on the full (unnormalized-subspace) matrix.
    pub full_space: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsdReport {
    pub min_eigenvalue_full: f64,
    pub min_eigenvalue_subspace: f64,
    pub projected: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projected_matrix: Option<MatrixDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeMatchInfo {
    pub applied: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overlaps: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionResult {
    pub channels: Vec<String>,
    pub estimate: StructuredState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corrected_estimate: Option<StructuredState>,
    pub density_full: MatrixDoc,
    pub density_subspace: MatrixDoc,
    pub diagonals: DiagonalEstimate,
    pub raw_diagonals: DiagonalEstimate,
    pub pairs: Vec<PairResult>,
    pub vacuum: Vec<SinglesResult>,
    pub vacuum_handling: VacuumHandling,
    pub gauge: PhaseConvention,
    pub reference_pairs: Vec<String>,
    pub offsets: Vec<f64>,
    pub cycle_checks: Vec<CycleCheck>,
    pub fidelities: Vec<FidelityReport>,
    pub mode_match: ModeMatchInfo,
    pub psd: PsdReport,
    pub error_method: ErrorMethod,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bootstrap: Option<BootstrapSummary>,
    pub warnings: Vec<Warning>,
}

impl ReconstructionResult {
    pub fn pair(&self, i: usize, j: usize) -> Option<&PairResult> {
        self.pairs.iter().find(|p| p.pair == (i, j))
    }

    pub fn fidelity(&self, target: &str) -> Option<&FidelityReport> {
        self.fidelities.iter().find(|f| f.target == target)
    }
}

/// Point estimates before error bars are finalized.
#[derive(Debug, Clone)]
pub(crate) struct Analysis {
    pub diagonals: DiagonalEstimate,
    pub pairs: Vec<PairResult>,
    pub vacuum: Vec<SinglesResult>,
    pub offsets: Vec<f64>,
    pub fidelities: Vec<(FidelityEstimate, Option<FidelityEstimate>)>,
}

fn check_pairs(data: &MeasurementData, options: &ReconstructionOptions) -> Result<Vec<(usize, usize)>> {
    let n = data.channels().len();
    if n < 2 {
        return Err(Error::InvalidParameter("reconstruction needs at least two modes".into()));
    }
    let order = options.pair_order.clone().unwrap_or_else(|| default_pair_order(n));
    let mut expected = default_pair_order(n);
    expected.sort();
    let mut given = order.clone();
    given.sort();
    if given != expected {
        return Err(Error::InvalidParameter(format!("pair order must list each of the {} pairs once", expected.len())));
    }
    let mut seen = BTreeMap::new();
    for sweep in &data.pairs {
        let (i, j) = sweep.pair;
        if i >= j || j >= n {
            return Err(Error::InvalidParameter(format!("pair ({i},{j}) must satisfy i < j < {n}")));
        }
        if sweep.data.signal.channels != data.diagonals.channels {
            return Err(Error::InvalidParameter(format!("channels of pair {} differ", pair_label(data.channels(), sweep.pair))));
        }
        if seen.insert(sweep.pair, ()).is_some() {
            return Err(Error::InvalidParameter(format!("pair {} given twice", pair_label(data.channels(), sweep.pair))));
        }
    }
    for p in &order {
        if !seen.contains_key(p) {
            return Err(Error::MissingPair(pair_label(data.channels(), *p)));
        }
    }
    Ok(order)
}

fn swept(data: &FringeDataset, ch: usize) -> bool {
    let rows = &data.signal.rows;
    rows.iter().any(|r| r.phases.get(ch).zip(rows[0].phases.get(ch)).is_some_and(|(a, b)| (a - b).abs() > 1e-12))
}

fn phase_of(phases: &[f64], lo: &LocalOscillatorConfig, ch: usize) -> f64 {
    phases.get(ch).copied().unwrap_or_else(|| lo.phase(ch))
}

fn fit_singles(
    channel: usize,
    source: String,
    data: &FringeDataset,
    options: &ReconstructionOptions,
) -> Result<SinglesResult> {
    let points = data.points(1 << channel);
    let samples: Vec<FringeSample> =
        points.iter().map(|p| FringeSample::from_point(p, phase_of(&p.lo_phases, &options.lo, channel))).collect();
    let fit = fit_samples(&samples, None)?;
    let shots = points.iter().map(|p| p.shots).sum::<f64>() / points.len() as f64;
    let estimate = vacuum_coherence_from_fit(
        channel,
        &fit,
        shots,
        options.detectors.efficiency(channel),
        options.lo.magnitude(channel),
        0.0,
    )?;
    Ok(SinglesResult { channel, source, fit, estimate })
}

fn vacuum_estimates(data: &MeasurementData, options: &ReconstructionOptions) -> Result<Vec<SinglesResult>> {
    if options.vacuum == VacuumHandling::Ignore {
        return Ok(Vec::new());
    }
    let channels = data.channels();
    (0..channels.len())
        .into_par_iter()
        .map(|k| {
            if let Some(s) = data.singles.iter().find(|s| s.channel == k) {
                return fit_singles(k, format!("singles {}", channels[k]), &s.data, options);
            }
            if let Some(p) = data.pairs.iter().find(|p| (p.pair.0 == k || p.pair.1 == k) && swept(&p.data, k)) {
                return fit_singles(k, format!("pair {}", pair_label(channels, p.pair)), &p.data, options);
            }
            Err(Error::MissingSinglesSweep(channels[k].clone()))
        })
        .collect()
}

struct PairFit {
    fit: FringeFit,
    vacuum_subtracted: bool,
    zero_count_points: usize,
}

/// Fits the coincidence fringe of `(i, j)` against `φ_i - φ_j`, first
/// removing the vacuum-coherence terms
/// `shots (η_i η_j / 2)(|β|²|α| Re(e^{iφ_i} u_i) + |α|²|β| Re(e^{iφ_j} u_j))`
/// where `u_k` are the fitted singles phasors.
fn fit_pair(
    sweep: &PairSweep,
    vacuum: &[SinglesResult],
    options: &ReconstructionOptions,
) -> Result<PairFit> {
    let (i, j) = sweep.pair;
    let points = sweep.data.points((1 << i) | (1 << j));
    let lo = &options.lo;
    let (ma, mb) = (lo.magnitude(i), lo.magnitude(j));
    let (ei, ej) = (options.detectors.efficiency(i), options.detectors.efficiency(j));
    let mut samples = Vec::with_capacity(points.len());
    let mut columns: Vec<Vec<f64>> = (0..4).map(|_| Vec::with_capacity(points.len())).collect();
    for p in &points {
        let (phi_i, phi_j) = (phase_of(&p.lo_phases, lo, i), phase_of(&p.lo_phases, lo, j));
        let s = FringeSample::from_point(p, phi_i - phi_j);
        let k = p.shots * ei * ej / 2.0;
        let gi = k * mb * mb * ma;
        let gj = k * ma * ma * mb;
        let row = [gi * phi_i.cos(), -gi * phi_i.sin(), gj * phi_j.cos(), -gj * phi_j.sin()];
        for (c, v) in columns.iter_mut().zip(row) {
            c.push(v);
        }
        samples.push(s);
    }
    let zero_count_points = points.iter().filter(|p| p.signal_counts == 0.0).count();
    let found = |k: usize| vacuum.iter().find(|v| v.channel == k).map(|v| &v.estimate);
    let (Some(vi), Some(vj)) = (found(i), found(j)) else {
        return Ok(PairFit { fit: fit_samples(&samples, None)?, vacuum_subtracted: false, zero_count_points });
    };
    let delta = [vi.value[0], vi.value[1], vj.value[0], vj.value[1]];
    for (r, s) in samples.iter_mut().enumerate() {
        let shift: f64 = (0..4).map(|c| columns[c][r] * delta[c]).sum();
        s.y -= shift;
    }
    let s_mat = DMatrix::from_fn(points.len(), 4, |r, c| columns[c][r]);
    let mut cov = DMatrix::zeros(4, 4);
    for a in 0..2 {
        for b in 0..2 {
            cov[(a, b)] = vi.covariance[a][b];
            cov[(a + 2, b + 2)] = vj.covariance[a][b];
        }
    }
    let fit = fit_samples(&samples, Some((&s_mat, &cov)))?;
    Ok(PairFit { fit, vacuum_subtracted: true, zero_count_points })
}

fn magnitude_from_fit(
    pair: (usize, usize),
    fit: &FringeFit,
    diag: &DiagonalEstimate,
    lo: &LocalOscillatorConfig,
) -> Result<(f64, f64)> {
    let (i, j) = pair;
    let r = lo.intensity_ratio(i, j)?;
    let (pi, pj) = (diag.p_single(i), diag.p_single(j));
    let mag = coherence_from_visibility(fit.visibility, pi, pj, r)?;
    let err = coherence_from_visibility_err(
        fit.visibility,
        fit.visibility_err,
        pi,
        diag.p_single_err(i),
        pj,
        diag.p_single_err(j),
        r,
    )?;
    Ok((mag, err))
}

pub(crate) fn analyze(data: &MeasurementData, options: &ReconstructionOptions) -> Result<Analysis> {
    let n = data.channels().len();
    let order = check_pairs(data, options)?;
    options.lo.validate(n)?;
    options.detectors.validate(n)?;
    let diagonals = estimate_diagonals(&data.diagonals, &options.detectors)?;
    let vacuum = vacuum_estimates(data, options)?;

    let fits: Vec<PairFit> = order
        .par_iter()
        .map(|p| {
            let sweep = data.pairs.iter().find(|s| s.pair == *p).expect("checked above");
            fit_pair(sweep, &vacuum, options)
        })
        .collect::<Result<_>>()?;

    let phases: Vec<PairPhase> = order
        .iter()
        .zip(&fits)
        .map(|(p, f)| PairPhase { pair: *p, theta0: f.fit.theta0, err: f.fit.theta0_err() })
        .collect();
    let references = match options.gauge {
        PhaseConvention::ReferencePairs => n - 1,
        _ => 0,
    };
    for (k, f) in fits.iter().enumerate().take(references) {
        if !f.fit.phase_defined {
            return Err(Error::Degenerate(format!(
                "reference pair {} has no defined fringe phase",
                pair_label(data.channels(), order[k])
            )));
        }
    }
    let offsets = solve_offsets(&options.gauge, n, &phases)?;

    let mut pairs = Vec::with_capacity(order.len());
    for (k, (p, f)) in order.iter().zip(fits).enumerate() {
        let (magnitude, magnitude_err) = magnitude_from_fit(*p, &f.fit, &diagonals, &options.lo)?;
        let (phase, phase_err) = if f.fit.phase_defined { assign_phase(&phases[k], &offsets, k < references) } else { (0.0, 0.0) };
        let bound = (diagonals.p_single(p.0).max(0.0) * diagonals.p_single(p.1).max(0.0)).sqrt();
        let estimate = OffDiagonalEstimate {
            pair: *p,
            magnitude,
            magnitude_err,
            phase,
            phase_err,
            exceeds_bound: magnitude > bound,
            mode_match_corrected: false,
            overlaps: None,
        };
        let corrected = match &options.mode_overlaps {
            Some(m) => {
                if m.len() != n {
                    return Err(Error::DimensionMismatch { expected: n, found: m.len() });
                }
                Some(mode_match_correct(&estimate, m[p.0], m[p.1])?)
            }
            None => None,
        };
        pairs.push(PairResult {
            pair: *p,
            label: pair_label(data.channels(), *p),
            fit: f.fit,
            estimate,
            corrected,
            reference: k < references,
            vacuum_subtracted: f.vacuum_subtracted,
            zero_count_points: f.zero_count_points,
        });
    }

    // vacuum coherences reported in the chosen gauge
    let vacuum = vacuum
        .into_iter()
        .map(|mut v| {
            let rot = Complex64::from_polar(1.0, -offsets.0[v.channel]);
            let d = v.estimate.complex() * rot;
            let (c, s) = (rot.re, rot.im);
            let r = [[c, -s], [s, c]];
            let old = v.estimate.covariance;
            let mut cov = [[0.0; 2]; 2];
            for a in 0..2 {
                for b in 0..2 {
                    for x in 0..2 {
                        for y in 0..2 {
                            cov[a][b] += r[a][x] * old[x][y] * r[b][y];
                        }
                    }
                }
            }
            v.estimate.value = [d.re, d.im];
            v.estimate.phase = d.arg();
            v.estimate.phase_err = (v.estimate.phase_err.powi(2) + offsets.1[v.channel]).sqrt();
            v.estimate.covariance = cov;
            v
        })
        .collect();

    let singles: Vec<f64> = (0..n).map(|k| diagonals.p_single(k)).collect();
    let singles_err: Vec<f64> = (0..n).map(|k| diagonals.p_single_err(k)).collect();
    let raw_pairs: Vec<OffDiagonalEstimate> = pairs.iter().map(|p| p.estimate.clone()).collect();
    let corrected_pairs: Option<Vec<OffDiagonalEstimate>> = pairs.iter().map(|p| p.corrected.clone()).collect();
    let fidelities = options
        .targets
        .iter()
        .map(|t| {
            let raw = subspace_fidelity(&singles, &singles_err, &raw_pairs, &t.state)?;
            let corrected = match &corrected_pairs {
                Some(c) => Some(subspace_fidelity(&singles, &singles_err, c, &t.state)?),
                None => None,
            };
            Ok((raw, corrected))
        })
        .collect::<Result<_>>()?;

    Ok(Analysis { diagonals, pairs, vacuum, offsets: offsets.0, fidelities })
}

fn build_state(
    n: usize,
    diag: &DiagonalEstimate,
    pairs: &[OffDiagonalEstimate],
    vacuum: &[(usize, Complex64)],
) -> Result<StructuredState> {
    let mut state = StructuredState::empty(n)?;
    state.diagonals.clear();
    for (key, &p) in &diag.probabilities {
        state.diagonals.insert(key.parse::<Pattern>()?, p);
    }
    for est in pairs {
        state.set_coherence(est.pair.0, est.pair.1, est.value())?;
    }
    for &(k, d) in vacuum {
        state.vacuum_coherences.insert(k, d);
    }
    Ok(state)
}

fn basis_labels(space: &FockSpace) -> Vec<String> {
    (0..space.dim())
        .map(|k| Pattern::new(space.occupation(k).iter().map(|&o| o as u8).collect()).to_string())
        .collect()
}

/// Nearest PSD matrix in Frobenius norm with unit trace: eigenvalues are
/// clipped at zero and renormalized.
pub fn project_psd(m: &CMatrix) -> Result<CMatrix> {
    let sym = (m + m.adjoint()).map(|z| z * 0.5);
    let eig = sym.symmetric_eigen();
    let clipped: Vec<f64> = eig.eigenvalues.iter().map(|&e| e.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    if !(total > 0.0) {
        return Err(Error::NotNormalizable);
    }
    let v = &eig.eigenvectors;
    let d = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        clipped.len(),
        clipped.iter().map(|&e| Complex64::new(e / total, 0.0)),
    ));
    let p = v * d * v.adjoint();
    Ok((&p + p.adjoint()).map(|z| z * 0.5))
}

fn min_eigenvalue(m: &CMatrix) -> f64 {
    let sym = (m + m.adjoint()).map(|z| z * 0.5);
    sym.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

/// Runs the full pairwise reconstruction.
pub fn reconstruct(data: &MeasurementData, options: &ReconstructionOptions) -> Result<ReconstructionResult> {
    let n = data.channels().len();
    let mut analysis = analyze(data, options)?;

    let bootstrap = match options.errors {
        ErrorMethod::Propagation => None,
        ErrorMethod::Bootstrap { seed, replicates } => Some(bootstrap_errors(data, options, &mut analysis, seed, replicates)?),
    };

    let channels = data.channels().to_vec();
    let raw_pairs: Vec<OffDiagonalEstimate> = analysis.pairs.iter().map(|p| p.estimate.clone()).collect();
    let vac: Vec<(usize, Complex64)> = analysis.vacuum.iter().map(|v| (v.channel, v.estimate.complex())).collect();
    let estimate = build_state(n, &analysis.diagonals, &raw_pairs, &vac)?;
    let corrected_estimate = match &options.mode_overlaps {
        Some(m) => {
            let corrected: Vec<OffDiagonalEstimate> = analysis.pairs.iter().filter_map(|p| p.corrected.clone()).collect();
            let vac_c: Vec<(usize, Complex64)> = vac.iter().map(|&(k, d)| (k, d / m[k].sqrt())).collect();
            Some(build_state(n, &analysis.diagonals, &corrected, &vac_c)?)
        }
        None => None,
    };

    let rho = estimate.to_density_unchecked(estimate.required_cutoff())?;
    let space = *rho.space();
    let full = rho.matrix().clone();
    let sub = estimate.subspace_normalized()?;
    let sub_basis: Vec<String> = (0..n).map(|k| Pattern::single(n, k).to_string()).collect();

    let fidelities = options
        .targets
        .iter()
        .zip(&analysis.fidelities)
        .map(|(t, (raw, corrected))| {
            let target = make_w_state(&t.state, space.cutoff())?;
            Ok(FidelityReport { target: t.name.clone(), raw: *raw, corrected: *corrected, full_space: fidelity(&rho, &target)? })
        })
        .collect::<Result<Vec<_>>>()?;

    let psd = PsdReport {
        min_eigenvalue_full: min_eigenvalue(&full),
        min_eigenvalue_subspace: min_eigenvalue(&sub),
        projected: options.project_psd,
        projected_matrix: if options.project_psd {
            Some(MatrixDoc::new("full", basis_labels(&space), &project_psd(&full)?))
        } else {
            None
        },
    };

    let phase_map: BTreeMap<(usize, usize), (f64, f64)> =
        analysis.pairs.iter().map(|p| (p.pair, (p.estimate.phase, p.estimate.phase_err))).collect();
    let cycles = cycle_checks(&phase_map, n);
    let warnings = collect_warnings(&channels, &analysis, &cycles);

    Ok(ReconstructionResult {
        reference_pairs: analysis.pairs.iter().filter(|p| p.reference).map(|p| p.label.clone()).collect(),
        channels,
        corrected_estimate,
        density_full: MatrixDoc::new("full", basis_labels(&space), &full),
        density_subspace: MatrixDoc::new("single_photon_subspace", sub_basis, &sub),
        raw_diagonals: estimate_diagonals_raw(&data.diagonals)?,
        diagonals: analysis.diagonals,
        pairs: analysis.pairs,
        vacuum: analysis.vacuum,
        vacuum_handling: options.vacuum,
        gauge: options.gauge.clone(),
        offsets: analysis.offsets,
        cycle_checks: cycles,
        fidelities,
        mode_match: ModeMatchInfo { applied: options.mode_overlaps.is_some(), overlaps: options.mode_overlaps.clone() },
        psd,
        error_method: options.errors,
        bootstrap,
        warnings,
        estimate,
    })
}

fn collect_warnings(channels: &[String], analysis: &Analysis, cycles: &[CycleCheck]) -> Vec<Warning> {
    let mut out = Vec::new();
    let diag = &analysis.diagonals;
    let n = channels.len();
    let min_single = (0..n).map(|k| diag.p_single(k)).fold(f64::INFINITY, f64::min);
    if diag.two_photon_mass > TWO_PHOTON_WARNING_RATIO * min_single {
        out.push(Warning {
            kind: WarningKind::TwoPhotonMass,
            message: format!(
                "two-photon mass {:.4e} exceeds {}% of the smallest single-photon probability {:.4e}",
                diag.two_photon_mass,
                TWO_PHOTON_WARNING_RATIO * 100.0,
                min_single
            ),
        });
    }
    for p in &analysis.pairs {
        if p.estimate.exceeds_bound {
            out.push(Warning {
                kind: WarningKind::CoherenceBound,
                message: format!("|d_{}| = {:.6} exceeds sqrt(p_i p_j)", p.label, p.estimate.magnitude),
            });
        }
        if p.fit.visibility > 1.0 + 3.0 * p.fit.visibility_err {
            out.push(Warning {
                kind: WarningKind::Visibility,
                message: format!("visibility of {} is {:.6} ± {:.6}", p.label, p.fit.visibility, p.fit.visibility_err),
            });
        }
        if !p.fit.phase_defined {
            out.push(Warning { kind: WarningKind::UndefinedPhase, message: format!("fringe of {} is flat", p.label) });
        }
        if p.zero_count_points > 0 {
            out.push(Warning {
                kind: WarningKind::ZeroCounts,
                message: format!("{} fringe points of {} have no coincidences", p.zero_count_points, p.label),
            });
        }
    }
    for c in cycles {
        if c.residual.abs() > 3.0 * c.sigma && c.residual.abs() > 1e-9 {
            let (a, b, d) = c.modes;
            out.push(Warning {
                kind: WarningKind::PhaseCycle,
                message: format!(
                    "phase cycle {}{}{} closes to {:.4} rad ± {:.4}",
                    channels[a], channels[b], channels[d], c.residual, c.sigma
                ),
            });
        }
    }
    out
}

/// Wrapped difference used for circular statistics of phases.
pub(crate) fn phase_diff(a: f64, b: f64) -> f64 {
    wrap_phase(a - b)
}
