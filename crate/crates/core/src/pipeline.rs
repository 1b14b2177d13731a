//! Measurement plans: the set of runs needed for a pairwise reconstruction,
//! their simulation, and the reconstruction itself.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::counting::{CountTable, FringeDataset};
use crate::detection::{DetectionRegime, DetectorModel, LocalOscillatorConfig};
use crate::error::{Error, Result};
use crate::events::default_channel_names;
use crate::simulate::{expected_counts, sample_counts, sweep_schedule, ExperimentConfig, PhaseSetting, SourceConfig, SweepMode};
use crate::tomography::{
    default_pair_order, pair_label, reconstruct, ErrorMethod, MeasurementData, PairSweep, PhaseConvention,
    ReconstructionOptions, ReconstructionResult, SinglesSweep, Target, VacuumHandling,
};

/// Seed of one run, derived from the plan seed and the run name so that
/// runs never share a random stream.
pub fn derive_seed(base: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    h.update(label.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("32-byte digest"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub points: usize,
    pub shots: u64,
}

/// Reconstruction settings that do not repeat the hardware description.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AnalysisSettings {
    #[serde(default)]
    pub gauge: PhaseConvention,
    #[serde(default)]
    pub vacuum: VacuumHandling,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode_overlaps: Option<Vec<f64>>,
    #[serde(default)]
    pub project_psd: bool,
    #[serde(default)]
    pub targets: Vec<Target>,
    #[serde(default)]
    pub errors: ErrorMethod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementPlan {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub channels: Vec<String>,
    pub source: SourceConfig,
    /// Oscillators used in the sweeps; their phases are the sweep origin.
    pub lo: LocalOscillatorConfig,
    pub detectors: DetectorModel,
    pub seed: u64,
    #[serde(default)]
    pub regime: DetectionRegime,
    /// Heralds in the oscillator-off run.
    pub diagonal_shots: u64,
    pub sweep: SweepSpec,
    /// Pair order; defaults to neighbours first. The swept channel of pair
    /// `(i, j)` is `i`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairs: Option<Vec<(usize, usize)>>,
    /// Channels that get a dedicated singles sweep.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub singles: Vec<usize>,
    #[serde(default)]
    pub analysis: AnalysisSettings,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RunRole {
    Diagonal,
    Pair { i: usize, j: usize },
    Singles { channel: usize },
}

/// One simulated run; sweeps also need the oscillator-only twin
/// `config.blocked()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedRun {
    pub name: String,
    pub role: RunRole,
    pub config: ExperimentConfig,
}

impl PlannedRun {
    pub fn has_background(&self) -> bool {
        self.role != RunRole::Diagonal
    }
}

impl MeasurementPlan {
    pub fn num_channels(&self) -> usize {
        self.detectors.num_channels()
    }

    pub fn channel_names(&self) -> Vec<String> {
        if self.channels.is_empty() {
            default_channel_names(self.num_channels())
        } else {
            self.channels.clone()
        }
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn digest(&self) -> String {
        let text = serde_json::to_vec(self).unwrap_or_default();
        hex::encode(Sha256::digest(&text))
    }

    pub fn pair_order(&self) -> Vec<(usize, usize)> {
        self.pairs.clone().unwrap_or_else(|| default_pair_order(self.num_channels()))
    }

    pub fn options(&self) -> ReconstructionOptions {
        let a = &self.analysis;
        ReconstructionOptions {
            lo: self.lo.clone(),
            detectors: self.detectors.clone(),
            gauge: a.gauge.clone(),
            vacuum: a.vacuum,
            mode_overlaps: a.mode_overlaps.clone(),
            project_psd: a.project_psd,
            targets: a.targets.clone(),
            errors: a.errors,
            pair_order: Some(self.pair_order()),
        }
    }

    fn base(&self, seed_label: &str, lo: Option<LocalOscillatorConfig>, schedule: Vec<PhaseSetting>) -> ExperimentConfig {
        ExperimentConfig {
            channels: self.channels.clone(),
            source: self.source.clone(),
            lo,
            detectors: self.detectors.clone(),
            schedule,
            seed: derive_seed(self.seed, seed_label),
            signal_blocked: false,
            regime: self.regime,
            keep_empty: false,
        }
    }

    fn sweep(&self, ch: usize) -> Vec<PhaseSetting> {
        let n = self.num_channels();
        let origin: Vec<f64> = (0..n).map(|k| self.lo.phase(k)).collect();
        sweep_schedule(&origin, ch, self.sweep.points, self.sweep.shots)
    }

    /// Every run of the plan in a fixed order: diagonals, pairs, singles.
    pub fn runs(&self) -> Result<Vec<PlannedRun>> {
        let n = self.num_channels();
        let names = self.channel_names();
        if names.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: names.len() });
        }
        let mut runs = vec![PlannedRun {
            name: "diagonal".into(),
            role: RunRole::Diagonal,
            config: self.base("diagonal", None, vec![PhaseSetting { phases: Vec::new(), shots: self.diagonal_shots }]),
        }];
        for (i, j) in self.pair_order() {
            if i >= j || j >= n {
                return Err(Error::InvalidParameter(format!("pair ({i},{j}) must satisfy i < j < {n}")));
            }
            let name = format!("pair_{}", pair_label(&names, (i, j)));
            runs.push(PlannedRun { config: self.base(&name, Some(self.lo.clone()), self.sweep(i)), name, role: RunRole::Pair { i, j } });
        }
        for &k in &self.singles {
            if k >= n {
                return Err(Error::ModeOutOfRange { index: k, num_modes: n });
            }
            let name = format!("singles_{}", names[k]);
            runs.push(PlannedRun { config: self.base(&name, Some(self.lo.clone()), self.sweep(k)), name, role: RunRole::Singles { channel: k } });
        }
        for r in &runs {
            r.config.validate()?;
        }
        Ok(runs)
    }
}

/// Assembles reconstruction input from per-run tables, given in the order
/// of `MeasurementPlan::runs` as `(signal, background)`.
pub fn assemble_data(runs: &[PlannedRun], tables: Vec<(CountTable, Option<CountTable>)>) -> Result<MeasurementData> {
    if runs.len() != tables.len() {
        return Err(Error::DimensionMismatch { expected: runs.len(), found: tables.len() });
    }
    let mut diagonals = None;
    let mut pairs = Vec::new();
    let mut singles = Vec::new();
    for (run, (signal, background)) in runs.iter().zip(tables) {
        let sweep = |bg: Option<CountTable>| -> Result<FringeDataset> {
            let bg = bg.ok_or_else(|| Error::InvalidParameter(format!("run {} has no background counts", run.name)))?;
            FringeDataset::new(signal.clone(), bg)
        };
        match run.role {
            RunRole::Diagonal => diagonals = Some(signal.clone()),
            RunRole::Pair { i, j } => pairs.push(PairSweep { pair: (i, j), data: sweep(background)? }),
            RunRole::Singles { channel } => singles.push(SinglesSweep { channel, data: sweep(background)? }),
        }
    }
    let diagonals = diagonals.ok_or_else(|| Error::InvalidParameter("plan has no oscillator-off run".into()))?;
    Ok(MeasurementData { diagonals, pairs, singles })
}

/// Counts for every run of the plan.
pub fn simulate_plan(plan: &MeasurementPlan, mode: SweepMode) -> Result<MeasurementData> {
    let runs = plan.runs()?;
    let count = |c: &ExperimentConfig| match mode {
        SweepMode::Sampled => sample_counts(c),
        SweepMode::Expected => expected_counts(c),
    };
    let tables = runs
        .iter()
        .map(|r| {
            let signal = count(&r.config)?;
            let background = if r.has_background() { Some(count(&r.config.blocked())?) } else { None };
            Ok((signal, background))
        })
        .collect::<Result<Vec<_>>>()?;
    assemble_data(&runs, tables)
}

/// Simulates and reconstructs in one call.
pub fn run_plan(plan: &MeasurementPlan, mode: SweepMode) -> Result<(MeasurementData, ReconstructionResult)> {
    let data = simulate_plan(plan, mode)?;
    let result = reconstruct(&data, &plan.options())?;
    Ok((data, result))
}
