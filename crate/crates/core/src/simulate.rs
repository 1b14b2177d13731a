//! Monte Carlo generation of herald click records.
//!
//! For every phase setting the exact joint click distribution over all
//! channels is computed once; each herald then consumes one uniform variate
//! from a ChaCha stream keyed by (run, setting) and positioned by the global
//! shot index. Results therefore do not depend on how shots are split
//! across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::counting::{CountRow, CountTable, FringeDataset};
use crate::detection::{model_click_distribution, DetectionRegime, DetectorModel, LocalOscillatorConfig};
use crate::error::{Error, Result};
use crate::events::{default_channel_names, Event, EventFile, EventHeader, ScheduleEntry, EVENT_FORMAT};
use crate::models::{StructuredState, WStateSpec};

/// Shots handled by one parallel work item.
const SHARD: u64 = 1 << 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StateConfig {
    W(WStateSpec),
    Structured { model: StructuredState },
    Vacuum { num_modes: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseOp {
    /// Photon loss on one mode.
    Loss { mode: usize, transmittance: f64 },
    /// Fraction of heralds that carry no signal photon.
    VacuumAdmixture { fraction: f64 },
    TwoPhotonContamination { trace: f64 },
    /// Scales every coherence by `visibility`.
    Dephasing { visibility: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceConfig {
    pub state: StateConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub noise: Vec<NoiseOp>,
}

impl SourceConfig {
    pub fn new(state: StateConfig) -> Self {
        SourceConfig { state, noise: Vec::new() }
    }

    /// The heralded state after all noise operations.
    pub fn prepare(&self) -> Result<StructuredState> {
        let mut model = match &self.state {
            StateConfig::W(spec) => StructuredState::from_w(spec)?,
            StateConfig::Structured { model } => model.clone(),
            StateConfig::Vacuum { num_modes } => StructuredState::vacuum(*num_modes)?,
        };
        for op in &self.noise {
            model = match op {
                NoiseOp::Loss { mode, transmittance } => {
                    let rho = model.to_density_unchecked(model.required_cutoff())?;
                    let lossy = rho.apply_loss(*mode, *transmittance)?;
                    StructuredState::extract_structure(&lossy)?.model
                }
                NoiseOp::VacuumAdmixture { fraction } => model.with_vacuum_admixture(*fraction)?,
                NoiseOp::TwoPhotonContamination { trace } => model.with_two_photon_contamination(*trace)?,
                NoiseOp::Dephasing { visibility } => model.with_dephasing(*visibility)?,
            };
        }
        model.validate()?;
        Ok(model)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSetting {
    /// Absolute oscillator phases; empty means the oscillator defaults.
    #[serde(default)]
    pub phases: Vec<f64>,
    pub shots: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub channels: Vec<String>,
    pub source: SourceConfig,
    /// Oscillators mixed into every channel; `None` detects the signal directly.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo: Option<LocalOscillatorConfig>,
    pub detectors: DetectorModel,
    pub schedule: Vec<PhaseSetting>,
    pub seed: u64,
    /// Oscillator-only run with the signal path blocked.
    #[serde(default)]
    pub signal_blocked: bool,
    #[serde(default)]
    pub regime: DetectionRegime,
    /// Write heralds without clicks to event files as well.
    #[serde(default)]
    pub keep_empty: bool,
}

impl ExperimentConfig {
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

    pub fn validate(&self) -> Result<()> {
        let n = self.num_channels();
        if n == 0 || n > 16 {
            return Err(Error::InvalidParameter(format!("{n} channels; expected 1 to 16")));
        }
        if !self.channels.is_empty() && self.channels.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: self.channels.len() });
        }
        let names = self.channel_names();
        for (i, c) in names.iter().enumerate() {
            if c.is_empty() || names[..i].contains(c) {
                return Err(Error::InvalidParameter(format!("channel name {c:?} empty or repeated")));
            }
        }
        self.detectors.validate(n)?;
        if let Some(lo) = &self.lo {
            lo.validate(n)?;
        }
        if self.schedule.is_empty() {
            return Err(Error::InvalidParameter("phase schedule is empty".into()));
        }
        for (k, s) in self.schedule.iter().enumerate() {
            if s.shots == 0 {
                return Err(Error::InvalidParameter(format!("schedule entry {k} has zero shots")));
            }
            if !s.phases.is_empty() && s.phases.len() != n {
                return Err(Error::DimensionMismatch { expected: n, found: s.phases.len() });
            }
            if s.phases.iter().any(|p| !p.is_finite()) {
                return Err(Error::InvalidParameter(format!("schedule entry {k} has a non-finite phase")));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn digest(&self) -> String {
        let text = serde_json::to_vec(self).unwrap_or_default();
        hex::encode(Sha256::digest(&text))
    }

    /// Oscillator settings used for schedule entry `k`.
    pub fn lo_at(&self, k: usize) -> Option<LocalOscillatorConfig> {
        let lo = self.lo.as_ref()?;
        let phases = &self.schedule[k].phases;
        Some(if phases.is_empty() { lo.clone() } else { lo.with_phases(phases) })
    }

    /// Copy of this configuration for the oscillator-only run.
    pub fn blocked(&self) -> ExperimentConfig {
        ExperimentConfig { signal_blocked: true, ..self.clone() }
    }

    fn effective_state(&self) -> Result<StructuredState> {
        let model = self.source.prepare()?;
        if model.num_modes() != self.num_channels() {
            return Err(Error::DimensionMismatch { expected: self.num_channels(), found: model.num_modes() });
        }
        if self.signal_blocked {
            StructuredState::vacuum(model.num_modes())
        } else {
            Ok(model)
        }
    }

    /// Exact outcome distribution for every schedule entry.
    pub fn distributions(&self) -> Result<Vec<Vec<f64>>> {
        self.validate()?;
        let model = self.effective_state()?;
        (0..self.schedule.len())
            .map(|k| model_click_distribution(&model, self.lo_at(k).as_ref(), &self.detectors, self.regime))
            .collect()
    }

    fn header(&self) -> EventHeader {
        EventHeader {
            format: EVENT_FORMAT.into(),
            config_digest: self.digest(),
            seed: self.seed,
            channels: self.channel_names(),
            schedule: self
                .schedule
                .iter()
                .enumerate()
                .map(|(k, s)| ScheduleEntry {
                    phases: self.lo_at(k).map(|lo| (0..self.num_channels()).map(|c| lo.phase(c)).collect()).unwrap_or_default(),
                    shots: s.shots,
                })
                .collect(),
            signal_blocked: self.signal_blocked,
            first_shot: 0,
        }
    }
}

/// Inverse-CDF sampler over the outcome lattice.
struct OutcomeSampler {
    cdf: Vec<f64>,
}

impl OutcomeSampler {
    fn new(dist: &[f64]) -> Result<Self> {
        if let Some(p) = dist.iter().find(|p| **p < -1e-12 || !p.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "outcome weight {p:e} is not a probability; this detection regime cannot be sampled"
            )));
        }
        let total: f64 = dist.iter().map(|p| p.max(0.0)).sum();
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = dist
            .iter()
            .map(|p| {
                acc += p.max(0.0) / total;
                acc
            })
            .collect();
        if let Some(last) = cdf.last_mut() {
            *last = f64::INFINITY;
        }
        Ok(OutcomeSampler { cdf })
    }

    fn draw(&self, u: f64) -> u32 {
        self.cdf.partition_point(|&c| c <= u) as u32
    }
}

fn stream_id(signal_blocked: bool, phase_idx: usize) -> u64 {
    (u64::from(signal_blocked) << 32) | phase_idx as u64
}

/// Calls `visit(shot, mask)` for shots `[start, end)` of one setting.
fn run_shard(seed: u64, stream: u64, start: u64, end: u64, sampler: &OutcomeSampler, mut visit: impl FnMut(u64, u32)) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    // one f64 consumes two 32-bit words
    rng.set_word_pos(u128::from(start) * 2);
    for shot in start..end {
        let u: f64 = rng.random();
        visit(shot, sampler.draw(u));
    }
}

fn shards(start: u64, end: u64) -> Vec<(u64, u64)> {
    let mut out = Vec::new();
    let mut s = start;
    while s < end {
        let e = (s + SHARD).min(end);
        out.push((s, e));
        s = e;
    }
    out
}

pub fn sample_events(cfg: &ExperimentConfig) -> Result<EventFile> {
    let dists = cfg.distributions()?;
    let header = cfg.header();
    let mut events = Vec::new();
    for (k, (start, end)) in header.shot_ranges().into_iter().enumerate() {
        let sampler = OutcomeSampler::new(&dists[k])?;
        let stream = stream_id(cfg.signal_blocked, k);
        let parts: Vec<Vec<Event>> = shards(start, end)
            .into_par_iter()
            .map(|(s, e)| {
                let mut local = Vec::new();
                run_shard(cfg.seed, stream, s, e, &sampler, |shot, mask| {
                    if mask != 0 || cfg.keep_empty {
                        local.push(Event { shot, phase_idx: k, mask });
                    }
                });
                local
            })
            .collect();
        events.extend(parts.into_iter().flatten());
    }
    Ok(EventFile { header, events })
}

/// Same counts as `count(&sample_events(cfg))` without materializing records.
pub fn sample_counts(cfg: &ExperimentConfig) -> Result<CountTable> {
    let dists = cfg.distributions()?;
    let header = cfg.header();
    let mut table = CountTable::from_header(&header);
    for (k, (start, end)) in header.shot_ranges().into_iter().enumerate() {
        let sampler = OutcomeSampler::new(&dists[k])?;
        let stream = stream_id(cfg.signal_blocked, k);
        let cells = dists[k].len();
        let hist = shards(start, end)
            .into_par_iter()
            .map(|(s, e)| {
                let mut h = vec![0u64; cells];
                run_shard(cfg.seed, stream, s, e, &sampler, |_, mask| h[mask as usize] += 1);
                h
            })
            .reduce(|| vec![0u64; cells], |a, b| a.iter().zip(&b).map(|(x, y)| x + y).collect());
        table.rows[k].exclusive = hist.iter().map(|&c| c as f64).collect();
    }
    Ok(table)
}

/// Noiseless counts: shots times the outcome weights.
pub fn expected_counts(cfg: &ExperimentConfig) -> Result<CountTable> {
    let dists = cfg.distributions()?;
    let header = cfg.header();
    let mut table = CountTable::from_header(&header);
    for (row, dist) in table.rows.iter_mut().zip(&dists) {
        let shots = row.shots;
        *row = CountRow { exclusive: dist.iter().map(|p| p * shots).collect(), ..row.clone() };
    }
    Ok(table)
}

/// How a sweep is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    #[default]
    Sampled,
    Expected,
}

/// Signal run plus the matching oscillator-only run.
pub fn sweep_phase(cfg: &ExperimentConfig, mode: SweepMode) -> Result<FringeDataset> {
    let run = |c: &ExperimentConfig| match mode {
        SweepMode::Sampled => sample_counts(c),
        SweepMode::Expected => expected_counts(c),
    };
    let signal = run(&ExperimentConfig { signal_blocked: false, ..cfg.clone() })?;
    let background = run(&cfg.blocked())?;
    FringeDataset::new(signal, background)
}

/// Schedule sweeping channel `ch` over `points` equally spaced phases with
/// the other channels held at `base`.
pub fn sweep_schedule(base: &[f64], ch: usize, points: usize, shots: u64) -> Vec<PhaseSetting> {
    (0..points)
        .map(|k| {
            let mut phases = base.to_vec();
            phases[ch] = base[ch] + 2.0 * std::f64::consts::PI * k as f64 / points as f64;
            PhaseSetting { phases, shots }
        })
        .collect()
}
