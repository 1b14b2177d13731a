//! Count tables built from click records and the diagonal estimates
//! derived from them.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read};

use serde::{Deserialize, Serialize};

use crate::detection::DetectorModel;
use crate::error::{Error, Result};
use crate::events::{mask_names, EventFile, EventHeader, EventStream};
use crate::models::Pattern;

/// Label of a channel subset; the empty set is `"none"`.
pub fn subset_label(channels: &[String], mask: usize) -> String {
    if mask == 0 {
        "none".to_string()
    } else {
        mask_names(channels, mask as u32).concat()
    }
}

fn parse_label(channels: &[String], label: &str) -> Result<usize> {
    if label == "none" {
        return Ok(0);
    }
    let mut mask = 0;
    let mut rest = label;
    'outer: while !rest.is_empty() {
        for (i, c) in channels.iter().enumerate() {
            if let Some(r) = rest.strip_prefix(c.as_str()) {
                mask |= 1 << i;
                rest = r;
                continue 'outer;
            }
        }
        return Err(Error::InvalidParameter(format!("unknown subset label {label:?}")));
    }
    Ok(mask)
}

/// Counts for one phase setting. Values are stored as `f64` so that
/// expected (noiseless) counts fit in the same table.
#[derive(Debug, Clone, PartialEq)]
pub struct CountRow {
    pub phase_idx: usize,
    pub phases: Vec<f64>,
    pub shots: f64,
    /// Heralds whose click set is exactly the subset with this bitmask.
    pub exclusive: Vec<f64>,
}

impl CountRow {
    pub fn zeros(phase_idx: usize, phases: Vec<f64>, num_channels: usize) -> Self {
        CountRow { phase_idx, phases, shots: 0.0, exclusive: vec![0.0; 1 << num_channels] }
    }

    /// Heralds whose click set contains `mask`.
    pub fn inclusive(&self, mask: usize) -> f64 {
        self.exclusive.iter().enumerate().filter(|(s, _)| s & mask == mask).map(|(_, c)| c).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CountTableDoc", into = "CountTableDoc")]
pub struct CountTable {
    pub channels: Vec<String>,
    pub rows: Vec<CountRow>,
}

#[derive(Serialize, Deserialize)]
struct CountRowDoc {
    phase_idx: usize,
    phases: Vec<f64>,
    shots: f64,
    exclusive: BTreeMap<String, f64>,
    #[serde(default)]
    inclusive: BTreeMap<String, f64>,
}

#[derive(Serialize, Deserialize)]
struct CountTableDoc {
    channels: Vec<String>,
    rows: Vec<CountRowDoc>,
}

impl From<CountTable> for CountTableDoc {
    fn from(t: CountTable) -> Self {
        let rows = t
            .rows
            .iter()
            .map(|r| CountRowDoc {
                phase_idx: r.phase_idx,
                phases: r.phases.clone(),
                shots: r.shots,
                exclusive: (0..r.exclusive.len()).map(|m| (subset_label(&t.channels, m), r.exclusive[m])).collect(),
                inclusive: (1..r.exclusive.len()).map(|m| (subset_label(&t.channels, m), r.inclusive(m))).collect(),
            })
            .collect();
        CountTableDoc { channels: t.channels, rows }
    }
}

impl TryFrom<CountTableDoc> for CountTable {
    type Error = Error;

    fn try_from(doc: CountTableDoc) -> Result<Self> {
        let n = doc.channels.len();
        let mut rows = Vec::with_capacity(doc.rows.len());
        for r in doc.rows {
            let mut row = CountRow::zeros(r.phase_idx, r.phases, n);
            row.shots = r.shots;
            for (label, v) in r.exclusive {
                row.exclusive[parse_label(&doc.channels, &label)?] = v;
            }
            for (label, v) in r.inclusive {
                let mask = parse_label(&doc.channels, &label)?;
                if row.inclusive(mask) != v {
                    return Err(Error::InvalidParameter(format!(
                        "inclusive count for {label} disagrees with the exclusive counts"
                    )));
                }
            }
            rows.push(row);
        }
        Ok(CountTable { channels: doc.channels, rows })
    }
}

impl CountTable {
    pub fn from_header(header: &EventHeader) -> CountTable {
        let n = header.channels.len();
        let rows = header
            .schedule
            .iter()
            .enumerate()
            .map(|(k, s)| {
                let mut row = CountRow::zeros(k, s.phases.clone(), n);
                row.shots = s.shots as f64;
                row.exclusive[0] = s.shots as f64;
                row
            })
            .collect();
        CountTable { channels: header.channels.clone(), rows }
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn total_shots(&self) -> f64 {
        self.rows.iter().map(|r| r.shots).sum()
    }

    /// All rows folded into one.
    pub fn pooled(&self) -> CountRow {
        let mut out = CountRow::zeros(0, Vec::new(), self.num_channels());
        for r in &self.rows {
            out.shots += r.shots;
            for (o, c) in out.exclusive.iter_mut().zip(&r.exclusive) {
                *o += c;
            }
        }
        out
    }

    fn record(&mut self, phase_idx: usize, mask: u32) {
        let row = &mut self.rows[phase_idx];
        if mask != 0 {
            row.exclusive[mask as usize] += 1.0;
            row.exclusive[0] -= 1.0;
        }
    }

    /// Element-wise sum of two tables over the same schedule.
    pub fn merge(&self, other: &CountTable) -> Result<CountTable> {
        if self.channels != other.channels {
            return Err(Error::InvalidParameter("tables have different channels".into()));
        }
        if self.rows.len() != other.rows.len() {
            return Err(Error::DimensionMismatch { expected: self.rows.len(), found: other.rows.len() });
        }
        let rows = self
            .rows
            .iter()
            .zip(&other.rows)
            .map(|(a, b)| CountRow {
                phase_idx: a.phase_idx,
                phases: a.phases.clone(),
                shots: a.shots + b.shots,
                exclusive: a.exclusive.iter().zip(&b.exclusive).map(|(x, y)| x + y).collect(),
            })
            .collect();
        Ok(CountTable { channels: self.channels.clone(), rows })
    }

    /// CSV with one line per phase setting, numbers rounded to 12
    /// significant digits.
    pub fn to_csv(&self) -> String {
        let n = self.num_channels();
        let phase_cols = self.rows.iter().map(|r| r.phases.len()).max().unwrap_or(0);
        let mut head = vec!["phase_idx".to_string()];
        head.extend((0..phase_cols).map(|k| format!("phase_{}", self.channels.get(k).map_or("", |c| c.as_str()))));
        head.push("shots".into());
        head.extend((0..1usize << n).map(|m| format!("excl_{}", subset_label(&self.channels, m))));
        head.extend((1..1usize << n).map(|m| format!("incl_{}", subset_label(&self.channels, m))));
        let mut out = head.join(",");
        out.push('\n');
        for r in &self.rows {
            let mut cells = vec![r.phase_idx.to_string()];
            cells.extend((0..phase_cols).map(|k| r.phases.get(k).map_or(String::new(), |p| fmt_sig12(*p))));
            cells.push(fmt_sig12(r.shots));
            cells.extend(r.exclusive.iter().map(|c| fmt_sig12(*c)));
            cells.extend((1..1usize << n).map(|m| fmt_sig12(r.inclusive(m))));
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// Shortest decimal form of `x` rounded to 12 significant digits.
pub fn fmt_sig12(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let rounded: f64 = format!("{x:.11e}").parse().unwrap_or(x);
    format!("{rounded}")
}

pub fn count(events: &EventFile) -> CountTable {
    let mut table = CountTable::from_header(&events.header);
    for e in &events.events {
        table.record(e.phase_idx, e.mask);
    }
    table
}

/// Counts a JSONL stream in a single pass without holding the records.
/// Streaming count of an event file. An input without any content, not
/// even a header, counts as an empty table.
pub fn count_reader<R: Read>(reader: R) -> Result<CountTable> {
    let mut reader = BufReader::new(reader);
    if reader.fill_buf()?.is_empty() {
        return Ok(CountTable { channels: Vec::new(), rows: Vec::new() });
    }
    let mut stream = EventStream::new(reader)?;
    let mut table = CountTable::from_header(&stream.header);
    for e in &mut stream {
        let e = e?;
        table.record(e.phase_idx, e.mask);
    }
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagonalEstimate {
    pub channels: Vec<String>,
    /// Probability per photon-number pattern: vacuum, single photons, and
    /// one pattern per coincidence subset.
    pub probabilities: BTreeMap<String, f64>,
    pub std_errors: BTreeMap<String, f64>,
    /// Sum of the two-fold pattern probabilities.
    pub two_photon_mass: f64,
    pub two_photon_mass_err: f64,
    pub efficiency_corrected: bool,
    pub shots: f64,
}

impl DiagonalEstimate {
    fn key(&self, pattern: &Pattern) -> String {
        pattern.to_string()
    }

    pub fn num_modes(&self) -> usize {
        self.channels.len()
    }

    pub fn p_single(&self, mode: usize) -> f64 {
        self.probabilities[&self.key(&Pattern::single(self.num_modes(), mode))]
    }

    pub fn p_single_err(&self, mode: usize) -> f64 {
        self.std_errors[&self.key(&Pattern::single(self.num_modes(), mode))]
    }

    pub fn p_vacuum(&self) -> f64 {
        self.probabilities[&self.key(&Pattern::vacuum(self.num_modes()))]
    }

    pub fn get(&self, pattern: &Pattern) -> Option<f64> {
        self.probabilities.get(&self.key(pattern)).copied()
    }
}

/// Efficiency-corrected diagonal estimate from oscillator-off runs.
pub fn estimate_diagonals(table: &CountTable, det: &DetectorModel) -> Result<DiagonalEstimate> {
    det.validate(table.num_channels())?;
    estimate_with(table, &det.efficiencies, true)
}

/// Same estimate with every efficiency set to one.
pub fn estimate_diagonals_raw(table: &CountTable) -> Result<DiagonalEstimate> {
    estimate_with(table, &vec![1.0; table.num_channels()], false)
}

fn estimate_with(table: &CountTable, eta: &[f64], corrected: bool) -> Result<DiagonalEstimate> {
    let n = table.num_channels();
    let row = table.pooled();
    let shots = row.shots;
    if !(shots > 0.0) {
        return Err(Error::Degenerate("no shots recorded".into()));
    }
    let modes_of = |mask: usize| -> Vec<usize> { (0..n).filter(|i| mask >> i & 1 == 1).collect() };
    let eff = |mask: usize| -> f64 { modes_of(mask).iter().map(|&i| eta[i]).product() };

    // each estimate is Σ_cells w_cell · exclusive(cell) / shots
    let mut weights: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut probabilities = BTreeMap::new();
    let mut pooled_w = vec![0.0; 1 << n];
    for mask in 1..(1usize << n) {
        let modes = modes_of(mask);
        let e = eff(mask);
        let counted = if modes.len() == 1 { row.exclusive[mask] } else { row.inclusive(mask) };
        if e == 0.0 {
            if counted > 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "zero efficiency for subset {} with {counted} counts",
                    subset_label(&table.channels, mask)
                )));
            }
            continue;
        }
        let mut w = vec![0.0; 1 << n];
        for (cell, wc) in w.iter_mut().enumerate() {
            let hit = if modes.len() == 1 { cell == mask } else { cell & mask == mask };
            if hit {
                *wc = 1.0 / e;
            }
        }
        if modes.len() == 2 {
            for (p, wc) in pooled_w.iter_mut().zip(&w) {
                *p += wc;
            }
        }
        let key = Pattern::ones(n, &modes).to_string();
        probabilities.insert(key.clone(), counted / (shots * e));
        weights.insert(key, w);
    }
    let mut vac_w = vec![0.0; 1 << n];
    for (i, w) in vac_w.iter_mut().enumerate() {
        if (i as u32).count_ones() == 1 && eta[i.trailing_zeros() as usize] > 0.0 {
            *w -= 1.0 / eta[i.trailing_zeros() as usize];
        }
        *w -= pooled_w[i];
    }
    let q: Vec<f64> = row.exclusive.iter().map(|c| c / shots).collect();
    let se = |w: &[f64]| -> f64 {
        let mean: f64 = w.iter().zip(&q).map(|(a, b)| a * b).sum();
        let second: f64 = w.iter().zip(&q).map(|(a, b)| a * a * b).sum();
        ((second - mean * mean).max(0.0) / shots).sqrt()
    };
    let mut std_errors: BTreeMap<String, f64> = weights.iter().map(|(k, w)| (k.clone(), se(w))).collect();
    let two_photon_mass: f64 = pooled_w.iter().zip(&q).map(|(a, b)| a * b).sum();
    let singles: f64 = (0..n).map(|i| probabilities.get(&Pattern::single(n, i).to_string()).copied().unwrap_or(0.0)).sum();
    for i in 0..n {
        let key = Pattern::single(n, i).to_string();
        probabilities.entry(key.clone()).or_insert(0.0);
        std_errors.entry(key).or_insert(0.0);
    }
    let vac_key = Pattern::vacuum(n).to_string();
    probabilities.insert(vac_key.clone(), 1.0 - singles - two_photon_mass);
    std_errors.insert(vac_key, se(&vac_w));
    Ok(DiagonalEstimate {
        channels: table.channels.clone(),
        probabilities,
        std_errors,
        two_photon_mass,
        two_photon_mass_err: se(&pooled_w),
        efficiency_corrected: corrected,
        shots,
    })
}

/// Paired signal and oscillator-only counts over a phase sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FringeDataset {
    pub signal: CountTable,
    pub background: CountTable,
}

/// One sweep point reduced to the numbers a fit consumes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FringePoint {
    pub lo_phases: Vec<f64>,
    pub shots: f64,
    pub background_shots: f64,
    pub signal_counts: f64,
    pub background_counts: f64,
}

impl FringePoint {
    /// Background-subtracted counts, with the background rescaled to the
    /// signal shot number.
    pub fn net(&self) -> f64 {
        self.signal_counts - self.background_counts * self.scale()
    }

    /// Ratio of signal to background shots.
    pub fn scale(&self) -> f64 {
        if self.background_shots > 0.0 {
            self.shots / self.background_shots
        } else {
            0.0
        }
    }
}

impl FringeDataset {
    pub fn new(signal: CountTable, background: CountTable) -> Result<Self> {
        if signal.channels != background.channels || signal.rows.len() != background.rows.len() {
            return Err(Error::InvalidParameter("signal and background sweeps do not match".into()));
        }
        for (a, b) in signal.rows.iter().zip(&background.rows) {
            if a.phases != b.phases {
                return Err(Error::InvalidParameter("signal and background phases differ".into()));
            }
        }
        Ok(FringeDataset { signal, background })
    }

    pub fn len(&self) -> usize {
        self.signal.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signal.rows.is_empty()
    }

    /// Inclusive counts of the channel subset `mask` at every point.
    pub fn points(&self, mask: usize) -> Vec<FringePoint> {
        self.signal
            .rows
            .iter()
            .zip(&self.background.rows)
            .map(|(s, b)| FringePoint {
                lo_phases: s.phases.clone(),
                shots: s.shots,
                background_shots: b.shots,
                signal_counts: s.inclusive(mask),
                background_counts: b.inclusive(mask),
            })
            .collect()
    }
}
