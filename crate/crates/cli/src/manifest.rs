//! Simulation outputs on disk and the manifest that ties them together.

use std::fs;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use pathtomo::counting::{count_reader, CountTable};
use pathtomo::events::{open_maybe_gzip, EventHeader};
use pathtomo::pipeline::{assemble_data, MeasurementPlan, RunRole};
use pathtomo::simulate::{expected_counts, sample_events, ExperimentConfig};
use pathtomo::tomography::{pair_label, MeasurementData};
use serde::{Deserialize, Serialize};

use crate::failure::{input_error, CliResult, Context as _};

pub const MANIFEST_FORMAT: &str = "pathtomo-manifest/1";
pub const MANIFEST_FILE: &str = "manifest.json";

/// What a config file describes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Setup {
    /// Full measurement plan: diagonal run plus phase sweeps.
    Plan { plan: MeasurementPlan },
    /// One experiment with a fixed schedule.
    Experiment { config: ExperimentConfig },
}

impl Setup {
    pub fn digest(&self) -> String {
        match self {
            Setup::Plan { plan } => plan.digest(),
            Setup::Experiment { config } => config.digest(),
        }
    }

    /// Runs to simulate; a single experiment has no role in a plan.
    pub fn runs(&self) -> pathtomo::Result<Vec<(String, Option<RunRole>, ExperimentConfig)>> {
        match self {
            Setup::Plan { plan } => Ok(plan.runs()?.into_iter().map(|r| (r.name, Some(r.role), r.config)).collect()),
            Setup::Experiment { config } => {
                config.validate()?;
                Ok(vec![("run".into(), None, config.clone())])
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataKind {
    /// JSON Lines event files.
    Events,
    /// Noiseless count tables.
    Counts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Simulate,
    Count,
    Reconstruct,
}

pub const PIPELINE: [Stage; 3] = [Stage::Simulate, Stage::Count, Stage::Reconstruct];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Overrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shots: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phases: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRun {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<RunRole>,
    pub seed: u64,
    pub config_digest: String,
    /// File names relative to the manifest.
    pub signal: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    /// Pipeline stages already done, in order.
    pub stages: Vec<Stage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_path: Option<String>,
    pub config_digest: String,
    pub overrides: Overrides,
    pub data: DataKind,
    pub setup: Setup,
    pub runs: Vec<ManifestRun>,
}

/// Parses a config file, telling plans from single experiments by the
/// `sweep` field so that serde reports field-level errors for either.
pub fn parse_setup(text: &str) -> CliResult<Setup> {
    let value: serde_json::Value = serde_json::from_str(text).input("config is not valid JSON")?;
    if value.get("sweep").is_some() {
        let plan: MeasurementPlan = serde_json::from_value(value).input("invalid measurement plan")?;
        Ok(Setup::Plan { plan })
    } else {
        let config: ExperimentConfig = serde_json::from_value(value).input("invalid experiment config")?;
        Ok(Setup::Experiment { config })
    }
}

pub fn apply_overrides(setup: &mut Setup, o: &Overrides) -> CliResult<()> {
    match setup {
        Setup::Plan { plan } => {
            if let Some(seed) = o.seed {
                plan.seed = seed;
            }
            if let Some(shots) = o.shots {
                plan.sweep.shots = shots;
                plan.diagonal_shots = shots;
            }
            if let Some(points) = o.phases {
                plan.sweep.points = points;
            }
        }
        Setup::Experiment { config } => {
            if let Some(seed) = o.seed {
                config.seed = seed;
            }
            if let Some(shots) = o.shots {
                for s in &mut config.schedule {
                    s.shots = shots;
                }
            }
            if o.phases.is_some() {
                return Err(input_error("--phases applies to measurement plans only"));
            }
        }
    }
    Ok(())
}

fn file_name(run: &str, background: bool, kind: DataKind) -> String {
    let tail = match kind {
        DataKind::Events => "events.jsonl",
        DataKind::Counts => "counts.json",
    };
    if background {
        format!("{run}.background.{tail}")
    } else {
        format!("{run}.{tail}")
    }
}

fn write_run(config: &ExperimentConfig, path: &Path, kind: DataKind) -> CliResult<()> {
    match kind {
        DataKind::Events => {
            let events = sample_events(config).input("simulation failed")?;
            events.write_path(path).input(format!("cannot write {}", path.display()))?;
        }
        DataKind::Counts => {
            let table = expected_counts(config).input("simulation failed")?;
            let text = serde_json::to_string_pretty(&table).internal("serializing counts")?;
            fs::write(path, text).input(format!("cannot write {}", path.display()))?;
        }
    }
    Ok(())
}

/// Simulates every run of `setup` into `out` and writes the manifest.
pub fn simulate(
    setup: Setup,
    config_path: Option<&Path>,
    overrides: Overrides,
    out: &Path,
    kind: DataKind,
) -> CliResult<RunManifest> {
    fs::create_dir_all(out).input(format!("cannot create {}", out.display()))?;
    let runs = setup.runs().input("invalid configuration")?;
    let mut entries = Vec::with_capacity(runs.len());
    for (name, role, config) in runs {
        let signal = file_name(&name, false, kind);
        write_run(&config, &out.join(&signal), kind)?;
        let background = if config.lo.is_some() {
            let file = file_name(&name, true, kind);
            write_run(&config.blocked(), &out.join(&file), kind)?;
            Some(file)
        } else {
            None
        };
        entries.push(ManifestRun { seed: config.seed, config_digest: config.digest(), name, role, signal, background });
    }
    let manifest = RunManifest {
        format: MANIFEST_FORMAT.into(),
        stages: vec![Stage::Simulate],
        config_path: config_path.map(|p| p.display().to_string()),
        config_digest: setup.digest(),
        overrides,
        data: kind,
        setup,
        runs: entries,
    };
    let text = serde_json::to_string_pretty(&manifest).internal("serializing manifest")?;
    fs::write(out.join(MANIFEST_FILE), text).input("cannot write manifest")?;
    Ok(manifest)
}

/// Count table from an event file (plain or gzip) or a count-table JSON.
pub fn load_table(path: &Path) -> CliResult<CountTable> {
    let what = || format!("cannot read {}", path.display());
    let mut reader = BufReader::new(open_maybe_gzip(path).input(what())?);
    let mut first = String::new();
    reader.read_line(&mut first).input(what())?;
    if first.is_empty() || serde_json::from_str::<EventHeader>(&first).is_ok() {
        return count_reader(first.as_bytes().chain(reader)).input(path.display());
    }
    let mut rest = String::new();
    reader.read_to_string(&mut rest).input(what())?;
    first.push_str(&rest);
    serde_json::from_str(&first).input(format!("{} is neither an event file nor a count table", path.display()))
}

pub fn read_manifest(path: &Path) -> CliResult<(RunManifest, PathBuf)> {
    let file = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
    let text = fs::read_to_string(&file).input(format!("cannot read {}", file.display()))?;
    let manifest: RunManifest = serde_json::from_str(&text).input(format!("invalid manifest {}", file.display()))?;
    if manifest.format != MANIFEST_FORMAT {
        return Err(input_error(format!("unknown manifest format {:?}", manifest.format)));
    }
    if manifest.stages.is_empty() || !PIPELINE.starts_with(&manifest.stages) {
        return Err(input_error(format!("manifest stages {:?} are not a prefix of {:?}", manifest.stages, PIPELINE)));
    }
    let dir = file.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((manifest, dir))
}

/// Reconstruction input from the files listed in a plan manifest.
pub fn load_data(manifest: &RunManifest, dir: &Path) -> CliResult<(MeasurementPlan, MeasurementData)> {
    let Setup::Plan { plan } = &manifest.setup else {
        return Err(input_error("reconstruction needs a measurement plan, not a single experiment"));
    };
    let runs = plan.runs().input("invalid plan in manifest")?;
    let names = plan.channel_names();
    let mut tables = Vec::with_capacity(runs.len());
    for run in &runs {
        let Some(entry) = manifest.runs.iter().find(|e| e.name == run.name) else {
            let err = match run.role {
                RunRole::Pair { i, j } => pathtomo::Error::MissingPair(pair_label(&names, (i, j))),
                _ => pathtomo::Error::InvalidParameter(format!("manifest has no run {}", run.name)),
            };
            return Err(input_error(err));
        };
        let signal = load_table(&dir.join(&entry.signal))?;
        let background = entry.background.as_ref().map(|b| load_table(&dir.join(b))).transpose()?;
        tables.push((signal, background));
    }
    let data = assemble_data(&runs, tables).input("inconsistent run files")?;
    Ok((plan.clone(), data))
}
