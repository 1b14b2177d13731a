mod failure;
mod manifest;
mod report;

use std::fs;
use std::io::{self, Write as _};
use std::panic;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use pathtomo::counting::{fmt_sig12, CountTable, FringeDataset};
use pathtomo::tomography::{fit_fringe, hom_analyze, reconstruct, FringeSample, HomOptions};
use serde::Deserialize;

use failure::{input_error, CliResult, Context as _, Failure, EXIT_INTERNAL, EXIT_STRICT};
use manifest::{DataKind, Overrides};
use report::{ResultDoc, ResultFiles};

#[derive(Parser)]
#[command(name = "pathtomo", version, about = "Simulate and reconstruct single-photon path-entangled states")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate event files for a measurement plan or a single experiment.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Heralds per phase setting (and in the oscillator-off run).
        #[arg(long)]
        shots: Option<u64>,
        /// Phase settings per sweep.
        #[arg(long)]
        phases: Option<usize>,
        /// Write noiseless expected count tables instead of sampled events.
        #[arg(long)]
        expected: bool,
    },
    /// Count coincidences in event files; several files are summed.
    Count {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit one background-subtracted fringe.
    FitFringe {
        #[arg(long)]
        signal: PathBuf,
        #[arg(long)]
        background: PathBuf,
        /// Two channel names, e.g. `A,B`; the fringe variable is the phase difference.
        #[arg(long, conflicts_with = "channel", required_unless_present = "channel")]
        pair: Option<String>,
        /// Singles fringe of one channel against its own oscillator phase.
        #[arg(long)]
        channel: Option<String>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reconstruct the state from the files listed in a manifest.
    Reconstruct {
        /// Manifest file or the directory holding `manifest.json`.
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        project_psd: bool,
        /// Exit with code 3 if the reconstruction raised warnings.
        #[arg(long)]
        strict: bool,
    },
    /// Mode overlap from a two-photon interference scan.
    Hom {
        /// CSV with columns delay,counts,baseline or JSON with the same arrays.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        plateau_distance: f64,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Print the report of a saved result, or its fringe fits as CSV.
    Report {
        result: PathBuf,
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => fs::write(p, text).input(format!("cannot write {}", p.display())),
        None => io::stdout().write_all(text.as_bytes()).internal("writing to stdout"),
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(v).internal("serializing output")?;
    s.push('\n');
    Ok(s)
}

fn channel_index(table: &CountTable, name: &str) -> CliResult<usize> {
    table
        .channels
        .iter()
        .position(|c| c == name.trim())
        .ok_or_else(|| input_error(format!("unknown channel {name:?}; file has {:?}", table.channels)))
}

fn cmd_simulate(config: &Path, out: &Path, overrides: Overrides, expected: bool) -> CliResult<()> {
    let text = fs::read_to_string(config).input(format!("cannot read {}", config.display()))?;
    let mut setup = manifest::parse_setup(&text)?;
    manifest::apply_overrides(&mut setup, &overrides)?;
    let kind = if expected { DataKind::Counts } else { DataKind::Events };
    let m = manifest::simulate(setup, Some(config), overrides, out, kind)?;
    eprintln!("wrote {} runs to {} (config {})", m.runs.len(), out.display(), &m.config_digest[..12]);
    Ok(())
}

fn cmd_count(files: &[PathBuf], format: Format, out: Option<&Path>) -> CliResult<()> {
    let mut total: Option<CountTable> = None;
    for f in files {
        let t = manifest::load_table(f)?;
        total = Some(match total {
            None => t,
            Some(acc) if acc.channels.is_empty() => t,
            Some(acc) if t.channels.is_empty() => acc,
            Some(acc) => acc.merge(&t).input(format!("cannot add {} to the previous files", f.display()))?,
        });
    }
    let table = total.unwrap_or(CountTable { channels: vec![], rows: vec![] });
    let text = match format {
        Format::Json => to_json(&table)?,
        Format::Csv => table.to_csv(),
    };
    emit(out, &text)
}

/// Maps a phase setting to the fringe variable.
type FringeAxis = Box<dyn Fn(&[f64]) -> f64>;

fn cmd_fit_fringe(
    signal: &Path,
    background: &Path,
    pair: Option<&str>,
    channel: Option<&str>,
    format: Format,
    out: Option<&Path>,
) -> CliResult<()> {
    let data = FringeDataset::new(manifest::load_table(signal)?, manifest::load_table(background)?)
        .input("signal and background do not belong together")?;
    let (label, mask, x): (String, usize, FringeAxis) = match (pair, channel) {
        (Some(p), _) => {
            let names: Vec<&str> = p.split(',').collect();
            let [a, b] = names[..] else {
                return Err(input_error(format!("--pair expects two channels like A,B, got {p:?}")));
            };
            let (i, j) = (channel_index(&data.signal, a)?, channel_index(&data.signal, b)?);
            if i == j {
                return Err(input_error("--pair needs two different channels"));
            }
            (format!("pair_{}{}", a.trim(), b.trim()), (1 << i) | (1 << j), Box::new(move |ph| ph[i] - ph[j]))
        }
        (None, Some(c)) => {
            let k = channel_index(&data.signal, c)?;
            (format!("singles_{}", c.trim()), 1 << k, Box::new(move |ph| ph[k]))
        }
        (None, None) => return Err(input_error("give --pair or --channel")),
    };
    let points = data.points(mask);
    let n = data.signal.num_channels();
    if let Some(p) = points.iter().find(|p| p.lo_phases.len() != n) {
        return Err(input_error(format!(
            "phase setting has {} oscillator phases, expected {n}; was the oscillator on?",
            p.lo_phases.len()
        )));
    }
    let samples: Vec<FringeSample> = points.iter().map(|p| FringeSample::from_point(p, x(&p.lo_phases))).collect();
    let fit = fit_fringe(&samples).input(format!("fit of {label} failed"))?;
    let text = match format {
        Format::Json => to_json(&serde_json::json!({ "dataset": label, "fit": fit }))?,
        Format::Csv => format!("{}\n{}\n", report::FIT_CSV_HEADER, report::fit_csv_row(&label, &fit)),
    };
    emit(out, &text)
}

fn cmd_reconstruct(manifest_path: &Path, out: &Path, project_psd: bool, strict: bool) -> CliResult<()> {
    let (m, dir) = manifest::read_manifest(manifest_path)?;
    let (plan, data) = manifest::load_data(&m, &dir)?;
    let mut options = plan.options();
    options.project_psd |= project_psd;
    let result = reconstruct(&data, &options).input("reconstruction failed")?;
    let doc = ResultDoc { config_digest: m.config_digest.clone(), result };
    let text = report::render(&doc);
    fs::create_dir_all(out).input(format!("cannot create {}", out.display()))?;
    let files = ResultFiles::in_dir(out);
    fs::write(&files.result, to_json(&doc)?).input("cannot write result")?;
    fs::write(&files.fits, report::fits_csv(&doc.result)).input("cannot write fringe fits")?;
    fs::write(&files.report, &text).input("cannot write report")?;
    print!("{text}");
    for w in &doc.result.warnings {
        eprintln!("warning: {}", w.message);
    }
    if strict && !doc.result.warnings.is_empty() {
        return Err(Failure {
            code: EXIT_STRICT,
            error: anyhow::anyhow!("{} warning(s) with --strict", doc.result.warnings.len()),
        });
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
struct HomScan {
    delay: Vec<f64>,
    counts: Vec<f64>,
    baseline: Vec<f64>,
}

#[derive(Debug, Deserialize)]
struct HomRow {
    delay: f64,
    counts: f64,
    baseline: f64,
}

fn read_hom(path: &Path) -> CliResult<HomScan> {
    let text = fs::read_to_string(path).input(format!("cannot read {}", path.display()))?;
    if text.trim_start().starts_with('{') {
        return serde_json::from_str(&text).input(format!("invalid scan {}", path.display()));
    }
    let mut scan = HomScan { delay: vec![], counts: vec![], baseline: vec![] };
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    for row in reader.deserialize() {
        let r: HomRow = row.input(format!("invalid scan {}", path.display()))?;
        scan.delay.push(r.delay);
        scan.counts.push(r.counts);
        scan.baseline.push(r.baseline);
    }
    Ok(scan)
}

fn cmd_hom(input: &Path, plateau_distance: f64, format: Format) -> CliResult<()> {
    let scan = read_hom(input)?;
    let r = hom_analyze(&scan.delay, &scan.counts, &scan.baseline, HomOptions { plateau_distance })
        .input("HOM analysis failed")?;
    let text = match format {
        Format::Json => to_json(&r)?,
        Format::Csv => {
            let mut s = String::from("delay,normalized\n");
            for (d, n) in scan.delay.iter().zip(&r.normalized) {
                s.push_str(&format!("{},{}\n", fmt_sig12(*d), fmt_sig12(*n)));
            }
            s
        }
    };
    emit(None, &text)?;
    eprintln!("M_dip = {:.6} (n_ph = {:.6}, dip at {})", r.m_dip, r.n_ph, r.dip_delay);
    Ok(())
}

fn cmd_report(path: &Path, format: Option<Format>) -> CliResult<()> {
    let text = fs::read_to_string(path).input(format!("cannot read {}", path.display()))?;
    let doc: ResultDoc = serde_json::from_str(&text).input(format!("invalid result file {}", path.display()))?;
    let text = match format {
        None => report::render(&doc),
        Some(Format::Csv) => report::fits_csv(&doc.result),
        Some(Format::Json) => to_json(&doc)?,
    };
    emit(None, &text)
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate { config, out, seed, shots, phases, expected } => {
            cmd_simulate(&config, &out, Overrides { seed, shots, phases }, expected)
        }
        Command::Count { files, format, out } => cmd_count(&files, format, out.as_deref()),
        Command::FitFringe { signal, background, pair, channel, format, out } => {
            cmd_fit_fringe(&signal, &background, pair.as_deref(), channel.as_deref(), format, out.as_deref())
        }
        Command::Reconstruct { manifest, out, project_psd, strict } => {
            cmd_reconstruct(&manifest, &out, project_psd, strict)
        }
        Command::Hom { input, plateau_distance, format } => cmd_hom(&input, plateau_distance, format),
        Command::Report { result, format } => cmd_report(&result, format),
    }
}

fn init_threads() -> CliResult<()> {
    let Ok(value) = std::env::var("PATHTOMO_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| input_error(format!("PATHTOMO_THREADS must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().internal("starting thread pool")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = panic::catch_unwind(|| init_threads().and_then(|()| run(cli)));
    match outcome {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(f)) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code as u8)
        }
        Err(_) => ExitCode::from(EXIT_INTERNAL as u8),
    }
}
