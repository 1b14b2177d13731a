//! Human-readable report and CSV exports of a reconstruction.

use std::f64::consts::PI;
use std::fmt::Write;

use pathtomo::counting::fmt_sig12;
use pathtomo::models::Pattern;
use pathtomo::tomography::{ErrorMethod, FringeFit, PhaseConvention, ReconstructionResult, VacuumHandling};
use serde::{Deserialize, Serialize};

/// Result file written by `reconstruct`: the result plus where it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultDoc {
    pub config_digest: String,
    pub result: ReconstructionResult,
}

pub const FIT_CSV_HEADER: &str =
    "dataset,amplitude,amplitude_err,offset,offset_err,theta0,theta0_err,phase_defined,visibility,visibility_err,raw_visibility,chi2,dof";

pub fn fit_csv_row(label: &str, f: &FringeFit) -> String {
    let cells = [
        fmt_sig12(f.amplitude),
        fmt_sig12(f.amplitude_err()),
        fmt_sig12(f.offset),
        fmt_sig12(f.offset_err()),
        fmt_sig12(f.theta0),
        fmt_sig12(f.theta0_err()),
        f.phase_defined.to_string(),
        fmt_sig12(f.visibility),
        fmt_sig12(f.visibility_err),
        fmt_sig12(f.raw_visibility),
        fmt_sig12(f.chi2),
        f.dof.to_string(),
    ];
    format!("{label},{}", cells.join(","))
}

/// One row per fitted fringe: pairs first, then singles.
pub fn fits_csv(r: &ReconstructionResult) -> String {
    let mut out = String::from(FIT_CSV_HEADER);
    out.push('\n');
    for p in &r.pairs {
        out.push_str(&fit_csv_row(&format!("pair_{}", p.label), &p.fit));
        out.push('\n');
    }
    for s in &r.vacuum {
        out.push_str(&fit_csv_row(&format!("singles_{}", r.channels[s.channel]), &s.fit));
        out.push('\n');
    }
    out
}

fn pm(v: f64, e: f64) -> String {
    format!("{v:.6} ± {e:.6}")
}

fn gauge_name(g: &PhaseConvention) -> String {
    match g {
        PhaseConvention::Absolute => "absolute oscillator phases".into(),
        PhaseConvention::ReferencePairs => "reference pairs".into(),
        PhaseConvention::ChannelOffsets { offsets } => format!("channel offsets {offsets:?}"),
    }
}

pub fn render(doc: &ResultDoc) -> String {
    let r = &doc.result;
    let n = r.channels.len();
    let mut s = String::new();
    let _ = writeln!(s, "pathtomo reconstruction");
    let _ = writeln!(s, "config digest: {}", doc.config_digest);
    let _ = writeln!(s, "channels: {}", r.channels.join(" "));
    let errors = match r.error_method {
        ErrorMethod::Propagation => "first-order propagation".to_string(),
        ErrorMethod::Bootstrap { seed, replicates } => {
            let failed = r.bootstrap.map_or(0, |b| b.failed);
            format!("Poisson bootstrap, {replicates} replicates, seed {seed}, {failed} failed")
        }
    };
    let _ = writeln!(s, "errors: {errors}");
    let _ = writeln!(s, "phase gauge: {}", gauge_name(&r.gauge));
    if !r.reference_pairs.is_empty() {
        let _ = writeln!(s, "reference pairs (phase 0): {}", r.reference_pairs.join(", "));
    }

    let _ = writeln!(s, "\ndiagonals (efficiency corrected | raw)");
    let d = &r.diagonals;
    let mut patterns = vec![Pattern::vacuum(n)];
    patterns.extend((0..n).map(|i| Pattern::single(n, i)));
    for p in patterns {
        let key = p.to_string();
        let _ = writeln!(
            s,
            "  p[{key}] = {} | {:.6}",
            pm(d.probabilities[&key], d.std_errors[&key]),
            r.raw_diagonals.probabilities[&key]
        );
    }
    let _ = writeln!(s, "  two-photon mass = {}", pm(d.two_photon_mass, d.two_photon_mass_err));

    let _ = writeln!(s, "\npair coherences");
    for p in &r.pairs {
        let e = &p.estimate;
        let mut line = format!(
            "  d_{} : |d| = {}  theta/pi = {}  V = {}",
            p.label,
            pm(e.magnitude, e.magnitude_err),
            pm(e.phase / PI, e.phase_err / PI),
            pm(p.fit.visibility, p.fit.visibility_err)
        );
        if let Some(c) = &p.corrected {
            let _ = write!(line, "  corrected |d| = {}", pm(c.magnitude, c.magnitude_err));
        }
        if p.reference {
            line.push_str("  (reference)");
        }
        let _ = writeln!(s, "{line}");
    }
    if r.vacuum_handling == VacuumHandling::Estimate {
        let _ = writeln!(s, "\nvacuum coherences <0|rho|1_k>");
        for v in &r.vacuum {
            let e = &v.estimate;
            let _ = writeln!(
                s,
                "  d_{} : |d| = {}  theta/pi = {}",
                r.channels[v.channel],
                pm(e.magnitude, e.magnitude_err),
                pm(e.phase / PI, e.phase_err / PI)
            );
        }
    }
    for c in &r.cycle_checks {
        let (i, j, k) = c.modes;
        let _ = writeln!(
            s,
            "phase cycle {}{}{}: residual/pi = {}",
            r.channels[i],
            r.channels[j],
            r.channels[k],
            pm(c.residual / PI, c.sigma / PI)
        );
    }

    if !r.fidelities.is_empty() {
        let _ = writeln!(s, "\nfidelities (single-photon subspace)");
        for f in &r.fidelities {
            let mut line = format!("  {} : F = {}", f.target, pm(f.raw.value, f.raw.error));
            if let Some(c) = &f.corrected {
                let _ = write!(line, "  mode-match corrected F = {}", pm(c.value, c.error));
            }
            let _ = write!(line, "  full space <W|rho|W> = {:.6}", f.full_space);
            let _ = writeln!(s, "{line}");
        }
    }
    if let Some(o) = &r.mode_match.overlaps {
        let _ = writeln!(s, "mode overlaps: {o:?}");
    }
    let _ = writeln!(
        s,
        "\nminimum eigenvalue: full {:.3e}, subspace {:.3e}; PSD projection {}",
        r.psd.min_eigenvalue_full,
        r.psd.min_eigenvalue_subspace,
        if r.psd.projected { "applied" } else { "off" }
    );
    if r.warnings.is_empty() {
        let _ = writeln!(s, "warnings: none");
    } else {
        let _ = writeln!(s, "warnings:");
        for w in &r.warnings {
            let _ = writeln!(s, "  - {}", w.message);
        }
    }
    s
}

/// Files written by `reconstruct`.
pub struct ResultFiles {
    pub result: std::path::PathBuf,
    pub fits: std::path::PathBuf,
    pub report: std::path::PathBuf,
}

impl ResultFiles {
    pub fn in_dir(dir: &std::path::Path) -> Self {
        ResultFiles { result: dir.join("result.json"), fits: dir.join("fringe_fits.csv"), report: dir.join("report.txt") }
    }
}
