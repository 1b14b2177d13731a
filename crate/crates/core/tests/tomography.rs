use std::f64::consts::PI;

use approx::assert_abs_diff_eq;
use num_complex::Complex64;
use pathtomo::detection::{DetectionRegime, DetectorModel, LocalOscillatorConfig};
use pathtomo::models::{StructuredState, WStateSpec};
use pathtomo::pipeline::{run_plan, AnalysisSettings, MeasurementPlan, SweepSpec};
use pathtomo::simulate::{SourceConfig, StateConfig, SweepMode};
use pathtomo::tomography::*;
use pathtomo::Error;

fn plan(model: StructuredState, lo: LocalOscillatorConfig, eta: f64) -> MeasurementPlan {
    let n = model.num_modes();
    MeasurementPlan {
        channels: Vec::new(),
        source: SourceConfig::new(StateConfig::Structured { model }),
        lo,
        detectors: DetectorModel::uniform(n, eta),
        seed: 11,
        regime: DetectionRegime::Linear,
        diagonal_shots: 1_000_000,
        sweep: SweepSpec { points: 12, shots: 1_000_000 },
        pairs: None,
        singles: Vec::new(),
        analysis: AnalysisSettings { errors: ErrorMethod::Propagation, ..Default::default() },
    }
}

fn three_mode_truth() -> StructuredState {
    // partially coherent: 0.8 of a pure state with phases `th`
    let p: [f64; 3] = [0.25, 0.2, 0.3];
    let th = [0.3, -0.5, 1.9];
    let d = |i: usize, j: usize| ((i, j), Complex64::from_polar(0.8 * (p[i] * p[j]).sqrt(), th[i] - th[j]));
    StructuredState::single_photon(&p, &[d(0, 1), d(1, 2), d(0, 2)]).unwrap()
}

#[test]
fn noiseless_round_trip_is_exact() {
    let truth = three_mode_truth();
    let lo = LocalOscillatorConfig::new(vec![0.4, 0.5, 0.3], vec![0.2, -0.4, 1.0]).unwrap();
    let p = plan(truth.clone(), lo, 0.3);
    let (_, result) = run_plan(&p, SweepMode::Expected).unwrap();
    assert_eq!(result.pairs.len(), 3);
    let diff = result.estimate.max_abs_diff(&truth);
    assert!(diff < 1e-12, "max difference {diff:e}");
}

#[test]
fn noiseless_round_trip_with_vacuum_coherences() {
    let mut truth = StructuredState::single_photon(&[0.25, 0.25], &[((0, 1), Complex64::from_polar(0.2, 0.4))]).unwrap();
    truth.vacuum_coherences.insert(0, Complex64::from_polar(0.05, 0.7));
    truth.vacuum_coherences.insert(1, Complex64::from_polar(0.05, -0.2));
    truth.validate().unwrap();
    let lo = LocalOscillatorConfig::uniform(2, 0.5);
    let mut p = plan(truth.clone(), lo, 0.1);
    p.singles = vec![0, 1];
    p.analysis.vacuum = VacuumHandling::Estimate;
    let (data, result) = run_plan(&p, SweepMode::Expected).unwrap();
    let diff = result.estimate.max_abs_diff(&truth);
    assert!(diff < 1e-12, "max difference {diff:e}");
    assert!(result.pairs[0].vacuum_subtracted);

    // ignoring the vacuum terms biases the pair coherence
    let mut opts = p.options();
    opts.vacuum = VacuumHandling::Ignore;
    let biased = reconstruct(&data, &opts).unwrap();
    assert!((biased.estimate.coherence(0, 1) - truth.coherence(0, 1)).norm() > 1e-3);
}

#[test]
fn missing_pair_is_named() {
    let truth = three_mode_truth();
    let p = plan(truth, LocalOscillatorConfig::uniform(3, 0.4), 0.3);
    let (mut data, _) = run_plan(&p, SweepMode::Expected).unwrap();
    data.pairs.retain(|s| s.pair != (0, 2));
    match reconstruct(&data, &p.options()) {
        Err(Error::MissingPair(name)) => assert_eq!(name, "AC"),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn missing_singles_sweep_is_reported() {
    let truth = StructuredState::single_photon(&[0.25, 0.25], &[((0, 1), Complex64::new(0.2, 0.0))]).unwrap();
    let mut p = plan(truth, LocalOscillatorConfig::uniform(2, 0.5), 0.1);
    p.analysis.vacuum = VacuumHandling::Estimate;
    // the pair sweep moves channel A only
    assert!(matches!(run_plan(&p, SweepMode::Expected), Err(Error::MissingSinglesSweep(c)) if c == "B"));
}

#[test]
fn reference_pairs_gauge() {
    // W- with arbitrary oscillator offsets: the reference pairs absorb them
    let spec = WStateSpec::uniform(&[1, -1, 1]);
    let truth = StructuredState::from_w(&spec).unwrap();
    let lo = LocalOscillatorConfig::new(vec![0.5; 3], vec![0.0, 0.0, 0.0]).unwrap();
    let mut p = plan(truth, lo, 0.5);
    p.analysis.gauge = PhaseConvention::ReferencePairs;
    let (_, r) = run_plan(&p, SweepMode::Expected).unwrap();
    assert_eq!(r.reference_pairs, vec!["AB".to_string(), "BC".to_string()]);
    let ab = r.pair(0, 1).unwrap();
    assert_eq!(ab.estimate.phase, 0.0);
    // d_AB d_BC d_CA = (-1)(-1)(1)/27 > 0, so d_AC is real positive in this gauge
    let ac = r.pair(0, 2).unwrap();
    assert_abs_diff_eq!(ac.estimate.phase, 0.0, epsilon = 1e-9);
    assert_abs_diff_eq!(ac.estimate.magnitude, 1.0 / 3.0, epsilon = 1e-9);
}

#[test]
fn hermitian_matrix_with_model_zero_pattern() {
    let truth = three_mode_truth();
    let p = plan(truth, LocalOscillatorConfig::uniform(3, 0.4), 0.3);
    let (_, r) = run_plan(&p, SweepMode::Expected).unwrap();
    let m = r.density_full.to_matrix();
    assert!((&m - m.adjoint()).norm() < 1e-15);
    for (a, la) in r.density_full.basis.iter().enumerate() {
        for (b, lb) in r.density_full.basis.iter().enumerate() {
            let ones = |s: &str| s.chars().filter(|c| *c != '0').count();
            let allowed = a == b || (ones(la) == 1 && ones(lb) == 1);
            if !allowed {
                assert_eq!(m[(a, b)], Complex64::new(0.0, 0.0), "{la} {lb}");
            }
        }
    }
}

#[test]
fn bootstrap_is_deterministic_and_needs_two_replicates() {
    let truth = three_mode_truth();
    let mut p = plan(truth, LocalOscillatorConfig::uniform(3, 0.4), 0.3);
    p.regime = DetectionRegime::Threshold;
    p.diagonal_shots = 100_000;
    p.sweep.shots = 20_000;
    p.analysis.errors = ErrorMethod::Bootstrap { seed: 5, replicates: 50 };
    let (data, a) = run_plan(&p, SweepMode::Sampled).unwrap();
    let b = reconstruct(&data, &p.options()).unwrap();
    assert_eq!(a, b);
    assert!(a.pairs.iter().all(|x| x.estimate.magnitude_err > 0.0));
    let mut opts = p.options();
    opts.errors = ErrorMethod::Bootstrap { seed: 5, replicates: 1 };
    assert!(reconstruct(&data, &opts).is_err());
}

fn sampled_plan(model: StructuredState, lo: LocalOscillatorConfig, eta: f64, seed: u64) -> MeasurementPlan {
    let mut p = plan(model, lo, eta);
    p.seed = seed;
    p.diagonal_shots = 2_000_000;
    p.sweep.shots = 400_000;
    p
}

fn z(est: f64, err: f64, truth: f64) -> f64 {
    (est - truth) / err
}

fn phase_z(est: f64, err: f64, truth: f64) -> f64 {
    pathtomo::detection::wrap_phase(est - truth) / err
}

#[test]
fn w_minus_phase_pattern() {
    let truth = StructuredState::from_w(&WStateSpec::minus(3)).unwrap().with_vacuum_admixture(0.5).unwrap();
    let mut p = sampled_plan(truth, LocalOscillatorConfig::uniform(3, 0.4), 0.3, 1);
    p.analysis.targets = vec![Target { name: "W-".into(), state: WStateSpec::minus(3) }];
    let (_, r) = run_plan(&p, SweepMode::Sampled).unwrap();
    let near = |x: f64, target: f64| pathtomo::detection::wrap_phase(x - target).abs() < 0.1;
    assert!(near(r.pair(0, 1).unwrap().estimate.phase, PI));
    assert!(near(r.pair(0, 2).unwrap().estimate.phase, PI));
    assert!(near(r.pair(1, 2).unwrap().estimate.phase, 0.0));
    let f = r.fidelity("W-").unwrap();
    assert!(f.raw.value > 0.95, "{f:?}");
}

#[test]
fn single_pair_phase_within_three_sigma() {
    let truth = StructuredState::single_photon(&[0.3, 0.25], &[((0, 1), Complex64::from_polar(0.2, 0.3))]).unwrap();
    let lo = LocalOscillatorConfig::new(vec![0.5, 0.4], vec![0.0, 0.0]).unwrap();
    let (_, r) = run_plan(&sampled_plan(truth, lo, 0.4, 2), SweepMode::Sampled).unwrap();
    let e = &r.pair(0, 1).unwrap().estimate;
    assert!(phase_z(e.phase, e.phase_err, 0.3).abs() < 3.0);
    assert!(z(e.magnitude, e.magnitude_err, 0.2).abs() < 3.0);
}

#[test]
fn singles_fringe_measures_vacuum_coherence() {
    let mut truth = StructuredState::single_photon(&[0.1, 0.1], &[((0, 1), Complex64::new(0.05, 0.0))]).unwrap();
    truth.vacuum_coherences.insert(0, Complex64::new(0.05, 0.0));
    let mut p = plan(truth, LocalOscillatorConfig::uniform(2, 0.1), 1.0);
    p.singles = vec![0, 1];
    p.analysis.vacuum = VacuumHandling::Estimate;
    let (_, r) = run_plan(&p, SweepMode::Expected).unwrap();
    let a = &r.vacuum[0];
    assert_abs_diff_eq!(a.fit.amplitude / p.sweep.shots as f64, 0.005, epsilon = 1e-12);
    assert_abs_diff_eq!(a.estimate.magnitude, 0.05, epsilon = 1e-12);
    let b = &r.vacuum[1];
    assert_abs_diff_eq!(b.estimate.magnitude, 0.0, epsilon = 1e-12);
}

#[test]
fn vacuum_terms_subtracted_within_three_sigma() {
    let mut truth =
        StructuredState::single_photon(&[0.25, 0.2, 0.2], &[((0, 1), Complex64::from_polar(0.15, 0.6)), ((1, 2), Complex64::from_polar(0.1, -0.4)), ((0, 2), Complex64::from_polar(0.12, 0.2))])
            .unwrap();
    truth.vacuum_coherences.insert(0, Complex64::from_polar(0.08, 1.0));
    truth.vacuum_coherences.insert(1, Complex64::from_polar(0.06, -2.0));
    truth.vacuum_coherences.insert(2, Complex64::from_polar(0.05, 0.4));
    truth.validate().unwrap();
    let lo = LocalOscillatorConfig::new(vec![0.4; 3], vec![0.0, 0.0, 0.0]).unwrap();
    let mut p = sampled_plan(truth.clone(), lo, 0.3, 3);
    p.singles = vec![0, 1, 2];
    p.analysis.vacuum = VacuumHandling::Estimate;
    let (_, r) = run_plan(&p, SweepMode::Sampled).unwrap();
    for pr in &r.pairs {
        let (i, j) = pr.pair;
        let d = truth.coherence(i, j);
        assert!(z(pr.estimate.magnitude, pr.estimate.magnitude_err, d.norm()).abs() < 3.0, "{}", pr.label);
        assert!(phase_z(pr.estimate.phase, pr.estimate.phase_err, d.arg()).abs() < 3.0, "{}", pr.label);
    }
    for v in &r.vacuum {
        let d = truth.vacuum_coherence(v.channel);
        assert!(z(v.estimate.magnitude, v.estimate.magnitude_err, d.norm()).abs() < 3.0);
    }
}

#[test]
fn phase_cycle_closes() {
    let truth = three_mode_truth().with_vacuum_admixture(0.3).unwrap();
    let (_, r) = run_plan(&sampled_plan(truth, LocalOscillatorConfig::uniform(3, 0.4), 0.3, 4), SweepMode::Sampled).unwrap();
    assert_eq!(r.cycle_checks.len(), 1);
    let c = &r.cycle_checks[0];
    assert!(c.residual.abs() < 3.0 * c.sigma, "{c:?}");
    assert!(r.warnings.iter().all(|w| w.kind != WarningKind::PhaseCycle));
}

#[test]
fn mode_match_correction_end_to_end() {
    let truth = three_mode_truth();
    let overlaps = vec![0.9, 0.8, 0.85];
    let lo = LocalOscillatorConfig::uniform(3, 0.4).with_overlaps(overlaps.clone());
    let mut p = sampled_plan(truth.clone(), lo, 0.3, 5);
    p.analysis.mode_overlaps = Some(overlaps.clone());
    let (_, r) = run_plan(&p, SweepMode::Sampled).unwrap();
    assert!(r.mode_match.applied);
    let corrected = r.corrected_estimate.as_ref().unwrap();
    for pr in &r.pairs {
        let (i, j) = pr.pair;
        let c = pr.corrected.as_ref().unwrap();
        let d = truth.coherence(i, j).norm();
        assert!(z(c.magnitude, c.magnitude_err, d).abs() < 3.0, "{}", pr.label);
        let reduced = d * (overlaps[i] * overlaps[j]).sqrt();
        assert!(z(pr.estimate.magnitude, pr.estimate.magnitude_err, reduced).abs() < 3.0);
        assert_abs_diff_eq!(corrected.coherence(i, j).norm(), c.magnitude, epsilon = 1e-15);
    }
}

#[test]
fn bootstrap_sigma_scales_with_shots() {
    let truth = StructuredState::single_photon(&[0.3, 0.3], &[((0, 1), Complex64::new(0.2, 0.0))]).unwrap();
    let mean_err = |shots: u64| -> f64 {
        let mut total = 0.0;
        for t in 0..20 {
            let mut p = plan(truth.clone(), LocalOscillatorConfig::uniform(2, 0.4), 0.3);
            p.seed = 100 + t;
            p.diagonal_shots = 4 * shots;
            p.sweep.shots = shots;
            p.analysis.errors = ErrorMethod::Bootstrap { seed: t, replicates: 100 };
            let (_, r) = run_plan(&p, SweepMode::Sampled).unwrap();
            total += r.pairs[0].estimate.magnitude_err;
        }
        total / 20.0
    };
    let ratio = mean_err(160_000) / mean_err(40_000);
    assert!((ratio - 0.5).abs() < 0.1, "ratio {ratio}");
}

#[test]
fn two_photon_contamination_is_flagged() {
    let truth = three_mode_truth().with_two_photon_contamination(0.05).unwrap();
    let (_, r) = run_plan(&plan(truth, LocalOscillatorConfig::uniform(3, 0.4), 0.3), SweepMode::Expected).unwrap();
    assert!(r.warnings.iter().any(|w| w.kind == WarningKind::TwoPhotonMass));
    assert!(r.diagonals.two_photon_mass > 0.0);
}

#[test]
fn zero_count_points_are_flagged() {
    let truth = StructuredState::single_photon(&[0.25, 0.25], &[((0, 1), Complex64::new(0.25, 0.0))]).unwrap();
    let mut p = plan(truth, LocalOscillatorConfig::uniform(2, 0.5), 0.05);
    p.regime = DetectionRegime::Threshold;
    p.sweep.shots = 300;
    let (_, r) = run_plan(&p, SweepMode::Sampled).unwrap();
    assert!(r.pairs[0].zero_count_points > 0);
    assert!(r.warnings.iter().any(|w| w.kind == WarningKind::ZeroCounts));
    assert!(r.pairs[0].estimate.magnitude_err.is_finite());
}

#[test]
fn psd_projection_on_request() {
    // a coherence above the bound makes the estimate non-positive
    let truth = StructuredState::single_photon(&[0.2, 0.2], &[((0, 1), Complex64::new(0.2, 0.0))]).unwrap();
    let mut p = plan(truth, LocalOscillatorConfig::uniform(2, 0.4), 0.3);
    p.regime = DetectionRegime::Threshold;
    p.sweep.shots = 20_000;
    p.diagonal_shots = 20_000;
    p.analysis.project_psd = true;
    let mut found = false;
    for seed in 0..20 {
        p.seed = seed;
        let (_, r) = run_plan(&p, SweepMode::Sampled).unwrap();
        let m = r.psd.projected_matrix.as_ref().unwrap().to_matrix();
        let eig = m.clone().symmetric_eigen().eigenvalues;
        assert!(eig.iter().all(|e| *e > -1e-12));
        assert_abs_diff_eq!(m.trace().re, 1.0, epsilon = 1e-12);
        if r.psd.min_eigenvalue_subspace < 0.0 {
            found = true;
            assert!(r.warnings.iter().any(|w| w.kind == WarningKind::CoherenceBound));
        }
    }
    assert!(found);
}
