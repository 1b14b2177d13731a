mod common;

use std::f64::consts::PI;

use pathtomo::counting::count;
use pathtomo::detection::*;
use pathtomo::models::{StructuredState, WStateSpec};
use pathtomo::simulate::*;

fn config(model: StructuredState, lo: Option<LocalOscillatorConfig>, eta: f64, schedule: Vec<PhaseSetting>) -> ExperimentConfig {
    ExperimentConfig {
        channels: Vec::new(),
        detectors: DetectorModel::uniform(model.num_modes(), eta),
        source: SourceConfig::new(StateConfig::Structured { model }),
        lo,
        schedule,
        seed: 2024,
        signal_blocked: false,
        regime: DetectionRegime::Threshold,
        keep_empty: false,
    }
}

fn within(observed: f64, p: f64, shots: f64, k: f64) -> bool {
    let sigma = (p * (1.0 - p) / shots).sqrt();
    (observed / shots - p).abs() <= k * sigma
}

#[test]
fn coincidence_frequencies_converge_to_exact_threshold_form() {
    let mut rng = common::rng(5);
    let rho = common::random_single_photon_density(2, 1, 2, &mut rng);
    let model = StructuredState::extract_structure(&rho).unwrap().model;
    let lo = LocalOscillatorConfig::new(vec![0.3, 0.25], vec![0.0, 0.0]).unwrap();
    let shots = 1_000_000u64;
    let schedule = sweep_schedule(&[0.0, 0.0], 0, 6, shots);
    let cfg = config(model, Some(lo.clone()), 0.6, schedule.clone());
    let table = sample_counts(&cfg).unwrap();
    let det = DetectorModel::uniform(2, 0.6);
    for (row, setting) in table.rows.iter().zip(&schedule) {
        let p = coincidence_exact(&rho, &lo.with_phases(&setting.phases), &det, ExactForm::Threshold, 8).unwrap();
        assert!(within(row.inclusive(0b11), p, shots as f64, 4.0), "phase {:?}: {} vs {p}", setting.phases, row.inclusive(0b11));
    }
}

#[test]
fn background_run_converges_to_oscillator_offset() {
    let model = StructuredState::from_w(&WStateSpec::plus(2)).unwrap();
    let (a, b, eta) = (0.2, 0.2, 0.5);
    let lo = LocalOscillatorConfig::new(vec![a, b], vec![]).unwrap();
    let shots = 1_000_000u64;
    let cfg = config(model, Some(lo), eta, vec![PhaseSetting { phases: vec![], shots }]).blocked();
    let table = sample_counts(&cfg).unwrap();
    let p_coh = eta * eta * a * a * b * b / 4.0;
    assert!(within(table.rows[0].inclusive(0b11), p_coh, shots as f64, 4.0));
}

#[test]
fn w_state_without_oscillators_never_double_clicks() {
    let cfg = config(StructuredState::from_w(&WStateSpec::plus(3)).unwrap(), None, 1.0, vec![PhaseSetting { phases: vec![], shots: 200_000 }]);
    let t = count(&sample_events(&cfg).unwrap());
    for mask in [0b011, 0b101, 0b110, 0b111] {
        assert_eq!(t.rows[0].inclusive(mask), 0.0);
    }
}

fn sweep_config() -> ExperimentConfig {
    let model = StructuredState::from_w(&WStateSpec::minus(3)).unwrap().with_vacuum_admixture(0.4).unwrap();
    let lo = LocalOscillatorConfig::new(vec![0.3, 0.3, 0.2], vec![0.1, 0.0, -0.4]).unwrap();
    let mut cfg = config(model, Some(lo), 0.4, sweep_schedule(&[0.1, 0.0, -0.4], 1, 5, 150_001));
    cfg.detectors.background = vec![1e-3, 0.0, 5e-4];
    cfg
}

#[test]
fn same_seed_same_bytes_any_thread_count() {
    let cfg = sweep_config();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| (sample_events(&cfg).unwrap().to_jsonl_bytes().unwrap(), sample_counts(&cfg).unwrap()))
    };
    let (bytes1, counts1) = run(1);
    let (bytes8, counts8) = run(8);
    assert_eq!(bytes1, bytes8);
    assert_eq!(counts1, counts8);
    let mut other = cfg.clone();
    other.seed += 1;
    assert_ne!(sample_counts(&other).unwrap(), counts1);
}

#[test]
fn blocked_run_uses_its_own_stream() {
    // a vacuum source gives identical distributions for both runs
    let mut cfg = sweep_config();
    cfg.source = SourceConfig::new(StateConfig::Vacuum { num_modes: 3 });
    let a = sample_counts(&cfg).unwrap();
    let b = sample_counts(&cfg.blocked()).unwrap();
    assert_ne!(a, b);
}

#[test]
fn expected_counts_are_shots_times_probabilities() {
    let cfg = sweep_config();
    let t = expected_counts(&cfg).unwrap();
    let dists = cfg.distributions().unwrap();
    for (row, d) in t.rows.iter().zip(&dists) {
        let total: f64 = row.exclusive.iter().sum();
        assert!((total - row.shots).abs() < 1e-6);
        for (c, p) in row.exclusive.iter().zip(d) {
            assert_eq!(*c, p * row.shots);
        }
    }
}

#[test]
fn sweep_schedule_steps_one_channel() {
    let s = sweep_schedule(&[0.5, 1.0], 1, 4, 10);
    assert_eq!(s.len(), 4);
    for (k, p) in s.iter().enumerate() {
        assert_eq!(p.phases[0], 0.5);
        assert!((p.phases[1] - 1.0 - k as f64 * PI / 2.0).abs() < 1e-15);
        assert_eq!(p.shots, 10);
    }
}

#[test]
fn noise_chain_prepares_lossy_state() {
    let source = SourceConfig {
        state: StateConfig::W(WStateSpec::plus(3)),
        noise: (0..3).map(|mode| NoiseOp::Loss { mode, transmittance: 0.5 }).collect(),
    };
    let m = source.prepare().unwrap();
    assert!((m.p_vacuum() - 0.5).abs() < 1e-15);
    assert!((m.coherence(0, 1).re - 1.0 / 6.0).abs() < 1e-15);
    let bad = SourceConfig { state: StateConfig::W(WStateSpec::plus(3)), noise: vec![NoiseOp::VacuumAdmixture { fraction: 1.5 }] };
    assert!(bad.prepare().is_err());
}

#[test]
fn config_round_trips_through_json() {
    let cfg = sweep_config();
    let text = serde_json::to_string(&cfg).unwrap();
    let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(back.digest(), cfg.digest());
}
