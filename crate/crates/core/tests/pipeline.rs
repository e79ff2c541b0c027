//! End-to-end checks of synthesis, phase extraction and the monitoring harness.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ncvsm_core::doppler::{extract_phase, recover_doppler_rows};
use ncvsm_core::harness::{
    run_monitoring, scorecard, subject_seed, sweep_snr, LocalizationPolicy, MonitoringSession, MonitoringSettings,
    SupportMode, Vital,
};
use ncvsm_core::scene::VibrationSpec;
use ncvsm_core::{
    build_range_grid, reference_layout, snap_scene, FrameSynthesizer, Method, ObjectKind, ObjectRequest, RadarConfig,
    Scene,
};

fn single_human(rr: f64, hr: f64) -> Scene {
    let grid = build_range_grid(&RadarConfig::default()).unwrap();
    let req = ObjectRequest::new(
        "h",
        ObjectKind::Human,
        1.0,
        2.6,
        VibrationSpec::two_tone(1.5e-3, rr, 2e-4, hr),
    );
    snap_scene(&[req], &grid).unwrap()
}

fn reference_scene() -> Scene {
    let grid = build_range_grid(&RadarConfig::default()).unwrap();
    snap_scene(&reference_layout(), &grid).unwrap()
}

fn detrend(x: &[f64]) -> Vec<f64> {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| v - m).collect()
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let (a, b) = (detrend(a), detrend(b));
    let ab: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
    let aa: f64 = a.iter().map(|x| x * x).sum();
    let bb: f64 = b.iter().map(|x| x * x).sum();
    ab / (aa * bb).sqrt()
}

/// Extracted phase of every human in the first window and the matching truth 4 pi v / lambda.
fn phase_pairs(scene: &Scene, snr_db: f64, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
    let config = RadarConfig::default();
    let grid = build_range_grid(&config).unwrap();
    let synth = FrameSynthesizer::new(scene, &config, snr_db, seed).unwrap();
    let l = config.window_frames();
    let y = synth.measurement(0, l).unwrap().in_phase();
    let bins = scene.human_bins();
    let support = ncvsm_core::Support::from_bins(&bins, &grid, &vec![1.0; bins.len()]);
    let rows = recover_doppler_rows(&y, &support).unwrap();
    let phases = extract_phase(&rows, &support.bins);
    bins.iter()
        .enumerate()
        .map(|(k, &b)| {
            let o = scene.object_at_bin(b).unwrap();
            let truth: Vec<f64> = (0..l)
                .map(|f| 4.0 * PI / config.lambda_max * o.vibration.displacement(f, config.frame_duration))
                .collect();
            (phases.column(k), truth)
        })
        .collect()
}

#[test]
fn noiseless_phase_is_exact() {
    for (est, truth) in phase_pairs(&reference_scene(), f64::INFINITY, 0) {
        let (e, t) = (detrend(&est), detrend(&truth));
        let worst = e.iter().zip(&t).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-6, "max phase error {worst} rad");
    }
}

#[test]
fn phase_tracks_truth_at_10_db() {
    for (est, truth) in phase_pairs(&reference_scene(), 10.0, 3) {
        let r = correlation(&est, &truth);
        assert!(r > 0.999, "correlation {r}");
    }
}

fn noiseless_session(rr: f64, hr: f64) -> MonitoringSession {
    let settings = MonitoringSettings {
        duration: 40.0,
        support: SupportMode::Oracle,
        ..Default::default()
    };
    run_monitoring(&single_human(rr, hr), &settings, f64::INFINITY, 0).unwrap()
}

fn max_errors(session: &MonitoringSession, method: Method) -> (f64, f64) {
    session.series(0, method).fold((0.0f64, 0.0f64), |(r, h), rec| {
        (
            r.max((rec.estimate.rr_bpm - rec.rr_ref).abs()),
            h.max((rec.estimate.hr_bpm - rec.hr_ref).abs()),
        )
    })
}

#[test]
fn noiseless_zero_padded_fft_is_exact_on_the_bpm_grid() {
    for (rr, hr) in [(0.25, 1.2), (0.2, 1.05), (0.3, 1.4)] {
        let s = noiseless_session(rr, hr);
        assert_eq!(s.series(0, Method::FftZp).count(), 201);
        assert_eq!(max_errors(&s, Method::FftZp), (0.0, 0.0));
    }
}

#[test]
fn noiseless_plain_fft_is_exact_on_its_own_grid() {
    // 0.2 Hz = 12 bpm and 1.2 Hz = 72 bpm are multiples of 1/30 Hz
    let s = noiseless_session(0.2, 1.2);
    assert_eq!(max_errors(&s, Method::FftNozp), (0.0, 0.0));
    // 0.25 Hz sits halfway between two of its bins
    let s = noiseless_session(0.25, 1.2);
    assert_eq!(max_errors(&s, Method::FftNozp).0, 1.0);
}

#[test]
fn noiseless_vsdr_stays_within_one_grid_step() {
    // The cosine dictionary picks a neighbouring atom for some tone phases,
    // so raw estimates may be 1 bpm off even without noise.
    for (rr, hr) in [(0.25, 1.2), (0.2, 1.05), (0.3, 1.4)] {
        let s = noiseless_session(rr, hr);
        for rec in s.series(0, Method::Vsdr) {
            assert!((rec.estimate.raw_rr_bpm - rec.rr_ref).abs() <= 1.0 + 1e-9);
            assert!((rec.estimate.raw_hr_bpm - rec.hr_ref).abs() <= 1.0 + 1e-9);
        }
        let (r, h) = max_errors(&s, Method::Vsdr);
        assert!(r < 1.0 && h < 1.0, "smoothed errors {r} {h}");
    }
}

#[test]
fn estimate_timestamps_start_at_window_end() {
    let s = noiseless_session(0.25, 1.2);
    let times: Vec<f64> = s.series(0, Method::Vsdr).map(|r| r.estimate.timestamp).collect();
    assert!((times[0] - 30.0).abs() < 1e-9);
    assert!(times.windows(2).all(|w| (w[1] - w[0] - 0.05).abs() < 1e-9));
    assert!((times.last().unwrap() - 40.0).abs() < 1e-9);
}

#[test]
fn localizing_every_window_reuses_the_first_support() {
    let scene = reference_scene();
    let mut settings = MonitoringSettings {
        duration: 31.0,
        ..Default::default()
    };
    let first = run_monitoring(&scene, &settings, 0.0, 5).unwrap();
    settings.policy = LocalizationPolicy::EveryWindow;
    let every = run_monitoring(&scene, &settings, 0.0, 5).unwrap();
    assert_eq!(every.window_supports.len(), 21);
    for s in &every.window_supports {
        assert_eq!(s, &first.support.bins);
    }
    assert_eq!(first.records.len(), every.records.len());
    for (a, b) in first.records.iter().zip(&every.records) {
        assert_eq!(a.estimate.raw_rr_bpm, b.estimate.raw_rr_bpm);
        assert!((a.estimate.raw_hr_bpm - b.estimate.raw_hr_bpm).abs() < 1e-6);
    }
}

#[test]
fn single_point_sweep_equals_session_score() {
    let scene = reference_scene();
    let settings = MonitoringSettings {
        duration: 35.0,
        ..Default::default()
    };
    let card = sweep_snr(&scene, &settings, None, &[0.0], &[9]).unwrap();
    let session = run_monitoring(&scene, &settings, 0.0, subject_seed(9, 0)).unwrap();
    assert_eq!(card, scorecard(&session).unwrap());
    assert_eq!(card.rows.len(), 8);
}

#[test]
fn empty_sweep_is_empty() {
    let card = sweep_snr(&reference_scene(), &MonitoringSettings::default(), None, &[], &[1]).unwrap();
    assert!(card.rows.is_empty());
}

#[test]
fn session_is_deterministic() {
    let scene = reference_scene();
    let settings = MonitoringSettings {
        duration: 32.0,
        ..Default::default()
    };
    let a = run_monitoring(&scene, &settings, -1.0, 42).unwrap();
    let b = run_monitoring(&scene, &settings, -1.0, 42).unwrap();
    assert_eq!(a, b);
}

#[test]
fn scene_without_humans_has_empty_oracle_support() {
    let grid = build_range_grid(&RadarConfig::default()).unwrap();
    let req = ObjectRequest::new("s", ObjectKind::StaticClutter, 1.0, 2.0, VibrationSpec::Static);
    let scene = snap_scene(&[req], &grid).unwrap();
    let settings = MonitoringSettings {
        duration: 30.0,
        support: SupportMode::Oracle,
        ..Default::default()
    };
    assert!(run_monitoring(&scene, &settings, 0.0, 1).is_err());
}

#[test]
fn vsdr_error_does_not_grow_with_snr() {
    let scene = reference_scene();
    let settings = MonitoringSettings {
        duration: 40.0,
        methods: vec![Method::Vsdr],
        ..Default::default()
    };
    let seeds: Vec<u64> = (1..=20).collect();
    let card = sweep_snr(&scene, &settings, None, &[-2.0, 2.0], &seeds).unwrap();
    for vital in Vital::ALL {
        let low = card.get(-2.0, Method::Vsdr, vital).unwrap().mae;
        let high = card.get(2.0, Method::Vsdr, vital).unwrap().mae;
        assert!(high <= low, "{vital:?}: MAE {low} at -2 dB, {high} at +2 dB");
    }
}

/// Mean HR error of each method over 100 single-window two-tone trials at 0 dB.
fn single_window_hr_mae() -> Vec<(Method, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let bands = MonitoringSettings::default().bands();
    let mut sums = vec![0.0; Method::ALL.len()];
    for trial in 0..100 {
        let rr = rng.random_range(bands.respiration.lo..bands.respiration.hi);
        let hr = rng.random_range(bands.heartbeat.lo..bands.heartbeat.hi);
        let settings = MonitoringSettings {
            duration: 30.0,
            support: SupportMode::Oracle,
            ..Default::default()
        };
        let session = run_monitoring(&single_human(rr, hr), &settings, 0.0, trial).unwrap();
        for (i, &m) in Method::ALL.iter().enumerate() {
            let rec = session.series(0, m).next().unwrap();
            sums[i] += (rec.estimate.hr_bpm - rec.hr_ref).abs() / 100.0;
        }
    }
    Method::ALL.iter().copied().zip(sums).collect()
}

#[test]
#[ignore = "does not hold for the synthetic model: phase_reg has the lower HR error"]
fn vsdr_heart_rate_error_dominates_baselines() {
    let mae = single_window_hr_mae();
    let of = |m: Method| mae.iter().find(|x| x.0 == m).unwrap().1;
    println!("HR MAE per method: {mae:?}");
    assert!(of(Method::Vsdr) <= of(Method::FftNozp));
    assert!(of(Method::Vsdr) <= of(Method::PhaseReg));
}
