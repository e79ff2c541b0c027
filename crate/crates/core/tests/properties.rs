//! Property tests for the invariants of each stage.

use std::f64::consts::{PI, TAU};
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;
use proptest::prelude::*;

use ncvsm_core::config::{build_range_grid, Band, RadarConfig, VitalBands};
use ncvsm_core::doppler::unwrap_phase;
use ncvsm_core::harness::{score_series, SUCCESS_THRESHOLD_BPM};
use ncvsm_core::localization::{extract_support, prox_l21, row_norms};
use ncvsm_core::scenario::{parse_scenario_str, serialize_scenario};
use ncvsm_core::scene::{snap_scene, ObjectKind, ObjectRequest, VibrationSpec};
use ncvsm_core::synthesis::FrameSynthesizer;
use ncvsm_core::vitals::{
    build_dictionaries, smooth_estimates, vsdr_estimate, Method, RateEstimate, RateSmoother, HR_SMOOTHING_SPAN,
    RR_SMOOTHING_SPAN,
};

fn bands() -> VitalBands {
    VitalBands {
        respiration: Band { lo: 0.1, hi: 0.4 },
        heartbeat: Band { lo: 0.78, hi: 1.67 },
    }
}

fn complex_matrix(rows: usize, cols: usize) -> impl Strategy<Value = Array2<Complex64>> {
    prop::collection::vec((-2.0..2.0f64, -2.0..2.0f64), rows * cols).prop_map(move |v| {
        Array2::from_shape_vec(
            (rows, cols),
            v.into_iter().map(|(re, im)| Complex64::new(re, im)).collect(),
        )
        .unwrap()
    })
}

fn wrap(x: f64) -> f64 {
    let w = x.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn unwrap_differs_by_whole_turns(raw in prop::collection::vec(-20.0..20.0f64, 1..200)) {
        let wrapped: Vec<f64> = raw.iter().map(|&x| wrap(x)).collect();
        let out = unwrap_phase(&wrapped, PI);
        prop_assert_eq!(out.len(), wrapped.len());
        for (o, w) in out.iter().zip(&wrapped) {
            let k = (o - w) / (2.0 * PI);
            prop_assert!((k - k.round()).abs() < 1e-9);
        }
        for d in out.windows(2).map(|w| w[1] - w[0]) {
            prop_assert!(d > -PI - 1e-12 && d <= PI + 1e-12);
        }
    }

    #[test]
    fn unwrap_recovers_slow_phase(start in -3.0..3.0f64, steps in prop::collection::vec(-3.0..3.0f64, 1..200)) {
        let mut truth = vec![start];
        for s in &steps {
            truth.push(truth.last().unwrap() + s);
        }
        let wrapped: Vec<f64> = truth.iter().map(|&x| wrap(x)).collect();
        let out = unwrap_phase(&wrapped, PI);
        let offset = out[0] - truth[0];
        for (o, t) in out.iter().zip(&truth) {
            prop_assert!((o - t - offset).abs() < 1e-9);
        }
    }

    #[test]
    fn prox_shrinks_rows(x in complex_matrix(4, 6), t in 0.0..5.0f64) {
        let p = prox_l21(&x, t);
        let before = row_norms(&x);
        let after = row_norms(&p);
        for (b, a) in before.iter().zip(&after) {
            prop_assert!((a - (b - t).max(0.0)).abs() < 1e-9);
        }
        for r in 0..x.nrows() {
            if after[r] > 0.0 {
                // same direction
                let dot: Complex64 = x.row(r).iter().zip(p.row(r)).map(|(a, b)| a.conj() * b).sum();
                prop_assert!((dot.re - before[r] * after[r]).abs() < 1e-9 * (1.0 + before[r] * after[r]));
            }
        }
    }

    #[test]
    fn prox_with_zero_threshold_is_identity(x in complex_matrix(3, 5)) {
        prop_assert_eq!(prox_l21(&x, 0.0), x);
    }

    #[test]
    fn support_is_sorted_without_dc(x in complex_matrix(12, 3), tau in 0.05..0.95f64) {
        let grid = build_range_grid(&RadarConfig::default()).unwrap();
        let support = extract_support(&x, tau, &grid).unwrap();
        prop_assert!(!support.is_empty());
        prop_assert!(support.bins.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(support.bins.iter().all(|&b| b >= 1));
        let norms = row_norms(&x);
        let max = norms[1..].iter().copied().fold(0.0, f64::max);
        for (m, norm) in norms.iter().enumerate().skip(1) {
            prop_assert_eq!(support.bins.contains(&m), *norm >= tau * max);
        }
    }

    #[test]
    fn snapping_error_is_at_most_half_a_bin(d in 0.03..4.2f64) {
        let grid = build_range_grid(&RadarConfig::default()).unwrap();
        let req = ObjectRequest::new("o", ObjectKind::StaticClutter, 1.0, d, VibrationSpec::Static);
        if let Ok(scene) = snap_scene(&[req], &grid) {
            prop_assert!(scene.objects[0].snap_delta().abs() <= grid.spacing / 2.0 + 1e-12);
        }
    }

    #[test]
    fn vsdr_is_scale_invariant(
        rr in 0.1..0.4f64,
        hr in 0.78..1.67f64,
        phase in 0.0..TAU,
        scale in 0.01..100.0f64,
        offset in -5.0..5.0f64,
    ) {
        let dicts = build_dictionaries(100.0, 512, &bands()).unwrap();
        let v: Vec<f64> = (1..=512)
            .map(|l| {
                let t = l as f64 / 100.0;
                (2.0 * PI * rr * t + phase).cos() + 0.1 * (2.0 * PI * hr * t).cos()
            })
            .collect();
        let scaled: Vec<f64> = v.iter().map(|x| scale * x + offset).collect();
        let a = vsdr_estimate(&v, &dicts).unwrap();
        let b = vsdr_estimate(&scaled, &dicts).unwrap();
        prop_assert_eq!(a.rr_bpm, b.rr_bpm);
        prop_assert_eq!(a.hr_bpm, b.hr_bpm);
        prop_assert!(a.rr_bpm >= 6.0 && a.rr_bpm <= 24.0);
        prop_assert!(a.hr_bpm >= 46.8 && a.hr_bpm <= 100.2);
    }

    #[test]
    fn smoothing_stays_within_span_range(raw in prop::collection::vec((6.0..24.0f64, 47.0..100.0f64), 1..150)) {
        let hop = 0.05;
        let mut history = Vec::new();
        let mut running = RateSmoother::new();
        for (i, &(rr, hr)) in raw.iter().enumerate() {
            let t = 30.0 + i as f64 * hop;
            history.push(RateEstimate {
                timestamp: t,
                human: 0,
                method: Method::Vsdr,
                rr_bpm: rr,
                hr_bpm: hr,
                raw_rr_bpm: rr,
                raw_hr_bpm: hr,
            });
            let batch = smooth_estimates(&history, t).unwrap();
            let (srr, shr) = running.push(t, rr, hr);
            prop_assert!((batch.rr_bpm - srr).abs() < 1e-9);
            prop_assert!((batch.hr_bpm - shr).abs() < 1e-9);

            let span = |len: f64| history.iter().filter(move |e| e.timestamp > t - len + 1e-9);
            let (lo, hi) = span(RR_SMOOTHING_SPAN).fold((f64::MAX, f64::MIN), |(l, h), e| (l.min(e.raw_rr_bpm), h.max(e.raw_rr_bpm)));
            prop_assert!(srr >= lo - 1e-9 && srr <= hi + 1e-9);
            let (lo, hi) = span(HR_SMOOTHING_SPAN).fold((f64::MAX, f64::MIN), |(l, h), e| (l.min(e.raw_hr_bpm), h.max(e.raw_hr_bpm)));
            prop_assert!(shr >= lo - 1e-9 && shr <= hi + 1e-9);
        }
    }

    #[test]
    fn smoothing_reduces_total_variation_after_warmup(raw in prop::collection::vec(6.0..24.0f64, 61..200)) {
        let mut running = RateSmoother::new();
        let smoothed: Vec<f64> = raw
            .iter()
            .enumerate()
            .map(|(i, &rr)| running.push(i as f64 * 0.05, rr, 60.0).0)
            .collect();
        // past the first full span every output is a 60-sample moving average
        let tv = |x: &[f64]| x.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>();
        prop_assert!(tv(&smoothed[59..]) <= tv(&raw) + 1e-9);
    }

    #[test]
    fn score_invariants(pairs in prop::collection::vec((0.0..120.0f64, 0.0..120.0f64), 1..100)) {
        let (est, reference): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let s = score_series(&est, &reference).unwrap();
        prop_assert!((0.0..=100.0).contains(&s.success_rate));
        prop_assert!(s.mae >= 0.0 && s.mae <= s.rmse + 1e-12);
        if let Some(p) = s.pcc {
            prop_assert!((-1.0..=1.0).contains(&p));
        }
        let max_err = est.iter().zip(&reference).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(s.rmse <= max_err + 1e-9);
        if s.success_rate == 100.0 {
            prop_assert!(s.mae < SUCCESS_THRESHOLD_BPM);
        }
        let perfect = score_series(&reference, &reference).unwrap();
        prop_assert_eq!(perfect.mae, 0.0);
        prop_assert_eq!(perfect.success_rate, 100.0);
    }

    #[test]
    fn synthesis_is_deterministic_per_frame(seed in any::<u64>(), frame in 0usize..5000, snr in -5.0..10.0f64) {
        let config = RadarConfig::default();
        let grid = build_range_grid(&config).unwrap();
        let scene = snap_scene(&ncvsm_core::reference_layout(), &grid).unwrap();
        let a = FrameSynthesizer::new(&scene, &config, snr, seed).unwrap();
        let b = FrameSynthesizer::new(&scene, &config, snr, seed).unwrap();
        // order of access does not matter
        let _ = b.averaged_frame(frame + 1);
        prop_assert_eq!(a.averaged_frame(frame), b.averaged_frame(frame));
        prop_assert_eq!(a.raw_frame(frame), b.raw_frame(frame));
        let c = FrameSynthesizer::new(&scene, &config, snr, seed.wrapping_add(1)).unwrap();
        prop_assert_ne!(a.averaged_frame(frame), c.averaged_frame(frame));
    }
}

fn scenario_text(snr: f64, seed: u64, distances: &[f64], amp: f64, rr: f64, hr: f64) -> String {
    let mut s = format!(
        "[monitoring]\nduration = 40.0\nsnr_db = {snr:?}\nseed = {seed}\nmethods = [\"vsdr\", \"phase_reg\"]\n\n"
    );
    for (i, d) in distances.iter().enumerate() {
        if i % 2 == 0 {
            s += &format!(
                "[[objects]]\nname = \"h{i}\"\nkind = \"human\"\nx = {amp:?}\nd = {d:?}\n\
                 vibration = {{ type = \"tones\", tones = [[1e-3, {rr:?}], [2e-4, {hr:?}]], rates_hz = [{rr:?}, {hr:?}] }}\n\n"
            );
        } else {
            s += &format!("[[objects]]\nname = \"s{i}\"\nkind = \"static_clutter\"\nx = {amp:?}\nd = {d:?}\n\n");
        }
    }
    s += "[sweep]\nsnr_db = [0.0, 1.0]\nseeds = [4, 5]\n";
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn scenario_round_trips(
        snr in -10.0..20.0f64,
        seed in 0u64..1000,
        bins in prop::collection::btree_set(2usize..95, 1..6),
        amp in 0.1..2.0f64,
        rr in 0.1..0.4f64,
        hr in 0.8..1.6f64,
    ) {
        let distances: Vec<f64> = bins.iter().map(|&b| b as f64 * 0.0428).collect();
        let text = scenario_text(snr, seed, &distances, amp, rr, hr);
        let here = Path::new(".");
        let first = parse_scenario_str(&text, Path::new("p.scn"), here).unwrap();
        let again = parse_scenario_str(&serialize_scenario(&first).unwrap(), Path::new("p.scn"), here).unwrap();
        prop_assert_eq!(first, again);
    }
}
