//! Sliding-window monitoring sessions, reference rates and scoring.

use log::{debug, warn};
use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{build_range_grid, Band, RadarConfig, RangeGrid, VitalBands};
use crate::doppler::{build_range_slow_time_map, extract_row_phase, DopplerKernel};
use crate::error::{Error, Result};
use crate::localization::{
    localize_jsr, localize_max_avg_power, localize_std, JsrSettings, Localization, StdStatistic, Support,
};
use crate::scene::{ObjectKind, Scene, VibrationSpec};
use crate::synthesis::{FrameSynthesizer, Measurement};
use crate::vitals::{median, one_bpm_padding, Method, RateEstimate, RateSmoother, VitalEstimator};

/// How the support of a session is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupportMode {
    /// Joint sparse recovery on the first window.
    #[default]
    Jsr,
    /// The true human bins.
    Oracle,
}

/// When the localizer runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalizationPolicy {
    /// Localize once and reuse the support for all later windows.
    #[default]
    FirstWindow,
    /// Localize again in every window.
    EveryWindow,
}

/// Receiver channels kept from the beat signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    /// Real part only, as with a single-channel ADC.
    #[default]
    InPhase,
    Complex,
}

impl Channel {
    fn apply(&self, z: Complex64) -> Complex64 {
        match self {
            Channel::InPhase => Complex64::new(z.re, 0.0),
            Channel::Complex => z,
        }
    }

    fn measurement(&self, m: Measurement) -> Measurement {
        match self {
            Channel::InPhase => m.in_phase(),
            Channel::Complex => m,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonitoringSettings {
    pub radar: RadarConfig,
    /// Solver settings; `jsr.bands` are also the estimation bands.
    pub jsr: JsrSettings,
    /// Session length (s).
    pub duration: f64,
    pub methods: Vec<Method>,
    pub support: SupportMode,
    pub policy: LocalizationPolicy,
    pub channel: Channel,
    /// Humans to estimate; all humans when `None`.
    pub targets: Option<Vec<String>>,
}

impl Default for MonitoringSettings {
    fn default() -> Self {
        Self {
            radar: RadarConfig::default(),
            jsr: JsrSettings::default(),
            duration: 120.0,
            methods: Method::ALL.to_vec(),
            support: SupportMode::Jsr,
            policy: LocalizationPolicy::FirstWindow,
            channel: Channel::InPhase,
            targets: None,
        }
    }
}

impl MonitoringSettings {
    pub fn bands(&self) -> VitalBands {
        self.jsr.bands
    }

    pub fn total_frames(&self) -> Result<usize> {
        let r = self.duration / self.radar.frame_duration;
        let k = r.round();
        if k.is_nan() || k < 1.0 || (r - k).abs() > 1e-6 {
            return Err(Error::Session(format!(
                "duration {} s is not a whole number of {} s frames",
                self.duration, self.radar.frame_duration
            )));
        }
        Ok(k as usize)
    }

    /// (total - L) / hop + 1 windows, the first ending at T_win.
    pub fn window_count(&self) -> Result<usize> {
        self.radar.validate()?;
        let total = self.total_frames()?;
        let l = self.radar.window_frames();
        if total < l {
            return Err(Error::Session(format!(
                "{total} frames are fewer than one window of {l} frames"
            )));
        }
        Ok((total - l) / self.radar.hop_frames() + 1)
    }

    /// End time of window `w` (s).
    pub fn timestamp(&self, w: usize) -> f64 {
        let frames = w * self.radar.hop_frames() + self.radar.window_frames();
        frames as f64 * self.radar.frame_duration
    }

    fn validate(&self) -> Result<()> {
        self.radar.validate()?;
        if self.methods.is_empty() {
            return Err(Error::InvalidArgument("no estimation method requested".into()));
        }
        if !(self.jsr.tau > 0.0 && self.jsr.tau < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "tau must lie in (0, 1), got {}",
                self.jsr.tau
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackedHuman {
    pub name: String,
    pub bin: usize,
}

/// One estimate with the reference it is scored against.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateRecord {
    pub estimate: RateEstimate,
    pub rr_ref: f64,
    pub hr_ref: f64,
    /// Degenerate input or low-confidence fit.
    pub flagged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FistaSummary {
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonitoringSession {
    pub snr_db: f64,
    pub seed: u64,
    pub duration: f64,
    pub total_frames: usize,
    pub window_frames: usize,
    pub hop_frames: usize,
    pub windows: usize,
    /// Support of the first window.
    pub support: Support,
    pub fista: Option<FistaSummary>,
    pub tracked: Vec<TrackedHuman>,
    /// Requested humans absent from the support.
    pub missed: Vec<String>,
    /// Support bins that hold no human.
    pub unmatched_bins: Vec<usize>,
    /// Support bins of every window; filled only when localizing every window.
    pub window_supports: Vec<Vec<usize>>,
    /// Ordered by window, then tracked human, then method.
    pub records: Vec<EstimateRecord>,
    pub methods: Vec<Method>,
}

impl MonitoringSession {
    pub fn human_name(&self, k: usize) -> &str {
        &self.tracked[k].name
    }

    /// Records of one human and method in time order.
    pub fn series(&self, human: usize, method: Method) -> impl Iterator<Item = &EstimateRecord> {
        self.records
            .iter()
            .filter(move |r| r.estimate.human == human && r.estimate.method == method)
    }
}

/// Per-window reference rates (bpm).
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSeries {
    pub rr_bpm: Vec<f64>,
    pub hr_bpm: Vec<f64>,
    /// Some window of the reference signal was constant.
    pub degenerate: bool,
}

/// Reference rates for `windows` windows of `window` frames spaced `hop` apart.
///
/// Designated tone rates are returned as is. Otherwise the ground-truth
/// displacement of each window is mean-detrended, zero-padded to 60 f_s and
/// the DFT peak inside each band gives the reference on the 1 bpm grid.
pub fn reference_rates(
    vibration: &VibrationSpec,
    frame_rate: f64,
    bands: &VitalBands,
    window: usize,
    hop: usize,
    windows: usize,
) -> Result<ReferenceSeries> {
    if let Some(r) = vibration.designated_rates() {
        return Ok(ReferenceSeries {
            rr_bpm: vec![60.0 * r.respiration_hz; windows],
            hr_bpm: vec![60.0 * r.heart_hz; windows],
            degenerate: false,
        });
    }
    if windows == 0 {
        return Ok(ReferenceSeries {
            rr_bpm: vec![],
            hr_bpm: vec![],
            degenerate: false,
        });
    }
    let frames = (windows - 1) * hop + window;
    vibration.validate(frame_rate, Some(frames))?;
    let dt = 1.0 / frame_rate;
    let truth: Vec<f64> = (0..frames).map(|f| vibration.displacement(f, dt)).collect();
    let padded = one_bpm_padding(frame_rate).max(window);
    let estimator = ReferencePeak::new(frame_rate, padded, bands)?;
    let mut out = ReferenceSeries {
        rr_bpm: Vec::with_capacity(windows),
        hr_bpm: Vec::with_capacity(windows),
        degenerate: false,
    };
    for w in 0..windows {
        let v = &truth[w * hop..w * hop + window];
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        if v.iter().all(|x| (x - mean).abs() == 0.0) {
            out.degenerate = true;
        }
        let (rr, hr) = estimator.peaks(v);
        out.rr_bpm.push(rr);
        out.hr_bpm.push(hr);
    }
    Ok(out)
}

struct ReferencePeak {
    fft: std::sync::Arc<dyn rustfft::Fft<f64>>,
    len: usize,
    bins: [Vec<usize>; 2],
    frame_rate: f64,
}

impl ReferencePeak {
    fn new(frame_rate: f64, len: usize, bands: &VitalBands) -> Result<Self> {
        let bins_of = |band: &Band| -> Result<Vec<usize>> {
            let b: Vec<usize> = (0..len.div_ceil(2))
                .filter(|&k| band.contains(k as f64 * frame_rate / len as f64))
                .collect();
            if b.is_empty() {
                Err(Error::EmptyBand {
                    lo: band.lo,
                    hi: band.hi,
                })
            } else {
                Ok(b)
            }
        };
        Ok(Self {
            fft: rustfft::FftPlanner::new().plan_fft_forward(len),
            len,
            bins: [bins_of(&bands.respiration)?, bins_of(&bands.heartbeat)?],
            frame_rate,
        })
    }

    fn peaks(&self, v: &[f64]) -> (f64, f64) {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let mut buf = vec![Complex64::new(0.0, 0.0); self.len];
        for (b, x) in buf.iter_mut().zip(v) {
            b.re = x - mean;
        }
        self.fft.process(&mut buf);
        let step = 60.0 * self.frame_rate / self.len as f64;
        let pick = |bins: &[usize]| {
            let mut best = bins[0];
            for &k in bins {
                if buf[k].norm_sqr() > buf[best].norm_sqr() {
                    best = k;
                }
            }
            best as f64 * step
        };
        (pick(&self.bins[0]), pick(&self.bins[1]))
    }
}

fn candidate_humans(scene: &Scene, targets: &Option<Vec<String>>) -> Result<Vec<TrackedHuman>> {
    let mut out: Vec<TrackedHuman> = Vec::new();
    match targets {
        None => {
            for o in scene.humans() {
                out.push(TrackedHuman {
                    name: o.name.clone(),
                    bin: o.bin,
                });
            }
        }
        Some(names) => {
            for name in names {
                let o = scene
                    .object(name)
                    .ok_or_else(|| Error::Session(format!("target '{name}' is not in the scene")))?;
                if o.kind != ObjectKind::Human {
                    return Err(Error::Session(format!("target '{name}' is not a human")));
                }
                out.push(TrackedHuman {
                    name: o.name.clone(),
                    bin: o.bin,
                });
            }
        }
    }
    out.sort_by_key(|h| h.bin);
    Ok(out)
}

/// Doppler rows of `bins` for frames `[0, total)`, computed frame by frame.
///
/// Column l of X_S = (1/N) F_S Y depends only on frame l, so overlapping
/// windows share these rows.
fn doppler_rows(synth: &FrameSynthesizer, bins: &[usize], total: usize, channel: Channel) -> Array2<Complex64> {
    let kernel = DopplerKernel::new(bins, synth.config().samples_per_chirp);
    let columns: Vec<Vec<Complex64>> = (0..total)
        .into_par_iter()
        .map(|f| {
            let frame: Vec<Complex64> = synth.averaged_frame(f).into_iter().map(|z| channel.apply(z)).collect();
            kernel.apply_column(&frame)
        })
        .collect();
    let mut rows = Array2::zeros((bins.len(), total));
    for (f, col) in columns.into_iter().enumerate() {
        for (k, v) in col.into_iter().enumerate() {
            rows[(k, f)] = v;
        }
    }
    rows
}

fn estimate_window(estimator: &VitalEstimator, v: &[f64], methods: &[Method]) -> Result<Vec<(Method, f64, f64, bool)>> {
    methods
        .iter()
        .map(|&m| {
            let e = estimator.estimate(v, m)?;
            Ok((m, e.rr_bpm, e.hr_bpm, e.flagged))
        })
        .collect()
}

/// Runs a monitoring session: localize, then estimate every T_int.
pub fn run_monitoring(
    scene: &Scene,
    settings: &MonitoringSettings,
    snr_db: f64,
    seed: u64,
) -> Result<MonitoringSession> {
    settings.validate()?;
    let radar = &settings.radar;
    let grid = build_range_grid(radar)?;
    let total = settings.total_frames()?;
    let windows = settings.window_count()?;
    let l = radar.window_frames();
    let hop = radar.hop_frames();
    let fs = radar.frame_rate();
    let bands = settings.bands();

    let synth = FrameSynthesizer::new(scene, radar, snr_db, seed)?;
    let candidates = candidate_humans(scene, &settings.targets)?;
    for o in &scene.objects {
        o.vibration.validate(fs, Some(total))?;
    }

    let first = settings.channel.measurement(synth.measurement(0, l)?);
    let (support, fista) = localize(&first, &grid, settings, &candidates)?;
    drop(first);

    let mut tracked = Vec::new();
    let mut missed = Vec::new();
    for h in &candidates {
        if support.bins.contains(&h.bin) {
            tracked.push(h.clone());
        } else {
            missed.push(h.name.clone());
        }
    }
    let unmatched_bins: Vec<usize> = support
        .bins
        .iter()
        .copied()
        .filter(|&b| scene.object_at_bin(b).is_none_or(|o| o.kind != ObjectKind::Human))
        .collect();
    if !missed.is_empty() {
        warn!("humans missing from the support: {}", missed.join(", "));
    }
    debug!("support bins {:?}, tracked {:?}", support.bins, tracked);

    let references: Vec<ReferenceSeries> = tracked
        .iter()
        .map(|h| {
            let o = scene.object_at_bin(h.bin).expect("tracked human exists");
            reference_rates(&o.vibration, fs, &bands, l, hop, windows)
        })
        .collect::<Result<_>>()?;
    let estimator = VitalEstimator::new(fs, l, &bands)?;

    // raw[w][k] = per-method estimates of human k in window w, None when
    // the human dropped out of that window's support
    type Raw = Vec<Option<Vec<(Method, f64, f64, bool)>>>;
    let mut window_supports = Vec::new();
    let raw: Vec<Raw> = match settings.policy {
        LocalizationPolicy::FirstWindow => {
            let bins: Vec<usize> = tracked.iter().map(|h| h.bin).collect();
            let phases: Vec<Vec<f64>> = if bins.is_empty() {
                vec![]
            } else {
                let rows = doppler_rows(&synth, &bins, total, settings.channel);
                rows.rows()
                    .into_iter()
                    .map(|r| extract_row_phase(r.iter().copied()).0)
                    .collect()
            };
            // Unwrapping a window slice differs from slicing the unwrapped
            // series by a constant multiple of 2 pi, which every estimator
            // removes with the mean.
            (0..windows)
                .into_par_iter()
                .map(|w| {
                    phases
                        .iter()
                        .map(|p| estimate_window(&estimator, &p[w * hop..w * hop + l], &settings.methods).map(Some))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<_>>()?
        }
        LocalizationPolicy::EveryWindow => {
            let mut out = Vec::with_capacity(windows);
            for w in 0..windows {
                let y = settings.channel.measurement(synth.measurement(w * hop, l)?);
                let (s, _) = localize(&y, &grid, settings, &candidates)?;
                let present: Vec<usize> = tracked.iter().map(|h| h.bin).filter(|b| s.bins.contains(b)).collect();
                let rows = if present.is_empty() {
                    Array2::zeros((0, l))
                } else {
                    DopplerKernel::new(&present, y.samples()).apply(&y.data)
                };
                let mut per_human = Vec::with_capacity(tracked.len());
                for h in &tracked {
                    match present.iter().position(|&b| b == h.bin) {
                        Some(i) => {
                            let (p, _) = extract_row_phase(rows.row(i).iter().copied());
                            per_human.push(Some(estimate_window(&estimator, &p, &settings.methods)?));
                        }
                        None => per_human.push(None),
                    }
                }
                window_supports.push(s.bins);
                out.push(per_human);
            }
            out
        }
    };

    let mut smoothers = vec![RateSmoother::new(); tracked.len()];
    let mut records = Vec::with_capacity(windows * tracked.len() * settings.methods.len());
    for (w, per_human) in raw.into_iter().enumerate() {
        let t = settings.timestamp(w);
        for (k, entry) in per_human.into_iter().enumerate() {
            let Some(estimates) = entry else { continue };
            for (method, rr, hr, flagged) in estimates {
                let (rr_out, hr_out) = if method == Method::Vsdr {
                    smoothers[k].push(t, rr, hr)
                } else {
                    (rr, hr)
                };
                records.push(EstimateRecord {
                    estimate: RateEstimate {
                        timestamp: t,
                        human: k,
                        method,
                        rr_bpm: rr_out,
                        hr_bpm: hr_out,
                        raw_rr_bpm: rr,
                        raw_hr_bpm: hr,
                    },
                    rr_ref: references[k].rr_bpm[w],
                    hr_ref: references[k].hr_bpm[w],
                    flagged,
                });
            }
        }
    }

    Ok(MonitoringSession {
        snr_db,
        seed,
        duration: settings.duration,
        total_frames: total,
        window_frames: l,
        hop_frames: hop,
        windows,
        support,
        fista,
        tracked,
        missed,
        unmatched_bins,
        window_supports,
        records,
        methods: settings.methods.clone(),
    })
}

fn localize(
    y: &Measurement,
    grid: &RangeGrid,
    settings: &MonitoringSettings,
    candidates: &[TrackedHuman],
) -> Result<(Support, Option<FistaSummary>)> {
    match settings.support {
        SupportMode::Oracle => {
            if candidates.is_empty() {
                return Err(Error::Session(
                    "oracle support requested for a scene without humans".into(),
                ));
            }
            let bins: Vec<usize> = candidates.iter().map(|h| h.bin).collect();
            Ok((Support::from_bins(&bins, grid, &vec![1.0; bins.len()]), None))
        }
        SupportMode::Jsr => {
            let (support, outcome) = localize_jsr(y, grid, &settings.jsr).map_err(|e| match e {
                Error::EmptySupport => Error::Session("localization found no occupied range bin".into()),
                other => other,
            })?;
            Ok((
                support,
                Some(FistaSummary {
                    iterations: outcome.iterations,
                    converged: outcome.converged,
                    objective: outcome.objective(),
                }),
            ))
        }
    }
}

/// The three localizers on the first window of one noisy realization.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalizerComparison {
    pub jsr: Support,
    pub max_power: Localization,
    pub std: Localization,
}

pub fn compare_localizers(
    scene: &Scene,
    radar: &RadarConfig,
    jsr: &JsrSettings,
    snr_db: f64,
    seed: u64,
    top: usize,
) -> Result<LocalizerComparison> {
    let grid = build_range_grid(radar)?;
    let synth = FrameSynthesizer::new(scene, radar, snr_db, seed)?;
    let y = synth.measurement(0, radar.window_frames())?.in_phase();
    let (support, _) = localize_jsr(&y, &grid, jsr)?;
    let map = build_range_slow_time_map(&y, &grid);
    Ok(LocalizerComparison {
        jsr: support,
        max_power: localize_max_avg_power(&map, top)?,
        std: localize_std(&map, top, StdStatistic::default())?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Vital {
    Respiration,
    Heartbeat,
}

impl Vital {
    pub const ALL: [Vital; 2] = [Vital::Respiration, Vital::Heartbeat];

    pub fn as_str(&self) -> &'static str {
        match self {
            Vital::Respiration => "rr",
            Vital::Heartbeat => "hr",
        }
    }
}

/// Absolute error below which an estimate counts as a success (bpm).
pub const SUCCESS_THRESHOLD_BPM: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VitalScore {
    /// Percentage of estimates with |error| < 2 bpm.
    pub success_rate: f64,
    /// `None` when either series is constant.
    pub pcc: Option<f64>,
    pub mae: f64,
    pub rmse: f64,
}

fn is_constant(x: &[f64]) -> bool {
    let (lo, hi) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(*v), hi.max(*v))
    });
    hi - lo <= 1e-12 * hi.abs().max(lo.abs()).max(1.0)
}

/// Pearson correlation, `None` for constant series.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 || is_constant(a) || is_constant(b) {
        return None;
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

pub fn score_series(estimates: &[f64], reference: &[f64]) -> Result<VitalScore> {
    if estimates.len() != reference.len() {
        return Err(Error::LengthMismatch {
            left: estimates.len(),
            right: reference.len(),
        });
    }
    if estimates.is_empty() {
        return Err(Error::InvalidArgument("cannot score an empty series".into()));
    }
    let n = estimates.len() as f64;
    let errors: Vec<f64> = estimates.iter().zip(reference).map(|(e, r)| e - r).collect();
    let hits = errors.iter().filter(|e| e.abs() < SUCCESS_THRESHOLD_BPM).count();
    let mae = errors.iter().map(|e| e.abs()).sum::<f64>() / n;
    let rmse = (errors.iter().map(|e| e * e).sum::<f64>() / n).sqrt();
    Ok(VitalScore {
        success_rate: 100.0 * hits as f64 / n,
        pcc: pearson(estimates, reference),
        mae,
        rmse: rmse.max(mae),
    })
}

/// Metric-wise median; PCC medians ignore undefined values.
pub fn aggregate_median(scores: &[VitalScore]) -> Option<VitalScore> {
    if scores.is_empty() {
        return None;
    }
    let pick = |f: fn(&VitalScore) -> f64| median(&scores.iter().map(f).collect::<Vec<_>>()).unwrap_or(f64::NAN);
    let pccs: Vec<f64> = scores.iter().filter_map(|s| s.pcc).collect();
    Some(VitalScore {
        success_rate: pick(|s| s.success_rate),
        pcc: median(&pccs),
        mae: pick(|s| s.mae),
        rmse: pick(|s| s.rmse),
    })
}

/// Score of one human, method and vital.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectScore {
    pub human: String,
    pub method: Method,
    pub vital: Vital,
    pub score: VitalScore,
}

/// Scores every tracked human for every method and vital.
pub fn score(session: &MonitoringSession) -> Result<Vec<SubjectScore>> {
    let mut out = Vec::new();
    for (k, h) in session.tracked.iter().enumerate() {
        for &method in &session.methods {
            let recs: Vec<&EstimateRecord> = session.series(k, method).collect();
            if recs.is_empty() {
                continue;
            }
            for vital in Vital::ALL {
                let (est, reference): (Vec<f64>, Vec<f64>) = recs
                    .iter()
                    .map(|r| match vital {
                        Vital::Respiration => (r.estimate.rr_bpm, r.rr_ref),
                        Vital::Heartbeat => (r.estimate.hr_bpm, r.hr_ref),
                    })
                    .unzip();
                out.push(SubjectScore {
                    human: h.name.clone(),
                    method,
                    vital,
                    score: score_series(&est, &reference)?,
                });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub snr_db: f64,
    pub method: Method,
    pub vital: Vital,
    pub score: VitalScore,
}

/// Aggregated metrics, one row per (SNR, method, vital).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreCard {
    pub rows: Vec<ScoreRow>,
}

impl ScoreCard {
    pub fn get(&self, snr_db: f64, method: Method, vital: Vital) -> Option<&VitalScore> {
        self.rows
            .iter()
            .find(|r| r.snr_db == snr_db && r.method == method && r.vital == vital)
            .map(|r| &r.score)
    }
}

fn median_rows(snr_db: f64, methods: &[Method], scores: &[SubjectScore]) -> Vec<ScoreRow> {
    let mut rows = Vec::new();
    for &method in methods {
        for vital in Vital::ALL {
            let s: Vec<VitalScore> = scores
                .iter()
                .filter(|x| x.method == method && x.vital == vital)
                .map(|x| x.score)
                .collect();
            if let Some(score) = aggregate_median(&s) {
                rows.push(ScoreRow {
                    snr_db,
                    method,
                    vital,
                    score,
                });
            }
        }
    }
    rows
}

/// Median across the tracked humans of one session.
pub fn scorecard(session: &MonitoringSession) -> Result<ScoreCard> {
    Ok(ScoreCard {
        rows: median_rows(session.snr_db, &session.methods, &score(session)?),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Subject {
    pub name: String,
    pub vibration: VibrationSpec,
}

/// Subjects whose vibration replaces that of the `target` human in turn.
#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub target: String,
    pub subjects: Vec<Subject>,
}

/// Respiration and heartbeat displacement amplitude ranges of synthetic subjects (m).
pub const COHORT_RESPIRATION_AMPLITUDE: (f64, f64) = (1e-3, 2e-3);
pub const COHORT_HEARTBEAT_AMPLITUDE: (f64, f64) = (1e-4, 3e-4);

/// `count` two-tone subjects with rates drawn uniformly inside the bands.
pub fn synthetic_cohort(count: usize, seed: u64, bands: &VitalBands) -> Vec<Subject> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let fr = rng.random_range(bands.respiration.lo..=bands.respiration.hi);
            let fh = rng.random_range(bands.heartbeat.lo..=bands.heartbeat.hi);
            let ar = rng.random_range(COHORT_RESPIRATION_AMPLITUDE.0..=COHORT_RESPIRATION_AMPLITUDE.1);
            let ah = rng.random_range(COHORT_HEARTBEAT_AMPLITUDE.0..=COHORT_HEARTBEAT_AMPLITUDE.1);
            Subject {
                name: format!("subject{:02}", i + 1),
                vibration: VibrationSpec::two_tone(ar, fr, ah, fh),
            }
        })
        .collect()
}

/// Seed of subject `index` under master seed `seed` (SplitMix64 finalizer).
pub fn subject_seed(seed: u64, index: usize) -> u64 {
    let mut z = seed.wrapping_add((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs every (SNR, seed, subject) session and aggregates by median.
///
/// Scores are first reduced to a median across subjects (or across the
/// tracked humans when there is no cohort) for each seed, then to a median
/// across seeds. Sessions run in parallel and are merged in input order.
pub fn sweep_snr(
    scene: &Scene,
    settings: &MonitoringSettings,
    cohort: Option<&Cohort>,
    snr_list: &[f64],
    seeds: &[u64],
) -> Result<ScoreCard> {
    let mut settings = settings.clone();
    let mut scenes = Vec::new();
    match cohort {
        Some(c) => {
            settings.targets = Some(vec![c.target.clone()]);
            for s in &c.subjects {
                let mut sc = scene.clone();
                sc.object_mut(&c.target)
                    .ok_or_else(|| Error::Session(format!("cohort target '{}' is not in the scene", c.target)))?
                    .vibration = s.vibration.clone();
                scenes.push(sc);
            }
        }
        None => scenes.push(scene.clone()),
    }
    let n_scenes = scenes.len();
    let mut jobs = Vec::with_capacity(snr_list.len() * seeds.len() * n_scenes);
    for i in 0..snr_list.len() {
        for j in 0..seeds.len() {
            for k in 0..n_scenes {
                jobs.push((i, j, k));
            }
        }
    }
    let results: Vec<Vec<SubjectScore>> = jobs
        .par_iter()
        .map(|&(i, j, k)| {
            let session = run_monitoring(&scenes[k], &settings, snr_list[i], subject_seed(seeds[j], k))?;
            if !session.missed.is_empty() {
                warn!(
                    "snr {} dB, seed {}, subject {}: {} not localized",
                    snr_list[i],
                    seeds[j],
                    k,
                    session.missed.join(", ")
                );
            }
            score(&session)
        })
        .collect::<Result<_>>()?;

    let per_seed = scenes.len();
    let mut rows = Vec::new();
    for (i, &snr) in snr_list.iter().enumerate() {
        let mut seed_rows: Vec<ScoreRow> = Vec::new();
        for j in 0..seeds.len() {
            let start = (i * seeds.len() + j) * per_seed;
            let all: Vec<SubjectScore> = results[start..start + per_seed].iter().flatten().cloned().collect();
            seed_rows.extend(median_rows(snr, &settings.methods, &all));
        }
        for &method in &settings.methods {
            for vital in Vital::ALL {
                let s: Vec<VitalScore> = seed_rows
                    .iter()
                    .filter(|r| r.method == method && r.vital == vital)
                    .map(|r| r.score)
                    .collect();
                if let Some(score) = aggregate_median(&s) {
                    rows.push(ScoreRow {
                        snr_db: snr,
                        method,
                        vital,
                        score,
                    });
                }
            }
        }
    }
    Ok(ScoreCard { rows })
}
