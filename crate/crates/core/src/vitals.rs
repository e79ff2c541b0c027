//! Respiration and heart rate estimation from unwrapped thoracic phase.
//!
//! The dictionary estimator correlates the detrended phase against cosine
//! atoms on a 1 bpm grid restricted to each vital band. The three
//! baselines are an FFT peak pick with and without zero padding and a
//! phase-slope regression on the band-limited analytic signal.

use std::cmp::Ordering;
use std::collections::VecDeque;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::config::{Band, VitalBands};
use crate::doppler::unwrap_phase;
use crate::error::{Error, Result};

/// Grid points per Hz of the dictionary grid (1 bpm resolution).
pub const GRID_POINTS_PER_HZ: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Vsdr,
    FftZp,
    FftNozp,
    PhaseReg,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Vsdr, Method::FftZp, Method::FftNozp, Method::PhaseReg];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Vsdr => "vsdr",
            Method::FftZp => "fft_zp",
            Method::FftNozp => "fft_nozp",
            Method::PhaseReg => "phase_reg",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method '{s}'")))
    }
}

/// Cosine atoms for the grid frequencies inside one band.
#[derive(Debug, Clone)]
pub struct BandDictionary {
    pub band: Band,
    /// Grid frequencies h/Q * f_s inside the band (Hz), ascending.
    pub frequencies: Vec<f64>,
    /// The same grid in bpm, computed as h * (60 f_s / Q) so that integer
    /// grid points are exact.
    pub rates_bpm: Vec<f64>,
    /// One atom per row: `cos(2 pi g l T_s)`, l = 1..L.
    pub atoms: Array2<f64>,
}

impl BandDictionary {
    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    /// D^T v.
    pub fn correlate(&self, v: &[f64]) -> Vec<f64> {
        self.atoms
            .rows()
            .into_iter()
            .map(|atom| atom.iter().zip(v).map(|(a, x)| a * x).sum())
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct VitalDictionaries {
    pub frame_rate: f64,
    /// Q = 60 f_s.
    pub grid_size: usize,
    pub window_len: usize,
    pub respiration: BandDictionary,
    pub heartbeat: BandDictionary,
}

impl VitalDictionaries {
    pub fn grid_spacing(&self) -> f64 {
        self.frame_rate / self.grid_size as f64
    }
}

fn band_dictionary(band: Band, frame_rate: f64, grid_size: usize, len: usize) -> Result<BandDictionary> {
    band.validate(frame_rate)?;
    let step = frame_rate / grid_size as f64;
    let lo = ((band.lo / step) - 1e-9).ceil().max(0.0) as usize;
    let hi = ((band.hi / step) + 1e-9).floor() as usize;
    let hi = hi.min(grid_size / 2 - 1);
    if lo > hi {
        return Err(Error::EmptyBand {
            lo: band.lo,
            hi: band.hi,
        });
    }
    let frequencies: Vec<f64> = (lo..=hi).map(|h| h as f64 * step).collect();
    let bpm_step = 60.0 * frame_rate / grid_size as f64;
    let rates_bpm: Vec<f64> = (lo..=hi).map(|h| h as f64 * bpm_step).collect();
    let dt = 1.0 / frame_rate;
    let atoms = Array2::from_shape_fn((frequencies.len(), len), |(q, i)| {
        let l = (i + 1) as f64;
        (2.0 * PI * frequencies[q] * l * dt).cos()
    });
    Ok(BandDictionary {
        band,
        frequencies,
        rates_bpm,
        atoms,
    })
}

pub fn build_dictionaries(frame_rate: f64, len: usize, bands: &VitalBands) -> Result<VitalDictionaries> {
    if len < 2 {
        return Err(Error::InvalidArgument(format!(
            "window length must be at least 2, got {len}"
        )));
    }
    if !(frame_rate > 0.0 && frame_rate.is_finite()) {
        return Err(Error::InvalidArgument(format!("invalid frame rate {frame_rate}")));
    }
    let grid_size = (GRID_POINTS_PER_HZ * frame_rate).round() as usize;
    if grid_size < 2 {
        return Err(Error::InvalidArgument(format!(
            "frame rate {frame_rate} Hz is too low for a 1 bpm grid"
        )));
    }
    Ok(VitalDictionaries {
        frame_rate,
        grid_size,
        window_len: len,
        respiration: band_dictionary(bands.respiration, frame_rate, grid_size, len)?,
        heartbeat: band_dictionary(bands.heartbeat, frame_rate, grid_size, len)?,
    })
}

fn detrended(v: &[f64]) -> Vec<f64> {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| x - mean).collect()
}

/// First index of the largest |score|, so ties resolve toward lower frequency.
fn argmax_abs(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if s.abs() > scores[best].abs() {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct VsdrEstimate {
    pub rr_bpm: f64,
    pub hr_bpm: f64,
    pub respiration_scores: Vec<f64>,
    pub heartbeat_scores: Vec<f64>,
    /// All scores were zero; the band lower edges were returned.
    pub degenerate: bool,
}

pub fn vsdr_estimate(v: &[f64], dicts: &VitalDictionaries) -> Result<VsdrEstimate> {
    if v.len() != dicts.window_len {
        return Err(Error::LengthMismatch {
            left: v.len(),
            right: dicts.window_len,
        });
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("vibration contains non-finite samples".into()));
    }
    let v = detrended(v);
    let rs = dicts.respiration.correlate(&v);
    let hs = dicts.heartbeat.correlate(&v);
    let degenerate = rs.iter().chain(&hs).all(|s| *s == 0.0);
    Ok(VsdrEstimate {
        rr_bpm: dicts.respiration.rates_bpm[argmax_abs(&rs)],
        hr_bpm: dicts.heartbeat.rates_bpm[argmax_abs(&hs)],
        respiration_scores: rs,
        heartbeat_scores: hs,
        degenerate,
    })
}

/// One per-interval rate estimate for one human.
#[derive(Debug, Clone, PartialEq)]
pub struct RateEstimate {
    pub timestamp: f64,
    pub human: usize,
    pub method: Method,
    /// Reported (smoothed for VSDR) rates.
    pub rr_bpm: f64,
    pub hr_bpm: f64,
    pub raw_rr_bpm: f64,
    pub raw_hr_bpm: f64,
}

/// Averaging spans for RR and HR (s).
pub const RR_SMOOTHING_SPAN: f64 = 3.0;
pub const HR_SMOOTHING_SPAN: f64 = 1.5;

fn within(t: f64, t_now: f64, span: f64) -> bool {
    let eps = 1e-9 * t_now.abs().max(1.0);
    t > t_now - span + eps && t <= t_now + eps
}

/// Replaces the rates at `t_now` with means of the raw estimates in
/// (t_now - 3, t_now] for RR and (t_now - 1.5, t_now] for HR.
///
/// `history` holds raw estimates, the newest last. When a span holds no
/// estimate the newest raw value is passed through.
pub fn smooth_estimates(history: &[RateEstimate], t_now: f64) -> Result<RateEstimate> {
    let last = history
        .last()
        .ok_or_else(|| Error::InvalidArgument("empty estimate history".into()))?;
    let mean_in = |span: f64, pick: fn(&RateEstimate) -> f64| -> Option<f64> {
        let vals: Vec<f64> = history
            .iter()
            .filter(|e| within(e.timestamp, t_now, span))
            .map(pick)
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    };
    Ok(RateEstimate {
        timestamp: t_now,
        rr_bpm: mean_in(RR_SMOOTHING_SPAN, |e| e.raw_rr_bpm).unwrap_or(last.raw_rr_bpm),
        hr_bpm: mean_in(HR_SMOOTHING_SPAN, |e| e.raw_hr_bpm).unwrap_or(last.raw_hr_bpm),
        ..last.clone()
    })
}

/// Running version of [`smooth_estimates`] for one human.
#[derive(Debug, Clone, Default)]
pub struct RateSmoother {
    history: VecDeque<(f64, f64, f64)>,
}

impl RateSmoother {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds the raw estimate at `t` and returns the smoothed (rr, hr).
    pub fn push(&mut self, t: f64, raw_rr: f64, raw_hr: f64) -> (f64, f64) {
        self.history.push_back((t, raw_rr, raw_hr));
        let span = RR_SMOOTHING_SPAN.max(HR_SMOOTHING_SPAN);
        while let Some(&(t0, _, _)) = self.history.front() {
            if within(t0, t, span) {
                break;
            }
            self.history.pop_front();
        }
        let mean = |span: f64, pick: fn(&(f64, f64, f64)) -> f64| {
            let (sum, n) = self
                .history
                .iter()
                .filter(|e| within(e.0, t, span))
                .fold((0.0, 0usize), |(s, n), e| (s + pick(e), n + 1));
            if n == 0 {
                None
            } else {
                Some(sum / n as f64)
            }
        };
        (
            mean(RR_SMOOTHING_SPAN, |e| e.1).unwrap_or(raw_rr),
            mean(HR_SMOOTHING_SPAN, |e| e.2).unwrap_or(raw_hr),
        )
    }
}

fn band_bins(band: &Band, n: usize, frame_rate: f64) -> Vec<usize> {
    (0..n.div_ceil(2))
        .filter(|&k| band.contains(k as f64 * frame_rate / n as f64))
        .collect()
}

fn spectrum(fft: &dyn Fft<f64>, v: &[f64], n: usize) -> Vec<Complex64> {
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    for (b, x) in buf.iter_mut().zip(v) {
        *b = Complex64::new(x - mean, 0.0);
    }
    fft.process(&mut buf);
    buf
}

fn peak_in(freq: &[Complex64], bins: &[usize]) -> usize {
    let mut best = bins[0];
    for &k in bins {
        if freq[k].norm_sqr() > freq[best].norm_sqr() {
            best = k;
        }
    }
    best
}

/// Zero padding that gives a 1 bpm FFT grid, 60 f_s.
pub fn one_bpm_padding(frame_rate: f64) -> usize {
    (GRID_POINTS_PER_HZ * frame_rate).round() as usize
}

/// Rate (bpm) at the largest DFT magnitude inside `band`.
///
/// The mean-detrended input is zero-padded to `pad_to` when given.
pub fn fft_peak_estimate(v: &[f64], band: Band, frame_rate: f64, pad_to: Option<usize>) -> Result<f64> {
    let n = pad_to.unwrap_or(v.len()).max(v.len());
    let fft = FftPlanner::new().plan_fft_forward(n);
    fft_peak_with(&*fft, v, band, frame_rate, n)
}

fn fft_peak_with(fft: &dyn Fft<f64>, v: &[f64], band: Band, frame_rate: f64, n: usize) -> Result<f64> {
    let bins = band_bins(&band, n, frame_rate);
    if bins.is_empty() {
        return Err(Error::EmptyBand {
            lo: band.lo,
            hi: band.hi,
        });
    }
    let freq = spectrum(fft, v, n);
    Ok(peak_rate(&freq, &bins, frame_rate))
}

fn peak_rate(freq: &[Complex64], bins: &[usize], frame_rate: f64) -> f64 {
    peak_in(freq, bins) as f64 * (60.0 * frame_rate / freq.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseRegEstimate {
    pub rate_bpm: f64,
    /// RMS residual of the line fit (rad).
    pub residual_rms: f64,
    /// Residual above [`PHASE_REG_RESIDUAL_LIMIT`].
    pub low_confidence: bool,
    /// Band-limited signal was identically zero.
    pub degenerate: bool,
}

/// Fit residual (rad RMS) above which a phase-regression estimate is flagged.
pub const PHASE_REG_RESIDUAL_LIMIT: f64 = 0.5;

/// Phase-slope regression on the one-sided band-limited analytic signal.
pub fn phase_reg_estimate(v: &[f64], band: Band, frame_rate: f64) -> Result<PhaseRegEstimate> {
    let mut planner = FftPlanner::new();
    let n = v.len();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    phase_reg_with(&*fwd, &*inv, v, band, frame_rate)
}

fn phase_reg_with(
    fwd: &dyn Fft<f64>,
    inv: &dyn Fft<f64>,
    v: &[f64],
    band: Band,
    frame_rate: f64,
) -> Result<PhaseRegEstimate> {
    let n = v.len();
    let bins = band_bins(&band, n, frame_rate);
    if bins.is_empty() {
        return Err(Error::EmptyBand {
            lo: band.lo,
            hi: band.hi,
        });
    }
    let freq = spectrum(fwd, v, n);
    Ok(phase_reg_from_spectrum(inv, &freq, &bins, band, frame_rate))
}

fn phase_reg_from_spectrum(
    inv: &dyn Fft<f64>,
    freq: &[Complex64],
    bins: &[usize],
    band: Band,
    frame_rate: f64,
) -> PhaseRegEstimate {
    let n = freq.len();
    let mut analytic = vec![Complex64::new(0.0, 0.0); n];
    for &k in bins {
        analytic[k] = freq[k];
    }
    inv.process(&mut analytic);
    let degenerate_result = PhaseRegEstimate {
        rate_bpm: 60.0 * band.lo,
        residual_rms: 0.0,
        low_confidence: true,
        degenerate: true,
    };
    let peak = analytic.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if peak == 0.0 {
        return degenerate_result;
    }
    let wrapped: Vec<f64> = analytic.iter().map(|z| z.arg()).collect();
    let phase = unwrap_phase(&wrapped, PI);

    // least-squares line through (t_l, phase_l)
    let dt = 1.0 / frame_rate;
    let nf = n as f64;
    let t_mean = dt * (nf - 1.0) / 2.0;
    let p_mean = phase.iter().sum::<f64>() / nf;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, p) in phase.iter().enumerate() {
        let dt_i = i as f64 * dt - t_mean;
        sxy += dt_i * (p - p_mean);
        sxx += dt_i * dt_i;
    }
    let slope = sxy / sxx;
    let intercept = p_mean - slope * t_mean;
    let residual_rms = (phase
        .iter()
        .enumerate()
        .map(|(i, p)| (p - (intercept + slope * i as f64 * dt)).powi(2))
        .sum::<f64>()
        / nf)
        .sqrt();
    let rate = (60.0 * slope / (2.0 * PI)).clamp(60.0 * band.lo, 60.0 * band.hi);
    PhaseRegEstimate {
        rate_bpm: rate,
        residual_rms,
        low_confidence: residual_rms > PHASE_REG_RESIDUAL_LIMIT,
        degenerate: false,
    }
}

/// Raw (rr, hr) of one method for one vibration window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodEstimate {
    pub rr_bpm: f64,
    pub hr_bpm: f64,
    pub flagged: bool,
}

/// All four estimators for a fixed window length, with FFT plans,
/// band bins and dictionaries built once.
#[derive(Clone)]
pub struct VitalEstimator {
    frame_rate: f64,
    bands: VitalBands,
    dictionaries: VitalDictionaries,
    window_len: usize,
    padded_len: usize,
    fft_window: Arc<dyn Fft<f64>>,
    ifft_window: Arc<dyn Fft<f64>>,
    fft_padded: Arc<dyn Fft<f64>>,
    /// (respiration, heartbeat) DFT bins at the window length.
    window_bins: (Vec<usize>, Vec<usize>),
    /// (respiration, heartbeat) DFT bins at the padded length.
    padded_bins: (Vec<usize>, Vec<usize>),
}

impl VitalEstimator {
    pub fn new(frame_rate: f64, window_len: usize, bands: &VitalBands) -> Result<Self> {
        let dictionaries = build_dictionaries(frame_rate, window_len, bands)?;
        let padded_len = one_bpm_padding(frame_rate).max(window_len);
        let bins_at = |n: usize| -> Result<(Vec<usize>, Vec<usize>)> {
            let mut out = Vec::new();
            for band in [bands.respiration, bands.heartbeat] {
                let b = band_bins(&band, n, frame_rate);
                if b.is_empty() {
                    return Err(Error::EmptyBand {
                        lo: band.lo,
                        hi: band.hi,
                    });
                }
                out.push(b);
            }
            let h = out.pop().unwrap_or_default();
            let r = out.pop().unwrap_or_default();
            Ok((r, h))
        };
        let mut planner = FftPlanner::new();
        Ok(Self {
            frame_rate,
            bands: *bands,
            dictionaries,
            window_len,
            padded_len,
            fft_window: planner.plan_fft_forward(window_len),
            ifft_window: planner.plan_fft_inverse(window_len),
            fft_padded: planner.plan_fft_forward(padded_len),
            window_bins: bins_at(window_len)?,
            padded_bins: bins_at(padded_len)?,
        })
    }

    pub fn dictionaries(&self) -> &VitalDictionaries {
        &self.dictionaries
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn estimate(&self, v: &[f64], method: Method) -> Result<MethodEstimate> {
        if v.len() != self.window_len {
            return Err(Error::LengthMismatch {
                left: v.len(),
                right: self.window_len,
            });
        }
        let fs = self.frame_rate;
        match method {
            Method::Vsdr => {
                let e = vsdr_estimate(v, &self.dictionaries)?;
                Ok(MethodEstimate {
                    rr_bpm: e.rr_bpm,
                    hr_bpm: e.hr_bpm,
                    flagged: e.degenerate,
                })
            }
            Method::FftZp => {
                let freq = spectrum(&*self.fft_padded, v, self.padded_len);
                Ok(MethodEstimate {
                    rr_bpm: peak_rate(&freq, &self.padded_bins.0, fs),
                    hr_bpm: peak_rate(&freq, &self.padded_bins.1, fs),
                    flagged: false,
                })
            }
            Method::FftNozp => {
                let freq = spectrum(&*self.fft_window, v, self.window_len);
                Ok(MethodEstimate {
                    rr_bpm: peak_rate(&freq, &self.window_bins.0, fs),
                    hr_bpm: peak_rate(&freq, &self.window_bins.1, fs),
                    flagged: false,
                })
            }
            Method::PhaseReg => {
                let freq = spectrum(&*self.fft_window, v, self.window_len);
                let inv = &*self.ifft_window;
                let er = phase_reg_from_spectrum(inv, &freq, &self.window_bins.0, self.bands.respiration, fs);
                let eh = phase_reg_from_spectrum(inv, &freq, &self.window_bins.1, self.bands.heartbeat, fs);
                Ok(MethodEstimate {
                    rr_bpm: er.rate_bpm,
                    hr_bpm: eh.rate_bpm,
                    flagged: er.low_confidence || eh.low_confidence,
                })
            }
        }
    }
}

/// Median of finite values, `None` when there are none.
pub fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}
