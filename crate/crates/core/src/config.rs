//! Radar timing parameters and the fast-time range grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light used for every range computation (m/s).
pub const SPEED_OF_LIGHT: f64 = 2.9979e8;

/// Physical and timing parameters of the FMCW radar and the monitoring loop.
///
/// Defaults reproduce the TI IWR1642 operating point: 3.9 mm wavelength,
/// 57 us chirps sampled at 4 MHz, 70 MHz/us sweep, 10 ms frames of 150
/// chirps, 200 fast-time samples, 30 s windows refreshed every 50 ms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadarConfig {
    /// Maximal chirp wavelength (m).
    pub lambda_max: f64,
    /// Chirp duration (s).
    pub chirp_duration: f64,
    /// Fast-time ADC sampling rate (Hz).
    pub f_adc: f64,
    /// Frequency sweep rate (Hz/s).
    pub sweep_rate: f64,
    /// Frame duration, the slow-time sampling interval (s).
    pub frame_duration: f64,
    /// Fast-time samples per chirp.
    pub samples_per_chirp: usize,
    /// Chirps per frame.
    pub chirps_per_frame: usize,
    /// Window length (s).
    pub window_duration: f64,
    /// Interval between consecutive estimates (s).
    pub estimate_interval: f64,
}

impl Default for RadarConfig {
    fn default() -> Self {
        Self {
            lambda_max: 3.9e-3,
            chirp_duration: 57e-6,
            f_adc: 4e6,
            sweep_rate: 70e12,
            frame_duration: 10e-3,
            samples_per_chirp: 200,
            chirps_per_frame: 150,
            window_duration: 30.0,
            estimate_interval: 0.05,
        }
    }
}

fn integer_ratio(num: f64, den: f64) -> Option<usize> {
    let r = num / den;
    let k = r.round();
    if k >= 1.0 && (r - k).abs() <= 1e-9 * k.max(1.0) {
        Some(k as usize)
    } else {
        None
    }
}

impl RadarConfig {
    /// Slow-time sampling rate f_s = 1/T_s (Hz).
    pub fn frame_rate(&self) -> f64 {
        1.0 / self.frame_duration
    }

    /// Number of range bins, always N/2.
    pub fn range_bins(&self) -> usize {
        self.samples_per_chirp / 2
    }

    /// Frames per window, L = T_win * f_s.
    pub fn window_frames(&self) -> usize {
        integer_ratio(self.window_duration, self.frame_duration).unwrap_or(0)
    }

    /// Frames between consecutive estimates, T_int / T_s.
    pub fn hop_frames(&self) -> usize {
        integer_ratio(self.estimate_interval, self.frame_duration).unwrap_or(0)
    }

    pub fn noise_variance(snr_db: f64) -> f64 {
        10f64.powf(-snr_db / 10.0)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lambda_max", self.lambda_max),
            ("T_c", self.chirp_duration),
            ("f_adc", self.f_adc),
            ("S", self.sweep_rate),
            ("T_s", self.frame_duration),
            ("T_win", self.window_duration),
            ("T_int", self.estimate_interval),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        let n = self.samples_per_chirp;
        if n < 4 || !n.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "N must be even and at least 4 so that M = N/2, got {n}"
            )));
        }
        if self.chirps_per_frame == 0 {
            return Err(Error::Config("G must be at least 1".into()));
        }
        let chirps_time = self.chirps_per_frame as f64 * self.chirp_duration;
        if chirps_time > self.frame_duration * (1.0 + 1e-12) {
            return Err(Error::Config(format!(
                "G * T_c = {chirps_time} s does not fit in the frame duration T_s = {} s",
                self.frame_duration
            )));
        }
        if integer_ratio(self.window_duration, self.frame_duration).is_none() {
            return Err(Error::Config(format!(
                "L = T_win * f_s = {} is not a positive integer",
                self.window_duration / self.frame_duration
            )));
        }
        if integer_ratio(self.estimate_interval, self.frame_duration).is_none() {
            return Err(Error::Config(format!(
                "T_int / T_s = {} is not a positive integer",
                self.estimate_interval / self.frame_duration
            )));
        }
        Ok(())
    }
}

/// Fast-time frequencies of the M range bins and their distances.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeGrid {
    /// Beat frequency of each bin (Hz).
    pub frequencies: Vec<f64>,
    /// Radial distance of each bin (m).
    pub distances: Vec<f64>,
    /// Distance between adjacent bins (m).
    pub spacing: f64,
    /// Largest representable distance, that of bin M-1 (m).
    pub max_distance: f64,
}

impl RangeGrid {
    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    pub fn distance(&self, bin: usize) -> f64 {
        self.spacing * bin as f64
    }
}

pub fn build_range_grid(config: &RadarConfig) -> Result<RangeGrid> {
    config.validate()?;
    let n = config.samples_per_chirp as f64;
    let m = config.range_bins();
    let bin_hz = config.f_adc / n;
    let spacing = SPEED_OF_LIGHT * config.f_adc / (2.0 * config.sweep_rate * n);
    let frequencies: Vec<f64> = (0..m).map(|i| bin_hz * i as f64).collect();
    let distances: Vec<f64> = (0..m).map(|i| spacing * i as f64).collect();
    Ok(RangeGrid {
        frequencies,
        distances,
        spacing,
        max_distance: spacing * (m - 1) as f64,
    })
}

/// A closed frequency interval [lo, hi] in Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
}

impl Band {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    /// Normal resting respiration band.
    pub const RESPIRATION: Band = Band::new(0.1, 0.4);
    /// Normal resting heartbeat band.
    pub const HEARTBEAT: Band = Band::new(0.78, 1.67);

    pub fn contains(&self, f: f64) -> bool {
        let eps = 1e-9 * self.hi.abs().max(1.0);
        f >= self.lo - eps && f <= self.hi + eps
    }

    pub fn validate(&self, sample_rate: f64) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite()) || self.lo < 0.0 || self.hi < self.lo {
            return Err(Error::InvalidArgument(format!(
                "band [{}, {}] Hz is not a valid interval",
                self.lo, self.hi
            )));
        }
        if self.hi >= sample_rate / 2.0 {
            return Err(Error::InvalidArgument(format!(
                "band [{}, {}] Hz must lie below f_s/2 = {} Hz",
                self.lo,
                self.hi,
                sample_rate / 2.0
            )));
        }
        Ok(())
    }
}

/// The respiration and heartbeat bands used throughout the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VitalBands {
    pub respiration: Band,
    pub heartbeat: Band,
}

impl Default for VitalBands {
    fn default() -> Self {
        Self {
            respiration: Band::RESPIRATION,
            heartbeat: Band::HEARTBEAT,
        }
    }
}
