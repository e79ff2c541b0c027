//! Doppler row recovery, the range vs. slow-time map and phase extraction.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{Array2, ArrayView1};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::config::RangeGrid;
use crate::error::{Error, Result};
use crate::localization::Support;
use crate::synthesis::Measurement;

/// Rows of the partial DFT `F_S(k, n) = exp(-j 2 pi bins[k] n / N) / N`, n = 1..N.
#[derive(Debug, Clone)]
pub struct DopplerKernel {
    bins: Vec<usize>,
    rows: Array2<Complex64>,
}

impl DopplerKernel {
    pub fn new(bins: &[usize], samples: usize) -> Self {
        let scale = 1.0 / samples as f64;
        let rows = Array2::from_shape_fn((bins.len(), samples), |(k, i)| {
            let n = i + 1;
            let phase = ((bins[k] * n) % samples) as f64 / samples as f64;
            Complex64::from_polar(scale, -2.0 * PI * phase)
        });
        Self {
            bins: bins.to_vec(),
            rows,
        }
    }

    pub fn bins(&self) -> &[usize] {
        &self.bins
    }

    /// The scaled kernel (1/N) F_S, K x N.
    pub fn matrix(&self) -> &Array2<Complex64> {
        &self.rows
    }

    /// (1/N) F_S y for one fast-time column.
    pub fn apply_column(&self, column: &[Complex64]) -> Vec<Complex64> {
        self.rows
            .rows()
            .into_iter()
            .map(|row| row.iter().zip(column).map(|(a, y)| a * y).sum())
            .collect()
    }

    pub fn apply(&self, y: &Array2<Complex64>) -> Array2<Complex64> {
        self.rows.dot(y)
    }
}

/// X_S = (1/N) F_S Y, one row per support bin in ascending bin order.
pub fn recover_doppler_rows(y: &Measurement, support: &Support) -> Result<Array2<Complex64>> {
    let m = y.config.range_bins();
    if support.bins.is_empty() {
        return Err(Error::EmptySupport);
    }
    if let Some(&b) = support.bins.iter().find(|&&b| b >= m) {
        return Err(Error::InvalidArgument(format!("support bin {b} is not below M = {m}")));
    }
    Ok(DopplerKernel::new(&support.bins, y.samples()).apply(&y.data))
}

/// Full-range DFT of fast-time columns via FFT, first `bins` outputs scaled by 1/N.
#[derive(Clone)]
pub struct RangeTransform {
    fft: Arc<dyn Fft<f64>>,
    samples: usize,
    bins: usize,
    /// exp(-j 2 pi m / N): shift from the n = 0 based FFT to n = 1..N.
    shift: Vec<Complex64>,
}

impl RangeTransform {
    pub fn new(samples: usize, bins: usize) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(samples);
        let shift = (0..bins)
            .map(|m| Complex64::from_polar(1.0 / samples as f64, -2.0 * PI * m as f64 / samples as f64))
            .collect();
        Self {
            fft,
            samples,
            bins,
            shift,
        }
    }

    /// Range spectrum of every column of `y` (N x L) as a `bins` x L matrix.
    pub fn apply(&self, y: &Array2<Complex64>) -> Array2<Complex64> {
        assert_eq!(y.nrows(), self.samples);
        let frames = y.ncols();
        let mut out = Array2::zeros((self.bins, frames));
        let mut buf = vec![Complex64::new(0.0, 0.0); self.samples];
        for l in 0..frames {
            for (b, v) in buf.iter_mut().zip(y.column(l)) {
                *b = *v;
            }
            self.fft.process(&mut buf);
            for m in 0..self.bins {
                out[(m, l)] = buf[m] * self.shift[m];
            }
        }
        out
    }
}

/// |X_M| over all range bins and frames of one window.
#[derive(Debug, Clone)]
pub struct RangeSlowTimeMap {
    /// M x L complex map.
    pub data: Array2<Complex64>,
    /// Distance of each row (m).
    pub distances: Vec<f64>,
    pub window_start: usize,
}

impl RangeSlowTimeMap {
    pub fn bins(&self) -> usize {
        self.data.nrows()
    }

    pub fn row(&self, bin: usize) -> ArrayView1<'_, Complex64> {
        self.data.row(bin)
    }
}

pub fn build_range_slow_time_map(y: &Measurement, grid: &RangeGrid) -> RangeSlowTimeMap {
    let m = y.config.range_bins();
    let data = RangeTransform::new(y.samples(), m).apply(&y.data);
    RangeSlowTimeMap {
        data,
        distances: grid.distances.clone(),
        window_start: y.window_start,
    }
}

/// Wraps an angle difference into (-pi, pi].
fn wrap_difference(d: f64) -> f64 {
    d - 2.0 * PI * ((d - PI) / (2.0 * PI)).ceil()
}

/// Removes artificial 2 pi jumps between consecutive samples.
///
/// A difference outside `(-tolerance, tolerance]` is replaced by its
/// representative in (-pi, pi]. The output differs from the input by a
/// multiple of 2 pi at every sample.
pub fn unwrap_phase(wrapped: &[f64], tolerance: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(wrapped.len());
    let Some(&first) = wrapped.first() else {
        return out;
    };
    out.push(first);
    let mut offset = 0.0;
    for w in wrapped.windows(2) {
        let d = w[1] - w[0];
        if d <= -tolerance || d > tolerance {
            offset += wrap_difference(d) - d;
        }
        out.push(w[1] + offset);
    }
    out
}

/// L x K unwrapped phases, one column per support bin.
#[derive(Debug, Clone, PartialEq)]
pub struct VibrationMatrix {
    pub data: Array2<f64>,
    pub bins: Vec<usize>,
    /// Columns where a zero-magnitude sample had its phase carried forward.
    pub imputed: Vec<bool>,
}

impl VibrationMatrix {
    pub fn column(&self, k: usize) -> Vec<f64> {
        self.data.column(k).to_vec()
    }
}

/// Unwrapped four-quadrant phase of one Doppler row.
///
/// Returns the phase and whether any zero sample was imputed.
pub fn extract_row_phase(row: impl IntoIterator<Item = Complex64>) -> (Vec<f64>, bool) {
    let mut imputed = false;
    let mut prev = 0.0;
    let wrapped: Vec<f64> = row
        .into_iter()
        .map(|z| {
            if z.re == 0.0 && z.im == 0.0 {
                imputed = true;
            } else {
                prev = z.im.atan2(z.re);
            }
            prev
        })
        .collect();
    (unwrap_phase(&wrapped, PI), imputed)
}

pub fn extract_phase(doppler_rows: &Array2<Complex64>, bins: &[usize]) -> VibrationMatrix {
    let (k, l) = doppler_rows.dim();
    let mut data = Array2::zeros((l, k));
    let mut imputed = Vec::with_capacity(k);
    for (i, row) in doppler_rows.rows().into_iter().enumerate() {
        let (phase, flag) = extract_row_phase(row.iter().copied());
        for (j, p) in phase.into_iter().enumerate() {
            data[(j, i)] = p;
        }
        imputed.push(flag);
    }
    VibrationMatrix {
        data,
        bins: bins.to_vec(),
        imputed,
    }
}
