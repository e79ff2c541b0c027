//! Human localization: slow-time vital-band filtering followed by l2,1
//! regularized joint sparse recovery, plus the power and std localizers it
//! is compared against.

use std::cmp::Ordering;
use std::f64::consts::PI;
use std::sync::Arc;

use log::warn;
use ndarray::Array2;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::config::{RangeGrid, VitalBands};
use crate::doppler::{extract_row_phase, RangeSlowTimeMap, RangeTransform};
use crate::error::{Error, Result};
use crate::synthesis::Measurement;

/// Ideal slow-time band-pass keeping DFT bins with |f_k| in B_R or B_H.
#[derive(Clone)]
pub struct SlowTimeFilter {
    mask: Vec<bool>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl SlowTimeFilter {
    pub fn new(len: usize, bands: &VitalBands, frame_rate: f64) -> Result<Self> {
        bands.respiration.validate(frame_rate)?;
        bands.heartbeat.validate(frame_rate)?;
        let mask: Vec<bool> = (0..len)
            .map(|k| {
                let f = if 2 * k < len {
                    k as f64 * frame_rate / len as f64
                } else {
                    (k as f64 - len as f64) * frame_rate / len as f64
                };
                bands.respiration.contains(f.abs()) || bands.heartbeat.contains(f.abs())
            })
            .collect();
        if !mask.iter().any(|&m| m) {
            return Err(Error::EmptyFilterMask {
                len,
                sample_rate: frame_rate,
            });
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            mask,
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
        })
    }

    pub fn kept_bins(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Filters every row of `y` along slow time.
    pub fn apply(&self, y: &Array2<Complex64>) -> Array2<Complex64> {
        let len = self.mask.len();
        assert_eq!(y.ncols(), len, "filter length does not match the slow-time axis");
        let scale = 1.0 / len as f64;
        let mut out = Array2::zeros(y.dim());
        let mut buf = vec![Complex64::new(0.0, 0.0); len];
        for (src, mut dst) in y.rows().into_iter().zip(out.rows_mut()) {
            buf.iter_mut().zip(src.iter()).for_each(|(b, v)| *b = *v);
            self.forward.process(&mut buf);
            for (b, &keep) in buf.iter_mut().zip(&self.mask) {
                if !keep {
                    *b = Complex64::new(0.0, 0.0);
                }
            }
            self.inverse.process(&mut buf);
            dst.iter_mut().zip(&buf).for_each(|(d, b)| *d = b * scale);
        }
        out
    }
}

/// Ybar = (1/L) (F_L^H (Pi o F_L Y^T))^T.
pub fn vital_band_filter(y: &Array2<Complex64>, bands: &VitalBands, frame_rate: f64) -> Result<Array2<Complex64>> {
    Ok(SlowTimeFilter::new(y.ncols(), bands, frame_rate)?.apply(y))
}

/// Proximal map of `t * ||X||_{2,1}`: each row r becomes `max(0, 1 - t/||r||) r`.
pub fn prox_l21(x: &Array2<Complex64>, t: f64) -> Array2<Complex64> {
    let mut out = x.clone();
    prox_l21_inplace(&mut out, t);
    out
}

fn shrink_row(row: &mut [Complex64], t: f64) -> f64 {
    let norm = row.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm <= t {
        row.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        0.0
    } else {
        let s = 1.0 - t / norm;
        row.iter_mut().for_each(|z| *z *= s);
        norm - t
    }
}

fn prox_l21_inplace(x: &mut Array2<Complex64>, t: f64) {
    for mut row in x.rows_mut() {
        if let Some(slice) = row.as_slice_mut() {
            shrink_row(slice, t);
        } else {
            let mut tmp = row.to_vec();
            shrink_row(&mut tmp, t);
            row.iter_mut().zip(tmp).for_each(|(d, s)| *d = s);
        }
    }
}

pub fn l21_norm(x: &Array2<Complex64>) -> f64 {
    x.rows()
        .into_iter()
        .map(|r| r.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
        .sum()
}

/// Row l2 norms.
pub fn row_norms(x: &Array2<Complex64>) -> Vec<f64> {
    x.rows()
        .into_iter()
        .map(|r| r.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
        .collect()
}

/// Range dictionary A with `A(n, m) = exp(j 2 pi f_m n T_f)`.
#[derive(Debug, Clone)]
pub enum Dictionary {
    /// Nyquist-grid Vandermonde atoms m = 0..bins over n = 1..samples.
    Nyquist { samples: usize, bins: usize },
    /// Arbitrary explicit N x M matrix.
    Dense(Array2<Complex64>),
}

impl Dictionary {
    pub fn nyquist(samples: usize, bins: usize) -> Self {
        Dictionary::Nyquist { samples, bins }
    }

    pub fn dims(&self) -> (usize, usize) {
        match self {
            Dictionary::Nyquist { samples, bins } => (*samples, *bins),
            Dictionary::Dense(a) => a.dim(),
        }
    }

    pub fn matrix(&self) -> Array2<Complex64> {
        match self {
            Dictionary::Nyquist { samples, bins } => Array2::from_shape_fn((*samples, *bins), |(i, m)| {
                let n = i + 1;
                let phase = ((m * n) % samples) as f64 / *samples as f64;
                Complex64::from_polar(1.0, 2.0 * PI * phase)
            }),
            Dictionary::Dense(a) => a.clone(),
        }
    }

    /// A^H y.
    pub fn adjoint_apply(&self, y: &Array2<Complex64>) -> Array2<Complex64> {
        match self {
            Dictionary::Nyquist { samples, bins } => {
                let n = *samples as f64;
                RangeTransform::new(*samples, *bins).apply(y).mapv(|z| z * n)
            }
            Dictionary::Dense(a) => a.t().mapv(|z| z.conj()).dot(y),
        }
    }

    pub fn apply(&self, x: &Array2<Complex64>) -> Array2<Complex64> {
        self.matrix().dot(x)
    }

    pub fn gram(&self) -> Array2<Complex64> {
        let a = self.matrix();
        a.t().mapv(|z| z.conj()).dot(&a)
    }

    /// `Some(c)` when A^H A = c I. Exact for the Nyquist dictionary with M <= N.
    pub fn gram_scale(&self) -> Option<f64> {
        match self {
            Dictionary::Nyquist { samples, bins } if bins <= samples => Some(*samples as f64),
            Dictionary::Nyquist { .. } => None,
            Dictionary::Dense(_) => {
                let g = self.gram();
                let c = g[(0, 0)].re;
                let tol = 1e-12 * c.abs().max(1.0);
                let scaled_identity =
                    g.indexed_iter()
                        .all(|((i, j), v)| if i == j { (v - c).norm() <= tol } else { v.norm() <= tol });
                scaled_identity.then_some(c)
            }
        }
    }

    /// Largest eigenvalue of A^H A.
    pub fn gram_spectral_norm(&self) -> f64 {
        if let Some(c) = self.gram_scale() {
            return c;
        }
        let g = self.gram();
        let m = g.nrows();
        let mut v = Array2::from_elem((m, 1), Complex64::new(1.0, 0.0));
        let mut lambda = 0.0;
        for _ in 0..200 {
            let w = g.dot(&v);
            let norm = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            lambda = norm;
            v = w.mapv(|z| z / norm);
        }
        lambda
    }
}

/// min_X ||Ybar - A X||_F^2 + lambda ||X||_{2,1}.
#[derive(Debug, Clone)]
pub struct SparseCodingProblem {
    pub y_bar: Array2<Complex64>,
    pub dictionary: Dictionary,
    pub lambda: f64,
    /// Step is 1/lipschitz.
    pub lipschitz: f64,
    pub max_iter: usize,
    /// Early exit once the relative objective change falls below this.
    pub tolerance: f64,
    /// Rows constrained to zero.
    pub excluded_rows: Vec<usize>,
}

impl SparseCodingProblem {
    /// Default solver settings: lambda 30, L_lip 4.5e6, 1000 iterations,
    /// tolerance 1e-8, DC row excluded.
    pub fn new(y_bar: Array2<Complex64>, dictionary: Dictionary) -> Self {
        Self {
            y_bar,
            dictionary,
            lambda: 30.0,
            lipschitz: 4.5e6,
            max_iter: 1000,
            tolerance: 1e-8,
            excluded_rows: vec![0],
        }
    }

    /// Smallest valid Lipschitz constant, 2 * lambda_max(A^H A).
    pub fn safe_lipschitz(&self) -> f64 {
        2.0 * self.dictionary.gram_spectral_norm()
    }

    fn validate(&self) -> Result<()> {
        let (n, m) = self.dictionary.dims();
        if self.y_bar.nrows() != n {
            return Err(Error::InvalidArgument(format!(
                "Ybar has {} rows but the dictionary has {} samples",
                self.y_bar.nrows(),
                n
            )));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if !(self.lipschitz > 0.0 && self.lipschitz.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "L_lip must be positive, got {}",
                self.lipschitz
            )));
        }
        if let Some(&r) = self.excluded_rows.iter().find(|&&r| r >= m) {
            return Err(Error::InvalidArgument(format!("excluded row {r} is not below M = {m}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FistaOutcome {
    /// Best iterate found, M x L.
    pub x: Array2<Complex64>,
    /// Objective at the starting point followed by one entry per iteration.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    /// True when the relative-change criterion stopped the solver.
    pub converged: bool,
}

impl FistaOutcome {
    pub fn objective(&self) -> f64 {
        self.objective_trace.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Smooth part of the objective and its gradient, specialized by Gram structure.
enum Smooth {
    /// A^H A = c I: rows decouple.
    Scaled { c: f64 },
    Dense {
        a: Array2<Complex64>,
        gram: Array2<Complex64>,
    },
}

fn fro2(a: &Array2<Complex64>) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

pub fn fista_l21(problem: &SparseCodingProblem) -> Result<FistaOutcome> {
    let (_, m) = problem.dictionary.dims();
    let x0 = Array2::zeros((m, problem.y_bar.ncols()));
    fista_l21_from(problem, x0)
}

/// FISTA started from `x0`.
pub fn fista_l21_from(problem: &SparseCodingProblem, x0: Array2<Complex64>) -> Result<FistaOutcome> {
    problem.validate()?;
    let (_, m) = problem.dictionary.dims();
    let l = problem.y_bar.ncols();
    if x0.dim() != (m, l) {
        return Err(Error::InvalidArgument(format!(
            "starting point is {:?}, expected ({m}, {l})",
            x0.dim()
        )));
    }
    let safe = problem.safe_lipschitz();
    if problem.lipschitz < safe {
        warn!(
            "L_lip = {} is below the safe bound 2 lambda_max(A^H A) = {}; FISTA may diverge",
            problem.lipschitz, safe
        );
    }

    let corr = problem.dictionary.adjoint_apply(&problem.y_bar);
    let y_norm2 = fro2(&problem.y_bar);
    let smooth = match problem.dictionary.gram_scale() {
        Some(c) => Smooth::Scaled { c },
        None => Smooth::Dense {
            a: problem.dictionary.matrix(),
            gram: problem.dictionary.gram(),
        },
    };
    let step = 1.0 / problem.lipschitz;
    let thresh = problem.lambda * step;
    let mut excluded = vec![false; m];
    for &r in &problem.excluded_rows {
        excluded[r] = true;
    }

    let corr_norms = row_norms(&corr);
    let start_norms = row_norms(&x0);
    // With A^H A = c I a zero row whose correlation norm is at most lambda/2
    // stays exactly zero at every iterate; only the other rows are updated.
    let active: Vec<usize> = match smooth {
        Smooth::Scaled { .. } => (0..m)
            .filter(|&r| !excluded[r] && (start_norms[r] > 0.0 || corr_norms[r] > problem.lambda / 2.0))
            .collect(),
        Smooth::Dense { .. } => (0..m).filter(|&r| !excluded[r]).collect(),
    };

    let objective = |x: &Array2<Complex64>| -> f64 {
        let fit = match &smooth {
            Smooth::Scaled { c } => {
                let mut cross = 0.0;
                let mut sq = 0.0;
                for &r in &active {
                    for (xv, cv) in x.row(r).iter().zip(corr.row(r)) {
                        cross += (xv.conj() * cv).re;
                        sq += xv.norm_sqr();
                    }
                }
                y_norm2 - 2.0 * cross + c * sq
            }
            Smooth::Dense { a, .. } => fro2(&(&problem.y_bar - &a.dot(x))),
        };
        fit + problem.lambda * l21_norm(x)
    };

    let mut x = x0;
    for (r, ex) in excluded.iter().enumerate() {
        if *ex {
            x.row_mut(r).fill(Complex64::new(0.0, 0.0));
        }
    }
    let mut z = x.clone();
    let mut t = 1.0f64;
    let mut prev_obj = objective(&x);
    let mut trace = vec![prev_obj];
    let mut best = x.clone();
    let mut best_obj = prev_obj;
    let mut converged = false;
    let mut iterations = 0;

    let mut x_next = Array2::<Complex64>::zeros((m, l));
    for k in 1..=problem.max_iter {
        iterations = k;
        // x_next = prox(z - step * 2 (A^H A z - A^H y), thresh)
        match &smooth {
            Smooth::Scaled { c } => {
                let keep = 1.0 - 2.0 * step * c;
                for &r in &active {
                    let mut row = x_next.row_mut(r);
                    let slice = row.as_slice_mut().expect("row-major");
                    for ((d, zv), cv) in slice.iter_mut().zip(z.row(r)).zip(corr.row(r)) {
                        *d = zv * keep + cv * (2.0 * step);
                    }
                    shrink_row(slice, thresh);
                }
            }
            Smooth::Dense { gram, .. } => {
                let grad = (gram.dot(&z) - &corr).mapv(|g| g * 2.0);
                x_next.assign(&(&z - &grad.mapv(|g| g * step)));
                prox_l21_inplace(&mut x_next, thresh);
                for (r, ex) in excluded.iter().enumerate() {
                    if *ex {
                        x_next.row_mut(r).fill(Complex64::new(0.0, 0.0));
                    }
                }
            }
        }
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let beta = (t - 1.0) / t_next;
        for &r in &active {
            let mut zr = z.row_mut(r);
            for ((zv, xn), xo) in zr.iter_mut().zip(x_next.row(r)).zip(x.row(r)) {
                *zv = xn + (xn - xo) * beta;
            }
        }
        std::mem::swap(&mut x, &mut x_next);
        t = t_next;

        let obj = objective(&x);
        trace.push(obj);
        if !obj.is_finite() {
            return Err(Error::Divergence {
                iteration: k,
                objective: obj,
                lipschitz: problem.lipschitz,
                safe_bound: safe,
            });
        }
        if obj < best_obj {
            best_obj = obj;
            best.assign(&x);
        }
        let rel = (obj - prev_obj).abs() / prev_obj.abs().max(f64::MIN_POSITIVE);
        prev_obj = obj;
        if rel < problem.tolerance {
            converged = true;
            break;
        }
    }
    Ok(FistaOutcome {
        x: best,
        objective_trace: trace,
        iterations,
        converged,
    })
}

/// Occupied range bins with their distances and scores.
#[derive(Debug, Clone, PartialEq)]
pub struct Support {
    /// Ascending, never containing bin 0.
    pub bins: Vec<usize>,
    pub distances: Vec<f64>,
    /// Score of each bin; the l2 row norm for JSR.
    pub row_energies: Vec<f64>,
}

impl Support {
    pub fn from_bins(bins: &[usize], grid: &RangeGrid, scores: &[f64]) -> Self {
        let mut pairs: Vec<(usize, f64)> = bins.iter().copied().zip(scores.iter().copied()).collect();
        pairs.sort_by_key(|p| p.0);
        Self {
            bins: pairs.iter().map(|p| p.0).collect(),
            distances: pairs.iter().map(|p| grid.distance(p.0)).collect(),
            row_energies: pairs.iter().map(|p| p.1).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }
}

/// Bins m >= 1 whose row norm reaches `tau` times the largest such norm.
pub fn extract_support(x: &Array2<Complex64>, tau: f64, grid: &RangeGrid) -> Result<Support> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidArgument(format!("tau must lie in (0, 1), got {tau}")));
    }
    let norms = row_norms(x);
    let max = norms.iter().skip(1).copied().fold(0.0, f64::max);
    if max == 0.0 {
        return Err(Error::EmptySupport);
    }
    let bins: Vec<usize> = (1..norms.len()).filter(|&m| norms[m] >= tau * max).collect();
    let scores: Vec<f64> = bins.iter().map(|&m| norms[m]).collect();
    Ok(Support::from_bins(&bins, grid, &scores))
}

/// Parameters of the JSR localizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JsrSettings {
    pub bands: VitalBands,
    pub lambda: f64,
    pub lipschitz: f64,
    pub max_iter: usize,
    pub tolerance: f64,
    pub tau: f64,
}

impl Default for JsrSettings {
    fn default() -> Self {
        Self {
            bands: VitalBands::default(),
            lambda: 30.0,
            lipschitz: 4.5e6,
            max_iter: 1000,
            tolerance: 1e-8,
            tau: 0.5,
        }
    }
}

/// Filters Y, solves the JSR problem and thresholds the row norms.
pub fn localize_jsr(y: &Measurement, grid: &RangeGrid, settings: &JsrSettings) -> Result<(Support, FistaOutcome)> {
    let y_bar = vital_band_filter(&y.data, &settings.bands, y.config.frame_rate())?;
    let problem = SparseCodingProblem {
        y_bar,
        dictionary: Dictionary::nyquist(y.samples(), y.config.range_bins()),
        lambda: settings.lambda,
        lipschitz: settings.lipschitz,
        max_iter: settings.max_iter,
        tolerance: settings.tolerance,
        excluded_rows: vec![0],
    };
    let outcome = fista_l21(&problem)?;
    let support = extract_support(&outcome.x, settings.tau, grid)?;
    Ok((support, outcome))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LocalizerKind {
    Jsr,
    MaxAveragePower,
    Std,
}

impl LocalizerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            LocalizerKind::Jsr => "jsr",
            LocalizerKind::MaxAveragePower => "max_avg_power",
            LocalizerKind::Std => "std",
        }
    }
}

/// Statistic ranked by the std localizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum StdStatistic {
    /// Standard deviation of the complex samples, sqrt(mean |z - mean z|^2).
    #[default]
    Complex,
    /// Standard deviation of the unwrapped phase.
    Phase,
    /// Standard deviation of |z|.
    Magnitude,
}

impl StdStatistic {
    pub fn as_str(&self) -> &'static str {
        match self {
            StdStatistic::Complex => "complex_std",
            StdStatistic::Phase => "phase_std",
            StdStatistic::Magnitude => "magnitude_std",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Localization {
    pub method: LocalizerKind,
    pub support: Support,
    /// Name of the ranked statistic.
    pub statistic: &'static str,
    /// Selection is indistinguishable from the noise floor.
    pub low_confidence: bool,
}

fn std_dev(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    (values.map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

fn top_k(scores: &[f64], top: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (1..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    order.truncate(top);
    order
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    let n = values.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn ranked(
    map: &RangeSlowTimeMap,
    scores: Vec<f64>,
    top: usize,
    method: LocalizerKind,
    statistic: &'static str,
) -> Result<Localization> {
    if top == 0 || top >= scores.len() {
        return Err(Error::InvalidArgument(format!(
            "top_k must lie in 1..{}, got {top}",
            scores.len()
        )));
    }
    let bins = top_k(&scores, top);
    let floor = median(&mut scores[1..].to_vec());
    let weakest = bins.iter().map(|&b| scores[b]).fold(f64::INFINITY, f64::min);
    let low_confidence = weakest.partial_cmp(&(3.0 * floor)) != Some(std::cmp::Ordering::Greater);
    let picked: Vec<f64> = bins.iter().map(|&b| scores[b]).collect();
    let spacing = map.distances.get(1).copied().unwrap_or(0.0);
    let mut pairs: Vec<(usize, f64)> = bins.into_iter().zip(picked).collect();
    pairs.sort_by_key(|p| p.0);
    Ok(Localization {
        method,
        support: Support {
            bins: pairs.iter().map(|p| p.0).collect(),
            distances: pairs.iter().map(|p| spacing * p.0 as f64).collect(),
            row_energies: pairs.iter().map(|p| p.1).collect(),
        },
        statistic,
        low_confidence,
    })
}

/// Top-k bins (DC excluded) by mean power across slow time.
pub fn localize_max_avg_power(map: &RangeSlowTimeMap, top: usize) -> Result<Localization> {
    let frames = map.data.ncols() as f64;
    let scores: Vec<f64> = map
        .data
        .rows()
        .into_iter()
        .map(|r| r.iter().map(|z| z.norm_sqr()).sum::<f64>() / frames)
        .collect();
    ranked(map, scores, top, LocalizerKind::MaxAveragePower, "mean_power")
}

/// Top-k bins (DC excluded) by slow-time standard deviation.
pub fn localize_std(map: &RangeSlowTimeMap, top: usize, statistic: StdStatistic) -> Result<Localization> {
    let scores: Vec<f64> = map
        .data
        .rows()
        .into_iter()
        .map(|r| match statistic {
            StdStatistic::Complex => {
                let n = r.len() as f64;
                let mean: Complex64 = r.iter().sum::<Complex64>() / n;
                (r.iter().map(|z| (z - mean).norm_sqr()).sum::<f64>() / n).sqrt()
            }
            StdStatistic::Phase => {
                let (phase, _) = extract_row_phase(r.iter().copied());
                std_dev(phase.iter().copied())
            }
            StdStatistic::Magnitude => std_dev(r.iter().map(|z| z.norm())),
        })
        .collect();
    ranked(map, scores, top, LocalizerKind::Std, statistic.as_str())
}
