//! Beat-signal synthesis for multi-object scenes and chirp averaging.
//!
//! Fast-time samples are indexed n = 1..N. Object m contributes
//! `x_m exp(j (2 pi m n / N + psi_m[l]))` to frame l, with
//! `psi_m[l] = (4 pi / lambda_max) (d_m + v_m[l])`. The analysis side uses
//! the matching DFT kernel `exp(-j 2 pi m n / N)`; see [`crate::doppler::DopplerKernel`].
//!
//! Noise is drawn per frame from a ChaCha8 stream selected by the frame
//! index, so a frame's noise depends only on `(seed, frame)` and never on
//! how frames are grouped into windows.

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::config::RadarConfig;
use crate::error::{Error, Result};
use crate::scene::Scene;

/// `exp(j 2 pi bin n / len)` for n = 1..=len, reduced modulo `len` before the
/// trigonometric call.
pub fn fast_time_atom(bin: usize, len: usize) -> Vec<Complex64> {
    (1..=len)
        .map(|n| {
            let k = (bin * n) % len;
            Complex64::from_polar(1.0, 2.0 * PI * k as f64 / len as f64)
        })
        .collect()
}

/// Raw per-chirp samples, N x G x frames.
#[derive(Debug, Clone, PartialEq)]
pub struct RawCube {
    samples: usize,
    chirps: usize,
    frames: usize,
    /// Frame-major, then chirp, then fast-time sample.
    data: Vec<Complex64>,
}

impl RawCube {
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.samples, self.chirps, self.frames)
    }

    pub fn get(&self, n: usize, g: usize, frame: usize) -> Complex64 {
        self.data[(frame * self.chirps + g) * self.samples + n]
    }

    pub fn chirp(&self, g: usize, frame: usize) -> &[Complex64] {
        let start = (frame * self.chirps + g) * self.samples;
        &self.data[start..start + self.samples]
    }
}

/// The N x L matrix Y of one monitoring window.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    /// Rows are fast-time samples, columns are frames.
    pub data: Array2<Complex64>,
    pub window_start: usize,
    pub config: RadarConfig,
}

impl Measurement {
    pub fn samples(&self) -> usize {
        self.data.nrows()
    }

    pub fn frames(&self) -> usize {
        self.data.ncols()
    }

    /// Keeps only the in-phase channel, Re(Y).
    pub fn in_phase(&self) -> Measurement {
        Measurement {
            data: self.data.mapv(|z| Complex64::new(z.re, 0.0)),
            window_start: self.window_start,
            config: self.config,
        }
    }
}

/// Deterministic frame generator for one (scene, config, SNR, seed).
#[derive(Debug, Clone)]
pub struct FrameSynthesizer {
    config: RadarConfig,
    noise_std: f64,
    seed: u64,
    /// Per object: amplitude, grid distance, fast-time atom.
    atoms: Vec<Vec<Complex64>>,
    scene: Scene,
}

impl FrameSynthesizer {
    /// `snr_db` sets the per-element complex noise variance `10^(-snr_db/10)`;
    /// `f64::INFINITY` disables noise.
    pub fn new(scene: &Scene, config: &RadarConfig, snr_db: f64, seed: u64) -> Result<Self> {
        config.validate()?;
        let n = config.samples_per_chirp;
        let m = config.range_bins();
        for o in &scene.objects {
            if o.bin == 0 || o.bin >= m {
                return Err(Error::Scene(format!(
                    "object '{}' sits at bin {} outside 1..{}",
                    o.name, o.bin, m
                )));
            }
            o.vibration.validate(config.frame_rate(), None)?;
        }
        if snr_db.is_nan() {
            return Err(Error::InvalidArgument("SNR must not be NaN".into()));
        }
        let noise_std = RadarConfig::noise_variance(snr_db).sqrt();
        let atoms = scene.objects.iter().map(|o| fast_time_atom(o.bin, n)).collect();
        Ok(Self {
            config: *config,
            noise_std,
            seed,
            atoms,
            scene: scene.clone(),
        })
    }

    pub fn config(&self) -> &RadarConfig {
        &self.config
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    /// Checks that every trace covers `frames` frames.
    pub fn check_coverage(&self, frames: usize) -> Result<()> {
        for o in &self.scene.objects {
            o.vibration.validate(self.config.frame_rate(), Some(frames))?;
        }
        Ok(())
    }

    /// Slow-time phase psi_m[l] of object `index`.
    pub fn phase(&self, index: usize, frame: usize) -> f64 {
        let o = &self.scene.objects[index];
        let v = o.vibration.displacement(frame, self.config.frame_duration);
        4.0 * PI / self.config.lambda_max * (o.distance + v)
    }

    /// Noise-free fast-time column of frame `frame`.
    pub fn clean_frame(&self, frame: usize) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.config.samples_per_chirp];
        for (i, (o, atom)) in self.scene.objects.iter().zip(&self.atoms).enumerate() {
            let phasor = Complex64::from_polar(o.amplitude, self.phase(i, frame));
            for (y, a) in out.iter_mut().zip(atom) {
                *y += phasor * a;
            }
        }
        out
    }

    fn frame_rng(&self, frame: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(frame as u64);
        rng
    }

    fn add_noise(rng: &mut ChaCha8Rng, std: f64, out: &mut [Complex64]) {
        // each component carries half of the complex variance
        let s = std * std::f64::consts::FRAC_1_SQRT_2;
        for y in out.iter_mut() {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            *y += Complex64::new(s * re, s * im);
        }
    }

    /// All G chirps of a frame, chirp-major, each with independent noise.
    pub fn raw_frame(&self, frame: usize) -> Vec<Complex64> {
        let clean = self.clean_frame(frame);
        let g = self.config.chirps_per_frame;
        let mut out = Vec::with_capacity(g * clean.len());
        let mut rng = self.frame_rng(frame);
        for _ in 0..g {
            let start = out.len();
            out.extend_from_slice(&clean);
            if self.noise_std > 0.0 {
                Self::add_noise(&mut rng, self.noise_std, &mut out[start..]);
            }
        }
        out
    }

    /// A frame already averaged over its G chirps.
    ///
    /// The mean of G independent CN(0, s^2) draws is CN(0, s^2/G), so the
    /// averaged noise is drawn directly at that variance. For G = 1 the
    /// result equals [`raw_frame`](Self::raw_frame) sample for sample.
    pub fn averaged_frame(&self, frame: usize) -> Vec<Complex64> {
        let mut out = self.clean_frame(frame);
        if self.noise_std > 0.0 {
            let mut rng = self.frame_rng(frame);
            let std = self.noise_std / (self.config.chirps_per_frame as f64).sqrt();
            Self::add_noise(&mut rng, std, &mut out);
        }
        out
    }

    /// Y for frames `[window_start, window_start + frames)`, chirp-averaged.
    pub fn measurement(&self, window_start: usize, frames: usize) -> Result<Measurement> {
        self.check_coverage(window_start + frames)?;
        let n = self.config.samples_per_chirp;
        let mut data = Array2::zeros((n, frames));
        for l in 0..frames {
            let col = self.averaged_frame(window_start + l);
            for (i, v) in col.into_iter().enumerate() {
                data[(i, l)] = v;
            }
        }
        Ok(Measurement {
            data,
            window_start,
            config: self.config,
        })
    }
}

/// Synthesizes every chirp of `total_frames` frames.
pub fn synth_raw_cube(
    scene: &Scene,
    config: &RadarConfig,
    total_frames: usize,
    snr_db: f64,
    seed: u64,
) -> Result<RawCube> {
    let synth = FrameSynthesizer::new(scene, config, snr_db, seed)?;
    synth.check_coverage(total_frames)?;
    let n = config.samples_per_chirp;
    let g = config.chirps_per_frame;
    let mut data = Vec::with_capacity(n * g * total_frames);
    for frame in 0..total_frames {
        data.extend(synth.raw_frame(frame));
    }
    Ok(RawCube {
        samples: n,
        chirps: g,
        frames: total_frames,
        data,
    })
}

/// Averages the G chirps of each frame in `[window_start, window_start + L)`.
pub fn preprocess_average(cube: &RawCube, window_start: usize, config: &RadarConfig) -> Result<Measurement> {
    config.validate()?;
    let frames = config.window_frames();
    let (n, g, total) = cube.dims();
    if n != config.samples_per_chirp || g != config.chirps_per_frame {
        return Err(Error::InvalidArgument(format!(
            "cube is {n} x {g} but config expects {} x {}",
            config.samples_per_chirp, config.chirps_per_frame
        )));
    }
    let end = window_start + frames;
    if end > total {
        return Err(Error::WindowOutOfBounds {
            start: window_start,
            end,
            available: total,
        });
    }
    let scale = 1.0 / g as f64;
    let mut data = Array2::zeros((n, frames));
    for l in 0..frames {
        for c in 0..g {
            for (i, v) in cube.chirp(c, window_start + l).iter().enumerate() {
                data[(i, l)] += v;
            }
        }
        data.column_mut(l).mapv_inplace(|z| z * scale);
    }
    Ok(Measurement {
        data,
        window_start,
        config: *config,
    })
}
