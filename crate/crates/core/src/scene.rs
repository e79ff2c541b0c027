//! Objects in the radar field of view and their vibration models.

use std::f64::consts::PI;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::config::RangeGrid;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectKind {
    Human,
    StaticClutter,
    VibratingClutter,
}

impl ObjectKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ObjectKind::Human => "human",
            ObjectKind::StaticClutter => "static_clutter",
            ObjectKind::VibratingClutter => "vibrating_clutter",
        }
    }
}

/// One cosine component `amplitude * cos(2 pi frequency t)`, amplitude in metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tone {
    pub amplitude: f64,
    pub frequency: f64,
}

impl Tone {
    pub const fn new(amplitude: f64, frequency: f64) -> Self {
        Self { amplitude, frequency }
    }
}

/// Designated ground-truth respiration and heart rates (Hz).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VitalRates {
    pub respiration_hz: f64,
    pub heart_hz: f64,
}

/// Displacement samples recorded at a fixed rate, in metres.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub samples: Vec<f64>,
    pub sample_rate: f64,
    /// File the samples were read from, kept for serialization.
    pub source: Option<PathBuf>,
}

/// Radial vibration v[l] of an object.
#[derive(Debug, Clone, PartialEq)]
pub enum VibrationSpec {
    Static,
    Tones {
        tones: Vec<Tone>,
        rates: Option<VitalRates>,
    },
    Trace(Trace),
}

impl VibrationSpec {
    /// A respiration tone plus a heartbeat tone, with both rates designated as ground truth.
    pub fn two_tone(resp_amp: f64, resp_hz: f64, heart_amp: f64, heart_hz: f64) -> Self {
        VibrationSpec::Tones {
            tones: vec![Tone::new(resp_amp, resp_hz), Tone::new(heart_amp, heart_hz)],
            rates: Some(VitalRates {
                respiration_hz: resp_hz,
                heart_hz,
            }),
        }
    }

    /// Displacement at slow-time frame `frame`, sampled at `frame * frame_duration`.
    pub fn displacement(&self, frame: usize, frame_duration: f64) -> f64 {
        match self {
            VibrationSpec::Static => 0.0,
            VibrationSpec::Tones { tones, .. } => {
                let t = frame as f64 * frame_duration;
                tones
                    .iter()
                    .map(|tone| tone.amplitude * (2.0 * PI * tone.frequency * t).cos())
                    .sum()
            }
            VibrationSpec::Trace(trace) => trace.samples[frame],
        }
    }

    pub fn designated_rates(&self) -> Option<VitalRates> {
        match self {
            VibrationSpec::Tones { rates, .. } => *rates,
            _ => None,
        }
    }

    /// Peak |v| for tone specs (sum of amplitudes), max |sample| for traces.
    pub fn peak_displacement(&self) -> f64 {
        match self {
            VibrationSpec::Static => 0.0,
            VibrationSpec::Tones { tones, .. } => tones.iter().map(|t| t.amplitude.abs()).sum(),
            VibrationSpec::Trace(trace) => trace.samples.iter().fold(0.0, |m, s| m.max(s.abs())),
        }
    }

    /// Checks tone frequencies against f_s/2 and trace coverage of `frames` samples.
    pub fn validate(&self, frame_rate: f64, frames: Option<usize>) -> Result<()> {
        match self {
            VibrationSpec::Static => Ok(()),
            VibrationSpec::Tones { tones, rates } => {
                for tone in tones {
                    if !(tone.frequency >= 0.0 && tone.frequency < frame_rate / 2.0) || !tone.amplitude.is_finite() {
                        return Err(Error::Scene(format!(
                            "tone at {} Hz must lie in [0, f_s/2 = {}) Hz",
                            tone.frequency,
                            frame_rate / 2.0
                        )));
                    }
                }
                if let Some(r) = rates {
                    for f in [r.respiration_hz, r.heart_hz] {
                        if !(f >= 0.0 && f < frame_rate / 2.0) {
                            return Err(Error::Scene(format!("designated rate {f} Hz must lie in [0, f_s/2)")));
                        }
                    }
                }
                Ok(())
            }
            VibrationSpec::Trace(trace) => {
                if (trace.sample_rate - frame_rate).abs() > 1e-9 * frame_rate {
                    return Err(Error::Scene(format!(
                        "trace sampled at {} Hz but the frame rate is {} Hz",
                        trace.sample_rate, frame_rate
                    )));
                }
                if let Some(n) = frames {
                    if trace.samples.len() < n {
                        return Err(Error::Scene(format!(
                            "trace has {} samples but {} frames are required",
                            trace.samples.len(),
                            n
                        )));
                    }
                }
                if trace.samples.iter().any(|s| !s.is_finite()) {
                    return Err(Error::Scene("trace contains non-finite samples".into()));
                }
                Ok(())
            }
        }
    }
}

/// An object as requested, before grid snapping.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectRequest {
    pub name: String,
    pub kind: ObjectKind,
    pub amplitude: f64,
    pub distance: f64,
    pub vibration: VibrationSpec,
}

impl ObjectRequest {
    pub fn new(
        name: impl Into<String>,
        kind: ObjectKind,
        amplitude: f64,
        distance: f64,
        vibration: VibrationSpec,
    ) -> Self {
        Self {
            name: name.into(),
            kind,
            amplitude,
            distance,
            vibration,
        }
    }
}

/// An object placed on the range grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectSpec {
    pub name: String,
    pub kind: ObjectKind,
    /// Reflection amplitude x_m.
    pub amplitude: f64,
    pub requested_distance: f64,
    /// Distance of the bin the object was snapped to.
    pub distance: f64,
    pub bin: usize,
    pub vibration: VibrationSpec,
}

impl ObjectSpec {
    pub fn snap_delta(&self) -> f64 {
        self.distance - self.requested_distance
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scene {
    pub objects: Vec<ObjectSpec>,
}

impl Scene {
    pub fn humans(&self) -> impl Iterator<Item = &ObjectSpec> {
        self.objects.iter().filter(|o| o.kind == ObjectKind::Human)
    }

    pub fn human_bins(&self) -> Vec<usize> {
        let mut bins: Vec<usize> = self.humans().map(|o| o.bin).collect();
        bins.sort_unstable();
        bins
    }

    pub fn object_at_bin(&self, bin: usize) -> Option<&ObjectSpec> {
        self.objects.iter().find(|o| o.bin == bin)
    }

    pub fn object(&self, name: &str) -> Option<&ObjectSpec> {
        self.objects.iter().find(|o| o.name == name)
    }

    pub fn object_mut(&mut self, name: &str) -> Option<&mut ObjectSpec> {
        self.objects.iter_mut().find(|o| o.name == name)
    }

    /// Back to the pre-snap form (requested distances).
    pub fn requests(&self) -> Vec<ObjectRequest> {
        self.objects
            .iter()
            .map(|o| ObjectRequest {
                name: o.name.clone(),
                kind: o.kind,
                amplitude: o.amplitude,
                distance: o.requested_distance,
                vibration: o.vibration.clone(),
            })
            .collect()
    }
}

/// Snaps each requested distance to the nearest range bin.
///
/// Bin 0 (DC) is not a valid location and two objects may not share a bin.
pub fn snap_scene(objects: &[ObjectRequest], grid: &RangeGrid) -> Result<Scene> {
    let mut placed: Vec<ObjectSpec> = Vec::with_capacity(objects.len());
    for req in objects {
        if !(req.distance > 0.0 && req.distance <= grid.max_distance) {
            return Err(Error::Scene(format!(
                "object '{}' at {} m is outside (0, d_max = {:.4}] m",
                req.name, req.distance, grid.max_distance
            )));
        }
        if !(req.amplitude.is_finite() && req.amplitude >= 0.0) {
            return Err(Error::Scene(format!(
                "object '{}' has invalid amplitude {}",
                req.name, req.amplitude
            )));
        }
        let bin = (req.distance / grid.spacing).round() as usize;
        if bin == 0 {
            return Err(Error::Scene(format!(
                "object '{}' at {} m snaps to the DC bin",
                req.name, req.distance
            )));
        }
        if let Some(other) = placed.iter().find(|o| o.bin == bin) {
            return Err(Error::Scene(format!(
                "objects '{}' and '{}' both snap to range bin {}",
                other.name, req.name, bin
            )));
        }
        placed.push(ObjectSpec {
            name: req.name.clone(),
            kind: req.kind,
            amplitude: req.amplitude,
            requested_distance: req.distance,
            distance: grid.distance(bin),
            bin,
            vibration: req.vibration.clone(),
        });
    }
    Ok(Scene { objects: placed })
}

/// Displacement amplitudes of the reference humans (m).
pub const HUMAN_RESPIRATION_AMPLITUDE: f64 = 1.5e-3;
pub const HUMAN_HEARTBEAT_AMPLITUDE: f64 = 2e-4;

/// Default respiration/heartbeat tones for the three humans of the reference layout.
pub const REFERENCE_HUMAN_RATES: [(f64, f64); 3] = [(0.2, 1.05), (0.25, 1.2), (0.3, 1.4)];

/// The seven-object layout: two fans, two static reflectors and three humans.
///
/// Fans vibrate at 40 Hz with 0.1 m amplitude. Humans carry a 1.5 mm
/// respiration tone and a 0.2 mm heartbeat tone at the rates in
/// [`REFERENCE_HUMAN_RATES`].
pub fn reference_layout() -> Vec<ObjectRequest> {
    let fan = || VibrationSpec::Tones {
        tones: vec![Tone::new(0.1, 40.0)],
        rates: None,
    };
    let human = |i: usize| {
        let (r, h) = REFERENCE_HUMAN_RATES[i];
        VibrationSpec::two_tone(HUMAN_RESPIRATION_AMPLITUDE, r, HUMAN_HEARTBEAT_AMPLITUDE, h)
    };
    use ObjectKind::*;
    vec![
        ObjectRequest::new("fan1", VibratingClutter, 0.7, 1.5, fan()),
        ObjectRequest::new("human1", Human, 0.5, 2.0, human(0)),
        ObjectRequest::new("static1", StaticClutter, 1.0, 2.3, VibrationSpec::Static),
        ObjectRequest::new("human2", Human, 0.45, 2.6, human(1)),
        ObjectRequest::new("static2", StaticClutter, 0.9, 2.9, VibrationSpec::Static),
        ObjectRequest::new("fan2", VibratingClutter, 0.6, 3.1, fan()),
        ObjectRequest::new("human3", Human, 0.4, 3.5, human(2)),
    ]
}
