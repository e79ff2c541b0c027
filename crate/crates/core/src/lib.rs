//! Multi-person vital-sign monitoring with FMCW radar.
//!
//! Pipeline: synthesize frames, localize humans with joint sparse recovery,
//! recover their Doppler rows, unwrap the phase and estimate respiration and
//! heart rate with a cosine dictionary.

pub mod config;
pub mod doppler;
pub mod error;
pub mod harness;
pub mod localization;
pub mod plot;
pub mod report;
pub mod scenario;
pub mod scene;
pub mod synthesis;
pub mod vitals;

pub use config::{build_range_grid, Band, RadarConfig, RangeGrid, VitalBands};
pub use error::{Error, Result};
pub use localization::{localize_jsr, JsrSettings, Support};
pub use scene::{reference_layout, snap_scene, ObjectKind, ObjectRequest, Scene, VibrationSpec};
pub use synthesis::{FrameSynthesizer, Measurement};
pub use vitals::{Method, VitalEstimator};
