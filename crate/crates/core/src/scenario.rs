//! Scenario files: radar parameters, objects, monitoring settings, an
//! optional subject cohort and SNR sweep, all in one TOML document.
//!
//! Missing radar and monitoring keys take the default operating point.
//! Trace vibrations reference a CSV with one displacement column and an
//! optional `sample_rate_hz,<value>` first line.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{build_range_grid, Band, RadarConfig, VitalBands};
use crate::error::{Error, Result};
use crate::harness::{synthetic_cohort, Channel, Cohort, LocalizationPolicy, MonitoringSettings, Subject, SupportMode};
use crate::localization::JsrSettings;
use crate::scene::{snap_scene, ObjectKind, ObjectRequest, Scene, Tone, Trace, VibrationSpec, VitalRates};
use crate::vitals::Method;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RadarDto {
    #[serde(default = "d::lambda_max")]
    lambda_max: f64,
    #[serde(rename = "T_c", default = "d::t_c")]
    t_c: f64,
    #[serde(default = "d::f_adc")]
    f_adc: f64,
    #[serde(rename = "S", default = "d::s")]
    s: f64,
    #[serde(rename = "T_s", default = "d::t_s")]
    t_s: f64,
    #[serde(rename = "N", default = "d::n")]
    n: usize,
    #[serde(rename = "G", default = "d::g")]
    g: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MonitoringDto {
    #[serde(rename = "T_win", default = "d::t_win")]
    t_win: f64,
    #[serde(rename = "T_int", default = "d::t_int")]
    t_int: f64,
    #[serde(default = "d::duration")]
    duration: f64,
    #[serde(default)]
    snr_db: f64,
    #[serde(default = "d::seed")]
    seed: u64,
    #[serde(default = "d::methods")]
    methods: Vec<String>,
    #[serde(rename = "B_R", default = "d::b_r")]
    b_r: [f64; 2],
    #[serde(rename = "B_H", default = "d::b_h")]
    b_h: [f64; 2],
    #[serde(default = "d::lambda")]
    lambda: f64,
    #[serde(rename = "L_lip", default = "d::l_lip")]
    l_lip: f64,
    #[serde(rename = "I_max", default = "d::i_max")]
    i_max: usize,
    #[serde(default = "d::tolerance")]
    tolerance: f64,
    #[serde(default = "d::tau")]
    tau: f64,
    #[serde(default)]
    support: SupportMode,
    #[serde(default)]
    policy: LocalizationPolicy,
    #[serde(default)]
    channel: Channel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    targets: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum VibrationDto {
    Static,
    Tones {
        /// `[amplitude_m, frequency_hz]` pairs.
        tones: Vec<[f64; 2]>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rates_hz: Option<[f64; 2]>,
    },
    Trace {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        path: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        samples: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sample_rate_hz: Option<f64>,
        #[serde(default = "d::scale")]
        scale: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObjectDto {
    name: String,
    kind: ObjectKind,
    /// Reflection amplitude.
    x: f64,
    /// Requested distance (m).
    d: f64,
    #[serde(default = "d::static_vibration")]
    vibration: VibrationDto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SubjectDto {
    name: String,
    vibration: VibrationDto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SyntheticDto {
    count: usize,
    seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CohortDto {
    target: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    subjects: Vec<SubjectDto>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    synthetic: Option<SyntheticDto>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepDto {
    #[serde(default = "d::sweep_snr")]
    snr_db: Vec<f64>,
    #[serde(default)]
    seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDto {
    #[serde(default = "d::radar")]
    radar: RadarDto,
    #[serde(default = "d::monitoring")]
    monitoring: MonitoringDto,
    #[serde(default)]
    objects: Vec<ObjectDto>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cohort: Option<CohortDto>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sweep: Option<SweepDto>,
}

/// Serde defaults.
mod d {
    use super::*;

    fn radar_default() -> RadarConfig {
        RadarConfig::default()
    }
    pub fn lambda_max() -> f64 {
        radar_default().lambda_max
    }
    pub fn t_c() -> f64 {
        radar_default().chirp_duration
    }
    pub fn f_adc() -> f64 {
        radar_default().f_adc
    }
    pub fn s() -> f64 {
        radar_default().sweep_rate
    }
    pub fn t_s() -> f64 {
        radar_default().frame_duration
    }
    pub fn n() -> usize {
        radar_default().samples_per_chirp
    }
    pub fn g() -> usize {
        radar_default().chirps_per_frame
    }
    pub fn t_win() -> f64 {
        radar_default().window_duration
    }
    pub fn t_int() -> f64 {
        radar_default().estimate_interval
    }
    pub fn duration() -> f64 {
        120.0
    }
    pub fn seed() -> u64 {
        1
    }
    pub fn methods() -> Vec<String> {
        Method::ALL.iter().map(|m| m.as_str().to_string()).collect()
    }
    pub fn b_r() -> [f64; 2] {
        [Band::RESPIRATION.lo, Band::RESPIRATION.hi]
    }
    pub fn b_h() -> [f64; 2] {
        [Band::HEARTBEAT.lo, Band::HEARTBEAT.hi]
    }
    pub fn lambda() -> f64 {
        JsrSettings::default().lambda
    }
    pub fn l_lip() -> f64 {
        JsrSettings::default().lipschitz
    }
    pub fn i_max() -> usize {
        JsrSettings::default().max_iter
    }
    pub fn tolerance() -> f64 {
        JsrSettings::default().tolerance
    }
    pub fn tau() -> f64 {
        JsrSettings::default().tau
    }
    pub fn scale() -> f64 {
        1.0
    }
    pub fn static_vibration() -> VibrationDto {
        VibrationDto::Static
    }
    pub fn sweep_snr() -> Vec<f64> {
        vec![-2.0, -1.0, 0.0, 1.0, 2.0]
    }
    pub fn radar() -> RadarDto {
        toml::from_str("").expect("all radar keys have defaults")
    }
    pub fn monitoring() -> MonitoringDto {
        toml::from_str("").expect("all monitoring keys have defaults")
    }
}

/// SNR values and seeds of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPlan {
    pub snr_db: Vec<f64>,
    pub seeds: Vec<u64>,
}

/// A parsed and validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub radar: RadarConfig,
    pub scene: Scene,
    pub monitoring: MonitoringSettings,
    pub snr_db: f64,
    pub seed: u64,
    pub cohort: Option<Cohort>,
    pub sweep: SweepPlan,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

/// Reads a trace CSV: one displacement per line, optional `sample_rate_hz,<value>` first line.
pub fn read_trace_csv(path: &Path, default_rate: f64, scale: f64) -> Result<Trace> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(file);
    let mut rate = default_rate;
    let mut samples = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(i + 1);
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let first = record.get(0).unwrap_or("");
        if first.is_empty() && record.len() <= 1 {
            continue;
        }
        if first == "sample_rate_hz" {
            if !samples.is_empty() {
                return Err(parse_err("sample_rate_hz header must precede the samples".into()));
            }
            let value = record.get(1).unwrap_or("");
            rate = value
                .parse::<f64>()
                .ok()
                .filter(|r| r.is_finite() && *r > 0.0)
                .ok_or_else(|| parse_err(format!("invalid sample rate '{value}'")))?;
            continue;
        }
        if record.len() != 1 {
            return Err(parse_err(format!("expected one column, found {}", record.len())));
        }
        let v: f64 = first
            .parse()
            .map_err(|_| parse_err(format!("'{first}' is not a number")))?;
        if !v.is_finite() {
            return Err(parse_err(format!("non-finite sample '{first}'")));
        }
        samples.push(v * scale);
    }
    Ok(Trace {
        samples,
        sample_rate: rate,
        source: Some(path.to_path_buf()),
    })
}

fn vibration_from_dto(dto: &VibrationDto, base_dir: &Path, frame_rate: f64) -> Result<VibrationSpec> {
    Ok(match dto {
        VibrationDto::Static => VibrationSpec::Static,
        VibrationDto::Tones { tones, rates_hz } => VibrationSpec::Tones {
            tones: tones.iter().map(|t| Tone::new(t[0], t[1])).collect(),
            rates: rates_hz.map(|r| VitalRates {
                respiration_hz: r[0],
                heart_hz: r[1],
            }),
        },
        VibrationDto::Trace {
            path,
            samples,
            sample_rate_hz,
            scale,
        } => VibrationSpec::Trace(match (path, samples) {
            (Some(p), None) => {
                let full = if p.is_absolute() { p.clone() } else { base_dir.join(p) };
                let mut t = read_trace_csv(&full, sample_rate_hz.unwrap_or(frame_rate), *scale)?;
                if let Some(r) = sample_rate_hz {
                    t.sample_rate = *r;
                }
                t
            }
            (None, Some(s)) => Trace {
                samples: s.iter().map(|v| v * scale).collect(),
                sample_rate: sample_rate_hz.unwrap_or(frame_rate),
                source: None,
            },
            _ => {
                return Err(Error::InvalidArgument(
                    "a trace vibration needs exactly one of 'path' or 'samples'".into(),
                ))
            }
        }),
    })
}

fn vibration_to_dto(v: &VibrationSpec) -> VibrationDto {
    match v {
        VibrationSpec::Static => VibrationDto::Static,
        VibrationSpec::Tones { tones, rates } => VibrationDto::Tones {
            tones: tones.iter().map(|t| [t.amplitude, t.frequency]).collect(),
            rates_hz: rates.map(|r| [r.respiration_hz, r.heart_hz]),
        },
        VibrationSpec::Trace(t) => VibrationDto::Trace {
            path: None,
            samples: Some(t.samples.clone()),
            sample_rate_hz: Some(t.sample_rate),
            scale: 1.0,
        },
    }
}

/// Parses scenario text; `path` labels errors and `base_dir` resolves trace paths.
pub fn parse_scenario_str(text: &str, path: &Path, base_dir: &Path) -> Result<Scenario> {
    let dto: ScenarioDto = toml::from_str(text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.span().map(|s| line_of(text, s.start)).unwrap_or(0),
        message: e.message().trim().to_string(),
    })?;
    let invalid = |message: String| Error::Validation {
        path: path.to_path_buf(),
        message,
    };
    let wrap = |e: Error| match e {
        Error::Parse { .. } | Error::Io { .. } | Error::Csv(_) => e,
        other => invalid(other.to_string()),
    };

    let r = &dto.radar;
    let m = &dto.monitoring;
    let radar = RadarConfig {
        lambda_max: r.lambda_max,
        chirp_duration: r.t_c,
        f_adc: r.f_adc,
        sweep_rate: r.s,
        frame_duration: r.t_s,
        samples_per_chirp: r.n,
        chirps_per_frame: r.g,
        window_duration: m.t_win,
        estimate_interval: m.t_int,
    };
    radar.validate().map_err(wrap)?;
    let fs = radar.frame_rate();
    let bands = VitalBands {
        respiration: Band::new(m.b_r[0], m.b_r[1]),
        heartbeat: Band::new(m.b_h[0], m.b_h[1]),
    };
    bands.respiration.validate(fs).map_err(wrap)?;
    bands.heartbeat.validate(fs).map_err(wrap)?;
    let methods = m
        .methods
        .iter()
        .map(|s| s.parse::<Method>())
        .collect::<Result<Vec<_>>>()
        .map_err(wrap)?;
    if methods.is_empty() {
        return Err(invalid("monitoring.methods must name at least one method".into()));
    }
    if !(m.tau > 0.0 && m.tau < 1.0) {
        return Err(invalid(format!("monitoring.tau must lie in (0, 1), got {}", m.tau)));
    }
    if !(m.lambda >= 0.0 && m.l_lip > 0.0 && m.i_max >= 1 && m.tolerance >= 0.0) {
        return Err(invalid(
            "solver settings need lambda >= 0, L_lip > 0, I_max >= 1 and tolerance >= 0".into(),
        ));
    }
    if !m.snr_db.is_finite() && m.snr_db != f64::INFINITY {
        return Err(invalid(format!("monitoring.snr_db = {} is not a valid SNR", m.snr_db)));
    }

    let grid = build_range_grid(&radar).map_err(wrap)?;
    let mut requests = Vec::with_capacity(dto.objects.len());
    for o in &dto.objects {
        let vibration = vibration_from_dto(&o.vibration, base_dir, fs).map_err(|e| match e {
            Error::InvalidArgument(msg) => invalid(format!("object '{}': {msg}", o.name)),
            other => wrap(other),
        })?;
        requests.push(ObjectRequest::new(o.name.clone(), o.kind, o.x, o.d, vibration));
    }
    let mut names: Vec<&str> = requests.iter().map(|r| r.name.as_str()).collect();
    names.sort_unstable();
    if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
        return Err(invalid(format!("object name '{}' is used twice", w[0])));
    }
    let scene = snap_scene(&requests, &grid).map_err(wrap)?;

    let monitoring = MonitoringSettings {
        radar,
        jsr: JsrSettings {
            bands,
            lambda: m.lambda,
            lipschitz: m.l_lip,
            max_iter: m.i_max,
            tolerance: m.tolerance,
            tau: m.tau,
        },
        duration: m.duration,
        methods,
        support: m.support,
        policy: m.policy,
        channel: m.channel,
        targets: m.targets.clone(),
    };
    monitoring.window_count().map_err(wrap)?;
    let total = monitoring.total_frames().map_err(wrap)?;
    for o in &scene.objects {
        o.vibration
            .validate(fs, Some(total))
            .map_err(|e| invalid(format!("object '{}': {e}", o.name)))?;
    }
    if let Some(targets) = &monitoring.targets {
        for t in targets {
            match scene.object(t) {
                Some(o) if o.kind == ObjectKind::Human => {}
                _ => return Err(invalid(format!("monitoring target '{t}' is not a human in the scene"))),
            }
        }
    }

    let cohort = match &dto.cohort {
        None => None,
        Some(c) => {
            match scene.object(&c.target) {
                Some(o) if o.kind == ObjectKind::Human => {}
                _ => {
                    return Err(invalid(format!(
                        "cohort target '{}' is not a human in the scene",
                        c.target
                    )))
                }
            }
            let mut subjects = Vec::new();
            for s in &c.subjects {
                let vibration = vibration_from_dto(&s.vibration, base_dir, fs).map_err(wrap)?;
                vibration
                    .validate(fs, Some(total))
                    .map_err(|e| invalid(format!("subject '{}': {e}", s.name)))?;
                subjects.push(Subject {
                    name: s.name.clone(),
                    vibration,
                });
            }
            if let Some(syn) = &c.synthetic {
                subjects.extend(synthetic_cohort(syn.count, syn.seed, &bands));
            }
            if subjects.is_empty() {
                return Err(invalid("cohort has no subjects".into()));
            }
            Some(Cohort {
                target: c.target.clone(),
                subjects,
            })
        }
    };

    let sweep = match &dto.sweep {
        Some(s) => SweepPlan {
            snr_db: s.snr_db.clone(),
            seeds: if s.seeds.is_empty() {
                vec![m.seed]
            } else {
                s.seeds.clone()
            },
        },
        None => SweepPlan {
            snr_db: d::sweep_snr(),
            seeds: vec![m.seed],
        },
    };

    Ok(Scenario {
        radar,
        scene,
        monitoring,
        snr_db: m.snr_db,
        seed: m.seed,
        cohort,
        sweep,
    })
}

pub fn parse_scenario(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_scenario_str(&text, path, &base)
}

/// Serializes a scenario to TOML; traces are written inline and cohorts
/// as explicit subject lists.
pub fn serialize_scenario(s: &Scenario) -> Result<String> {
    let r = &s.radar;
    let m = &s.monitoring;
    let dto = ScenarioDto {
        radar: RadarDto {
            lambda_max: r.lambda_max,
            t_c: r.chirp_duration,
            f_adc: r.f_adc,
            s: r.sweep_rate,
            t_s: r.frame_duration,
            n: r.samples_per_chirp,
            g: r.chirps_per_frame,
        },
        monitoring: MonitoringDto {
            t_win: r.window_duration,
            t_int: r.estimate_interval,
            duration: m.duration,
            snr_db: s.snr_db,
            seed: s.seed,
            methods: m.methods.iter().map(|x| x.as_str().to_string()).collect(),
            b_r: [m.jsr.bands.respiration.lo, m.jsr.bands.respiration.hi],
            b_h: [m.jsr.bands.heartbeat.lo, m.jsr.bands.heartbeat.hi],
            lambda: m.jsr.lambda,
            l_lip: m.jsr.lipschitz,
            i_max: m.jsr.max_iter,
            tolerance: m.jsr.tolerance,
            tau: m.jsr.tau,
            support: m.support,
            policy: m.policy,
            channel: m.channel,
            targets: m.targets.clone(),
        },
        objects: s
            .scene
            .objects
            .iter()
            .map(|o| ObjectDto {
                name: o.name.clone(),
                kind: o.kind,
                x: o.amplitude,
                d: o.requested_distance,
                vibration: vibration_to_dto(&o.vibration),
            })
            .collect(),
        cohort: s.cohort.as_ref().map(|c| CohortDto {
            target: c.target.clone(),
            subjects: c
                .subjects
                .iter()
                .map(|x| SubjectDto {
                    name: x.name.clone(),
                    vibration: vibration_to_dto(&x.vibration),
                })
                .collect(),
            synthetic: None,
        }),
        sweep: Some(SweepDto {
            snr_db: s.sweep.snr_db.clone(),
            seeds: s.sweep.seeds.clone(),
        }),
    };
    toml::to_string(&dto).map_err(|e| Error::InvalidArgument(format!("cannot serialize scenario: {e}")))
}
