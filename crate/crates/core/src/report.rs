//! CSV output for sessions, score cards, supports and range maps.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::doppler::RangeSlowTimeMap;
use crate::error::{Error, Result};
use crate::harness::{MonitoringSession, ScoreCard};
use crate::localization::Support;

pub const ESTIMATE_HEADER: [&str; 7] = ["t_s", "human", "method", "rr_bpm", "hr_bpm", "rr_ref", "hr_ref"];
pub const SCORECARD_HEADER: [&str; 7] = ["snr_db", "method", "vital", "success_rate", "pcc", "mae", "rmse"];
pub const SUPPORT_HEADER: [&str; 4] = ["bin", "distance_m", "row_energy", "method"];

fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.6}")
    } else {
        "NA".to_string()
    }
}

/// Per-timestamp estimates; `human` restricts the rows to one tracked human.
pub fn write_estimates<W: Write>(session: &MonitoringSession, human: Option<usize>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ESTIMATE_HEADER)?;
    for r in &session.records {
        let e = &r.estimate;
        if human.is_some_and(|h| h != e.human) {
            continue;
        }
        w.write_record([
            format!("{:.2}", e.timestamp),
            session.human_name(e.human).to_string(),
            e.method.as_str().to_string(),
            num(e.rr_bpm),
            num(e.hr_bpm),
            num(r.rr_ref),
            num(r.hr_ref),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn write_scorecard<W: Write>(card: &ScoreCard, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SCORECARD_HEADER)?;
    for r in &card.rows {
        w.write_record([
            format!("{}", r.snr_db),
            r.method.as_str().to_string(),
            r.vital.as_str().to_string(),
            num(r.score.success_rate),
            r.score.pcc.map(num).unwrap_or_else(|| "NA".into()),
            num(r.score.mae),
            num(r.score.rmse),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn write_support<W: Write>(support: &Support, method: &str, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUPPORT_HEADER)?;
    for ((b, d), e) in support.bins.iter().zip(&support.distances).zip(&support.row_energies) {
        w.write_record([b.to_string(), num(*d), num(*e), method.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// |X| of the range map, one row per bin, every `stride`-th frame.
pub fn write_range_map<W: Write>(map: &RangeSlowTimeMap, frame_duration: f64, stride: usize, out: W) -> Result<()> {
    let stride = stride.max(1);
    let frames: Vec<usize> = (0..map.data.ncols()).step_by(stride).collect();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["bin".to_string(), "distance_m".to_string()];
    header.extend(
        frames
            .iter()
            .map(|&l| format!("{:.2}", (map.window_start + l) as f64 * frame_duration)),
    );
    w.write_record(&header)?;
    for (m, row) in map.data.rows().into_iter().enumerate() {
        let mut rec = vec![m.to_string(), num(map.distances[m])];
        rec.extend(frames.iter().map(|&l| num(row[l].norm())));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Creates `dir` (and parents) and returns `dir/name`.
pub fn output_path(dir: &Path, name: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(dir.join(name))
}

/// Writes `contents` produced by `f` to `dir/name`.
pub fn write_file(dir: &Path, name: &str, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<PathBuf> {
    let path = output_path(dir, name)?;
    let mut buf = Vec::new();
    f(&mut buf)?;
    fs::write(&path, buf).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// File-name-safe form of a human name.
pub fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// `estimates.csv` with every row plus `estimates_<human>.csv` per tracked human.
pub fn emit_session(session: &MonitoringSession, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths = vec![write_file(dir, "estimates.csv", |b| write_estimates(session, None, b))?];
    for (k, h) in session.tracked.iter().enumerate() {
        let name = format!("estimates_{}.csv", file_stem(&h.name));
        paths.push(write_file(dir, &name, |b| write_estimates(session, Some(k), b))?);
    }
    Ok(paths)
}
