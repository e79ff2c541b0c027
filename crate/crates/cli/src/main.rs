//! `ncvsm`: simulate FMCW radar scenes and monitor vital signs of multiple people.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use ncvsm_core::doppler::build_range_slow_time_map;
use ncvsm_core::harness::{run_monitoring, scorecard, sweep_snr, ScoreCard, Vital};
use ncvsm_core::localization::{localize_jsr, localize_max_avg_power, localize_std, row_norms, StdStatistic};
use ncvsm_core::plot::{bar_chart, heatmap, line_chart, Series};
use ncvsm_core::report::{emit_session, file_stem, write_file, write_range_map, write_scorecard, write_support};
use ncvsm_core::scenario::{parse_scenario, Scenario};
use ncvsm_core::synthesis::FrameSynthesizer;
use ncvsm_core::{build_range_grid, Method};

#[derive(Parser)]
#[command(
    name = "ncvsm",
    version,
    about = "Sparsity-based vital-signs monitoring of multiple people with FMCW radar"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Localize humans in the first window with JSR, max-average-power and std.
    Localize(Common),
    /// Write the range vs. slow-time map of the first window.
    Map(Common),
    /// Run a monitoring session and score every method.
    Monitor(Common),
    /// Score every method over the scenario's SNR list and seeds.
    Sweep(SweepArgs),
    /// Parse and validate a scenario file.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long)]
    scenario: PathBuf,
    /// Per-sample SNR in dB; overrides the scenario.
    #[arg(long, allow_hyphen_values = true)]
    snr_db: Option<f64>,
    /// Noise seed; overrides the scenario.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Comma-separated methods: vsdr, fft_zp, fft_nozp, phase_reg.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// Also write SVG figures.
    #[arg(long)]
    plots: bool,
    /// Support threshold as a fraction of the largest row norm.
    #[arg(long)]
    tau: Option<f64>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated SNR list in dB; overrides the scenario's sweep list.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    snr_list: Option<Vec<f64>>,
    /// Comma-separated seeds; overrides the scenario's sweep seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
}

fn load(common: &Common) -> Result<Scenario> {
    let mut s = parse_scenario(&common.scenario)?;
    if let Some(snr) = common.snr_db {
        s.snr_db = snr;
    }
    if let Some(seed) = common.seed {
        s.seed = seed;
    }
    if let Some(methods) = &common.methods {
        s.monitoring.methods = methods
            .iter()
            .map(|m| m.trim().parse::<Method>())
            .collect::<ncvsm_core::Result<Vec<_>>>()?;
        if s.monitoring.methods.is_empty() {
            bail!("--methods must name at least one method");
        }
    }
    if let Some(tau) = common.tau {
        if !(tau > 0.0 && tau < 1.0) {
            bail!("--tau must lie in (0, 1), got {tau}");
        }
        s.monitoring.jsr.tau = tau;
    }
    Ok(s)
}

fn save_svg(dir: &Path, name: &str, svg: String) -> Result<PathBuf> {
    Ok(write_file(dir, name, |b| {
        b.extend_from_slice(svg.as_bytes());
        Ok(())
    })?)
}

fn localize(common: &Common) -> Result<()> {
    let s = load(common)?;
    let grid = build_range_grid(&s.radar)?;
    let synth = FrameSynthesizer::new(&s.scene, &s.radar, s.snr_db, s.seed)?;
    let y = synth.measurement(0, s.radar.window_frames())?.in_phase();
    let (support, outcome) = localize_jsr(&y, &grid, &s.monitoring.jsr)?;
    let map = build_range_slow_time_map(&y, &grid);
    let top = s.scene.humans().count().max(1);
    let power = localize_max_avg_power(&map, top)?;
    let std = localize_std(&map, top, StdStatistic::default())?;

    let mut buf = Vec::new();
    write_support(&support, "jsr", &mut buf)?;
    for (loc, name) in [(&power, "max_avg_power"), (&std, "std")] {
        let mut part = Vec::new();
        write_support(&loc.support, name, &mut part)?;
        // drop the repeated header line
        let skip = part.iter().position(|&c| c == b'\n').map_or(part.len(), |p| p + 1);
        buf.extend_from_slice(&part[skip..]);
    }
    let path = write_file(&common.out, "localization.csv", |b| {
        b.extend_from_slice(&buf);
        Ok(())
    })?;
    info!("wrote {}", path.display());

    for (name, bins) in [
        ("jsr", &support.bins),
        ("max_avg_power", &power.support.bins),
        ("std", &std.support.bins),
    ] {
        let labels: Vec<String> = bins
            .iter()
            .map(|&b| match s.scene.object_at_bin(b) {
                Some(o) => format!("{b}:{}", o.name),
                None => format!("{b}"),
            })
            .collect();
        println!("{name}\t{}", labels.join(" "));
    }
    println!(
        "fista\titerations={} converged={} objective={:.6e}",
        outcome.iterations,
        outcome.converged,
        outcome.objective()
    );

    if common.plots {
        let norms = row_norms(&outcome.x);
        let highlight: Vec<bool> = (0..norms.len()).map(|m| support.bins.contains(&m)).collect();
        let svg = bar_chart(
            "JSR row norms",
            "distance (m)",
            "row l2 norm",
            &grid.distances,
            &norms,
            &highlight,
        );
        save_svg(&common.out, "localization.svg", svg)?;
    }
    Ok(())
}

fn map(common: &Common) -> Result<()> {
    let s = load(common)?;
    let grid = build_range_grid(&s.radar)?;
    let synth = FrameSynthesizer::new(&s.scene, &s.radar, s.snr_db, s.seed)?;
    let y = synth.measurement(0, s.radar.window_frames())?.in_phase();
    let map = build_range_slow_time_map(&y, &grid);
    let stride = (map.data.ncols() / 300).max(1);
    write_file(&common.out, "range_map.csv", |b| {
        write_range_map(&map, s.radar.frame_duration, stride, b)
    })?;
    if common.plots {
        let mag = map.data.mapv(|z| z.norm());
        let svg = heatmap(
            "Range vs. slow time",
            "time (s)",
            "distance (m)",
            (0.0, s.radar.window_duration),
            (0.0, grid.max_distance),
            &mag,
            300,
        );
        save_svg(&common.out, "range_map.svg", svg)?;
    }
    Ok(())
}

fn monitor(common: &Common) -> Result<()> {
    let s = load(common)?;
    let session = run_monitoring(&s.scene, &s.monitoring, s.snr_db, s.seed)?;
    if !session.missed.is_empty() {
        log::warn!("not localized: {}", session.missed.join(", "));
    }
    for p in emit_session(&session, &common.out)? {
        info!("wrote {}", p.display());
    }
    let card = scorecard(&session)?;
    write_file(&common.out, "scorecard.csv", |b| write_scorecard(&card, b))?;
    write_scorecard(&card, std::io::stdout().lock())?;

    if common.plots {
        for (k, h) in session.tracked.iter().enumerate() {
            for vital in Vital::ALL {
                let mut series = Vec::new();
                for &m in &session.methods {
                    let pts = session
                        .series(k, m)
                        .map(|r| {
                            let v = match vital {
                                Vital::Respiration => r.estimate.rr_bpm,
                                Vital::Heartbeat => r.estimate.hr_bpm,
                            };
                            (r.estimate.timestamp, v)
                        })
                        .collect();
                    series.push(Series::new(m.as_str(), pts));
                }
                if let Some(m) = session.methods.first() {
                    let mut reference = Series::new(
                        "reference",
                        session
                            .series(k, *m)
                            .map(|r| {
                                let v = match vital {
                                    Vital::Respiration => r.rr_ref,
                                    Vital::Heartbeat => r.hr_ref,
                                };
                                (r.estimate.timestamp, v)
                            })
                            .collect(),
                    );
                    reference.dashed = true;
                    series.push(reference);
                }
                let title = format!("{} {}", h.name, vital.as_str().to_uppercase());
                let name = format!("timeseries_{}_{}.svg", file_stem(&h.name), vital.as_str());
                save_svg(
                    &common.out,
                    &name,
                    line_chart(&title, "time (s)", "rate (bpm)", &series),
                )?;
            }
        }
    }
    Ok(())
}

fn sweep_plots(card: &ScoreCard, methods: &[Method], dir: &Path) -> Result<()> {
    type Metric = (&'static str, &'static str, fn(&ncvsm_core::harness::VitalScore) -> f64);
    let metrics: [Metric; 3] = [
        ("mae", "MAE (bpm)", |s| s.mae),
        ("rmse", "RMSE (bpm)", |s| s.rmse),
        ("success_rate", "success rate (%)", |s| s.success_rate),
    ];
    for vital in Vital::ALL {
        for (key, label, get) in metrics {
            let series: Vec<Series> = methods
                .iter()
                .map(|&m| {
                    let pts = card
                        .rows
                        .iter()
                        .filter(|r| r.method == m && r.vital == vital)
                        .map(|r| (r.snr_db, get(&r.score)))
                        .collect();
                    let mut s = Series::new(m.as_str(), pts);
                    s.markers = true;
                    s
                })
                .collect();
            let title = format!("{} {} vs. SNR", vital.as_str().to_uppercase(), key);
            let name = format!("{}_{}.svg", key, vital.as_str());
            save_svg(dir, &name, line_chart(&title, "SNR (dB)", label, &series))?;
        }
    }
    Ok(())
}

fn sweep(args: &SweepArgs) -> Result<()> {
    let s = load(&args.common)?;
    let snr = args.snr_list.clone().unwrap_or_else(|| s.sweep.snr_db.clone());
    let seeds = args.seeds.clone().unwrap_or_else(|| s.sweep.seeds.clone());
    let card = sweep_snr(&s.scene, &s.monitoring, s.cohort.as_ref(), &snr, &seeds)?;
    let path = write_file(&args.common.out, "scorecard.csv", |b| write_scorecard(&card, b))?;
    info!("wrote {}", path.display());
    write_scorecard(&card, std::io::stdout().lock())?;
    if args.common.plots {
        sweep_plots(&card, &s.monitoring.methods, &args.common.out)?;
    }
    Ok(())
}

fn validate(path: &Path) -> Result<()> {
    let s = parse_scenario(path)?;
    let grid = build_range_grid(&s.radar)?;
    println!(
        "ok\tobjects={} bins={} spacing_m={:.6} d_max_m={:.6} windows={}",
        s.scene.objects.len(),
        grid.len(),
        grid.spacing,
        grid.max_distance,
        s.monitoring.window_count()?
    );
    for o in &s.scene.objects {
        println!(
            "{}\t{}\tbin={}\tdistance_m={:.6}\tsnap_m={:+.6}",
            o.name,
            o.kind.as_str(),
            o.bin,
            o.distance,
            o.snap_delta()
        );
    }
    if let Some(c) = &s.cohort {
        println!("cohort\ttarget={} subjects={}", c.target, c.subjects.len());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Localize(c) => localize(c),
        Command::Map(c) => map(c),
        Command::Monitor(c) => monitor(c),
        Command::Sweep(a) => sweep(a),
        Command::Validate { scenario } => validate(scenario),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
