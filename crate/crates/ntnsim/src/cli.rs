//! Command line front end: run scenarios, synthesize strength traces,
//! train and evaluate the strength predictor, sweep seeds, and summarize
//! metrics files. Every failure prints a single `error: ...` line to
//! stderr and exits nonzero.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::channel::{
    pass_geometry, read_trace_csv, synth_trace, write_trace_csv, ChannelParams, ElevationBias,
    NoiseProfile,
};
use crate::harness::{
    cdf_csv, load_scenario, run_scenario, save_scenario, write_atomic, MetricsReport,
    RunArtifacts, ScenarioConfig,
};
use crate::orbit::{elevation_and_range, Constellation, Direction, GroundNode};
use crate::predictor::{
    channel_model_estimate, evaluate, evaluate_with, load_model, save_model, train, TrainConfig,
};
use crate::protocol::Scheme;

#[derive(Debug, Parser)]
#[command(name = "ntnsim", version, about = "Deterministic LEO handover simulator")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario and write its artifacts.
    Run(RunArgs),
    /// Write a scenario preset out as an editable TOML file.
    Scenario(ScenarioArgs),
    /// Synthesize a strength trace CSV for predictor work.
    Trace(TraceArgs),
    /// Train the strength predictor on a trace.
    Train(TrainArgs),
    /// Evaluate a trained model against a trace.
    Eval(EvalArgs),
    /// Run one scenario across many seeds, optionally in parallel.
    Sweep(SweepArgs),
    /// Summarize metrics files side by side.
    Report(ReportArgs),
    /// Sample visibility over a scenario's area and sites.
    Coverage(CoverageArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PresetName {
    DeskReference,
    DeskReliability,
}

impl PresetName {
    fn build(self, seed: u64) -> ScenarioConfig {
        match self {
            PresetName::DeskReference => ScenarioConfig::desk_reference(seed),
            PresetName::DeskReliability => ScenarioConfig::desk_reliability(seed),
        }
    }

    /// Seed each preset's published numbers are quoted at.
    fn default_seed(self) -> u64 {
        match self {
            PresetName::DeskReference => 42,
            PresetName::DeskReliability => 43,
        }
    }
}

#[derive(Debug, Args)]
struct ScenarioSource {
    /// Scenario TOML path.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in scenario preset.
    #[arg(long, value_enum)]
    preset: Option<PresetName>,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl ScenarioSource {
    fn load(&self) -> Result<ScenarioConfig, String> {
        let mut config = match (&self.config, self.preset) {
            (Some(path), None) => load_scenario(path).map_err(|e| e.to_string())?,
            (None, Some(preset)) => preset.build(self.seed.unwrap_or(preset.default_seed())),
            (None, None) => return Err("give either --config or --preset".into()),
            (Some(_), Some(_)) => unreachable!("clap conflicts_with"),
        };
        if let Some(seed) = self.seed {
            config.scenario.seed = seed;
        }
        Ok(config)
    }
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    source: ScenarioSource,
    /// Directory for events.log, metrics.json, latency.csv, cdf CSVs.
    #[arg(long)]
    out_dir: PathBuf,
    /// Disable the same-direction target filter.
    #[arg(long)]
    no_direction_filter: bool,
}

#[derive(Debug, Args)]
struct ScenarioArgs {
    #[arg(long, value_enum)]
    preset: PresetName,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TraceArgs {
    #[arg(long)]
    out: PathBuf,
    /// Peak elevations of the synthesized passes, degrees.
    #[arg(long, value_delimiter = ',', default_value = "45,55,65,75,85")]
    peaks_deg: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "550000,630000")]
    altitudes_m: Vec<f64>,
    #[arg(long, default_value_t = 10.0)]
    min_elevation_deg: f64,
    #[arg(long, default_value_t = 1.0)]
    step_s: f64,
    /// Shadow fading sigma on the synthesized measurements, dB.
    #[arg(long, default_value_t = 0.15)]
    sigma_db: f64,
    /// Elevation-dependent bias amplitude, dB (0 turns the bias off).
    #[arg(long, default_value_t = 8.0)]
    bias_db: f64,
    #[arg(long, default_value_t = 18.0)]
    bias_scale_deg: f64,
    /// Measurement-to-reference lead, steps.
    #[arg(long, default_value_t = 40)]
    horizon_steps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    model_out: PathBuf,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 16)]
    hidden: usize,
    #[arg(long, default_value_t = 1e-3)]
    learning_rate: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    trace: PathBuf,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    source: ScenarioSource,
    #[arg(long)]
    out_dir: PathBuf,
    /// Seeds `base..base+count` run back to back.
    #[arg(long, default_value_t = 8)]
    count: u64,
    /// Worker threads; 1 keeps the sweep serial.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// metrics.json files to summarize.
    #[arg(required = true)]
    metrics: Vec<PathBuf>,
}

#[derive(Debug, Args)]
struct CoverageArgs {
    #[command(flatten)]
    source: ScenarioSource,
    /// Sampling interval over the scenario duration, seconds.
    #[arg(long, default_value_t = 30.0)]
    step_s: f64,
    /// Sample points per axis across the terminal area.
    #[arg(long, default_value_t = 5)]
    grid: u32,
}

/// Entry point; returns the process exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(message) => {
            eprintln!("error: {message}");
            1
        }
    }
}

fn dispatch(command: Command) -> Result<(), String> {
    match command {
        Command::Run(args) => cmd_run(args),
        Command::Scenario(args) => cmd_scenario(args),
        Command::Trace(args) => cmd_trace(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Coverage(args) => cmd_coverage(args),
        Command::Report(args) => cmd_report(args),
    }
}

fn ensure_dir(dir: &Path) -> Result<(), String> {
    std::fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))
}

fn write_text(path: &Path, text: &str) -> Result<(), String> {
    write_atomic(path, text.as_bytes()).map_err(|e| format!("{}: {e}", path.display()))
}

fn write_artifacts(dir: &Path, artifacts: &RunArtifacts) -> Result<(), String> {
    ensure_dir(dir)?;
    write_text(&dir.join("events.log"), &artifacts.event_log)?;
    write_text(&dir.join("metrics.json"), &artifacts.metrics.to_json_string())?;
    write_text(&dir.join("latency.csv"), &artifacts.latency_csv())?;
    for (scheme, samples) in &artifacts.latency_samples {
        if !samples.is_empty() {
            write_text(&dir.join(format!("cdf-{}.csv", scheme.label())), &cdf_csv(samples))?;
        }
    }
    Ok(())
}

fn summary_lines(metrics: &MetricsReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "scenario={} seed={} events={} rate_hz={:.6}\n",
        metrics.scenario, metrics.seed, metrics.handover_events, metrics.handover_rate_hz
    ));
    for (label, report) in &metrics.schemes {
        out.push_str(&format!(
            "  {label:<9} mean_ms={:8.3} p95_ms={:8.3} failures={:<4} rate_permille={:.3} loss={:.3e}\n",
            report.interruption.mean_s * 1e3,
            report.interruption.p95_s * 1e3,
            report.failures,
            report.failure_rate_permille,
            report.loss_proxy,
        ));
    }
    out.push_str(&format!(
        "  planner    entries={} inadequate_rate={:.5} fallbacks={} cancelled={} mean_pass_s={:.1}\n",
        metrics.planning.entries,
        metrics.inadequate.rate,
        metrics.ssf.fallbacks,
        metrics.planning.cancelled,
        metrics.mean_pass_duration_s,
    ));
    out
}

fn cmd_run(args: RunArgs) -> Result<(), String> {
    let mut config = args.source.load()?;
    if args.no_direction_filter {
        config.similar_direction_filter = false;
    }
    let artifacts = run_scenario(&config).map_err(|e| e.to_string())?;
    write_artifacts(&args.out_dir, &artifacts)?;
    print!("{}", summary_lines(&artifacts.metrics));
    Ok(())
}

fn cmd_scenario(args: ScenarioArgs) -> Result<(), String> {
    let config = args.preset.build(args.seed);
    save_scenario(&args.out, &config).map_err(|e| e.to_string())?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn cmd_trace(args: TraceArgs) -> Result<(), String> {
    if args.peaks_deg.is_empty() || args.altitudes_m.is_empty() {
        return Err("trace: need at least one peak elevation and one altitude".into());
    }
    let params = ChannelParams::default();
    let noise = NoiseProfile {
        shadow_sigma_db: args.sigma_db,
        bias: if args.bias_db == 0.0 {
            ElevationBias::None
        } else {
            ElevationBias::Exponential {
                amplitude_db: args.bias_db,
                scale_deg: args.bias_scale_deg,
            }
        },
    };
    let mut rng = ChaCha12Rng::seed_from_u64(args.seed);
    let mut samples = Vec::new();
    for &altitude in &args.altitudes_m {
        for &peak in &args.peaks_deg {
            let geometry = pass_geometry(altitude, peak, args.min_elevation_deg, args.step_s);
            if geometry.is_empty() {
                return Err(format!(
                    "trace: pass peaking at {peak} deg never clears {} deg",
                    args.min_elevation_deg
                ));
            }
            samples.extend(synth_trace(
                &geometry,
                &params,
                &noise,
                altitude,
                args.horizon_steps,
                &mut rng,
            ));
        }
    }
    write_trace_csv(&args.out, &samples).map_err(|e| format!("{}: {e}", args.out.display()))?;
    println!("wrote {} samples to {}", samples.len(), args.out.display());
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<(), String> {
    let samples =
        read_trace_csv(&args.trace).map_err(|e| format!("{}: {e}", args.trace.display()))?;
    let config = TrainConfig {
        epochs: args.epochs,
        hidden: args.hidden,
        learning_rate: args.learning_rate,
        seed: args.seed,
        ..TrainConfig::default()
    };
    let (model, report) =
        train(&samples, &config).map_err(|e| format!("train: {e}"))?;
    save_model(&args.model_out, &model)
        .map_err(|e| format!("{}: {e}", args.model_out.display()))?;
    println!(
        "trained hidden={} epochs={} best_val_mse={:.6} degenerate_features={}",
        args.hidden, report.epochs_run, report.best_val_mse, report.degenerate_features
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<(), String> {
    let samples =
        read_trace_csv(&args.trace).map_err(|e| format!("{}: {e}", args.trace.display()))?;
    let model = load_model(&args.model).map_err(|e| format!("{}: {e}", args.model.display()))?;
    let learned = evaluate(&model, &samples);
    let closed = evaluate_with(|s| channel_model_estimate(s, model.a_zenith_db), &samples);
    println!(
        "model    n={} mean_abs_db={:.3} median_abs_db={:.3} p90_abs_db={:.3}",
        learned.count, learned.mean_abs_db, learned.median_abs_db, learned.p90_abs_db
    );
    println!(
        "baseline n={} mean_abs_db={:.3} median_abs_db={:.3} p90_abs_db={:.3}",
        closed.count, closed.mean_abs_db, closed.median_abs_db, closed.p90_abs_db
    );
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<(), String> {
    if args.count == 0 {
        return Err("sweep: count must be at least 1".into());
    }
    let base = args.source.load()?;
    ensure_dir(&args.out_dir)?;
    let base_seed = base.scenario.seed;
    let seeds: Vec<u64> = (0..args.count).map(|k| base_seed + k).collect();

    let run_one = |seed: &u64| -> Result<(u64, MetricsReport), String> {
        let mut config = base.clone();
        config.scenario.seed = *seed;
        let artifacts = run_scenario(&config).map_err(|e| format!("seed {seed}: {e}"))?;
        let dir = args.out_dir.join(format!("seed-{seed}"));
        write_artifacts(&dir, &artifacts)?;
        Ok((*seed, artifacts.metrics))
    };

    let results: Result<Vec<(u64, MetricsReport)>, String> = if args.jobs > 1 {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(args.jobs)
            .build()
            .map_err(|e| format!("sweep: {e}"))?;
        pool.install(|| seeds.par_iter().map(run_one).collect())
    } else {
        seeds.iter().map(run_one).collect()
    };
    let mut results = results?;
    results.sort_by_key(|(seed, _)| *seed);

    let mut summary = String::new();
    for (_, metrics) in &results {
        summary.push_str(&summary_lines(metrics));
    }
    write_text(&args.out_dir.join("sweep-summary.txt"), &summary)?;
    print!("{summary}");
    Ok(())
}

fn cmd_coverage(args: CoverageArgs) -> Result<(), String> {
    if !(args.step_s > 0.0) {
        return Err("coverage: step-s must be positive".into());
    }
    if args.grid < 2 {
        return Err("coverage: grid must be at least 2".into());
    }
    let config = args.source.load()?;
    let shell = config.constellation.resolve()?;
    let constellation = Constellation::build(shell.clone()).map_err(|e| e.to_string())?;

    let area = config.population.area;
    let grid = args.grid as usize;
    let mut points = Vec::with_capacity(grid * grid);
    for i in 0..grid {
        for j in 0..grid {
            let f_lat = i as f64 / (grid - 1) as f64;
            let f_lon = j as f64 / (grid - 1) as f64;
            points.push(GroundNode::new(
                area.lat_min_deg + f_lat * (area.lat_max_deg - area.lat_min_deg),
                area.lon_min_deg + f_lon * (area.lon_max_deg - area.lon_min_deg),
            ));
        }
    }
    let mut sites = vec![(
        "core".to_string(),
        GroundNode::new(config.sites.core.lat_deg, config.sites.core.lon_deg),
    )];
    for (i, gs) in config.sites.ground_stations.iter().enumerate() {
        sites.push((format!("gs{i}"), GroundNode::new(gs.lat_deg, gs.lon_deg)));
    }

    let samples = (config.scenario.duration_s / args.step_s).floor() as usize + 1;
    let mut covered = vec![0usize; points.len()];
    let mut both_dirs = vec![0usize; points.len()];
    let mut visible_sum = vec![0usize; points.len()];
    let mut site_covered = vec![0usize; sites.len()];
    let mut site_min = vec![usize::MAX; sites.len()];
    for k in 0..samples {
        let t = k as f64 * args.step_s;
        let snapshot = constellation.snapshot(t);
        for (idx, point) in points.iter().enumerate() {
            let ground = point.position_eci(t);
            let mut up = [0usize; 2];
            for sat in &snapshot {
                if elevation_and_range(ground, sat.position_m).0 >= shell.min_elevation_deg {
                    up[(sat.direction() == Direction::Descending) as usize] += 1;
                }
            }
            visible_sum[idx] += up[0] + up[1];
            covered[idx] += (up[0] + up[1] > 0) as usize;
            both_dirs[idx] += (up[0] > 0 && up[1] > 0) as usize;
        }
        for (idx, (_, site)) in sites.iter().enumerate() {
            let ground = site.position_eci(t);
            let n = snapshot
                .iter()
                .filter(|s| {
                    elevation_and_range(ground, s.position_m).0
                        >= config.sites.min_site_elevation_deg
                })
                .count();
            site_covered[idx] += (n > 0) as usize;
            site_min[idx] = site_min[idx].min(n);
        }
    }

    let frac = |sum: usize| sum as f64 / samples as f64;
    let duty: Vec<f64> = covered.iter().map(|&c| frac(c)).collect();
    let worst = duty
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap();
    println!(
        "area lat [{}, {}] lon [{}, {}], {}x{grid} points, {samples} samples every {} s",
        area.lat_min_deg, area.lat_max_deg, area.lon_min_deg, area.lon_max_deg, grid, args.step_s
    );
    println!(
        "  duty min={:.4} mean={:.4}  mean_visible={:.2}  both_directions={:.3}",
        duty[worst],
        duty.iter().sum::<f64>() / duty.len() as f64,
        frac(visible_sum.iter().sum()) / points.len() as f64,
        frac(both_dirs.iter().sum()) / points.len() as f64,
    );
    println!(
        "  worst point lat={:.1} lon={:.1} duty={:.4} mean_visible={:.2}",
        points[worst].lat_deg,
        points[worst].lon_deg,
        duty[worst],
        frac(visible_sum[worst]),
    );
    for (idx, (name, site)) in sites.iter().enumerate() {
        println!(
            "  site {name:<5} lat={:.2} lon={:.2} duty={:.4} min_visible={}",
            site.lat_deg, site.lon_deg, frac(site_covered[idx]), site_min[idx]
        );
    }
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<(), String> {
    for path in &args.metrics {
        let text =
            std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let metrics =
            MetricsReport::from_json_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        print!("{}", summary_lines(&metrics));
        // Headline comparison when both ends of the spectrum are present.
        if let (Some(parallel), Some(ntn)) =
            (metrics.scheme(Scheme::Parallel), metrics.scheme(Scheme::Ntn))
        {
            if parallel.interruption.mean_s > 0.0 {
                println!(
                    "  speedup    ntn/parallel={:.1}x",
                    ntn.interruption.mean_s / parallel.interruption.mean_s
                );
            }
        }
    }
    Ok(())
}
