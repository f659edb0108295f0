//! `trip`: simulate scenes, build terrain maps from scan sequences, score
//! them against ground truth, render layers and time the pipeline.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use trip_core::config::{Ablation, DecisionRule, PipelineConfig};
use trip_core::eval::evaluate;
use trip_core::io::{self, Layer, ScanFormat};
use trip_core::pipeline::{run_pipeline, PipelineOutput};
use trip_core::sim::{ground_truth, simulate, TruthParams};
use trip_core::{GridSpec, Pose, RangeScan, Scene, StageTimings};

/// Reference per-scan totals in milliseconds for the narrow and open presets.
const REFERENCE_NARROW_MS: f64 = 9.341;
const REFERENCE_OPEN_MS: f64 = 13.831;
const BUDGET_MS: f64 = 50.0;

#[derive(Parser)]
#[command(name = "trip", version, about = "Terrain traversability mapping from range scans")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Pipeline configuration (TOML). Defaults to the narrow preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for the parallel stages.
    #[arg(long)]
    threads: Option<usize>,
    /// Disable a stage: no-gate, vanilla-bgk or no-pool. Repeatable.
    #[arg(long, value_delimiter = ',', value_parser = parse_ablation)]
    ablate: Vec<Ablation>,
}

#[derive(Subcommand)]
enum Command {
    /// Ray-cast a scene file into scans, poses and a ground-truth grid.
    Simulate {
        #[arg(long)]
        scene: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "bin-xyzi", value_parser = parse_format)]
        format: ScanFormat,
        #[command(flatten)]
        common: Common,
    },
    /// Map a scan sequence and export the fused map.
    Map {
        /// Directory of scan files, read in file-name order.
        #[arg(long)]
        scans: PathBuf,
        #[arg(long)]
        poses: PathBuf,
        /// Map file to write.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "bin-xyzi", value_parser = parse_format)]
        format: ScanFormat,
        /// Per-scan stage timings as CSV.
        #[arg(long)]
        timings: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Score a map against a ground-truth grid.
    Eval {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Write the report as key=value lines.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Collision decision rule: posterior or mean-evidence.
        #[arg(long, value_parser = parse_rule)]
        decision_rule: Option<DecisionRule>,
        #[arg(long)]
        decision_tau: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Render map layers as PPM images.
    Render {
        #[arg(long)]
        map: PathBuf,
        /// Output directory; one `<layer>.ppm` per layer.
        #[arg(long)]
        out: PathBuf,
        /// Layers to draw (default: all).
        #[arg(long, value_delimiter = ',', value_parser = parse_layer)]
        layer: Vec<Layer>,
    },
    /// Repeat mapping and report stage timing statistics.
    Bench {
        /// Simulate this scene in memory instead of reading files.
        #[arg(long, conflicts_with_all = ["scans", "poses"])]
        scene: Option<PathBuf>,
        #[arg(long, requires = "poses")]
        scans: Option<PathBuf>,
        #[arg(long, requires = "scans")]
        poses: Option<PathBuf>,
        #[arg(long, default_value = "bin-xyzi", value_parser = parse_format)]
        format: ScanFormat,
        #[arg(long, default_value_t = 3)]
        repeat: usize,
        /// Statistics as key=value lines.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

fn parse_ablation(s: &str) -> Result<Ablation, String> {
    s.parse().map_err(|e: trip_core::Error| e.to_string())
}

fn parse_format(s: &str) -> Result<ScanFormat, String> {
    s.parse().map_err(|e: trip_core::Error| e.to_string())
}

fn parse_layer(s: &str) -> Result<Layer, String> {
    s.parse().map_err(|e: trip_core::Error| e.to_string())
}

fn parse_rule(s: &str) -> Result<DecisionRule, String> {
    match s {
        "posterior" => Ok(DecisionRule::Posterior),
        "mean-evidence" => Ok(DecisionRule::MeanEvidence),
        other => Err(format!(
            "unknown decision rule '{other}' (expected posterior or mean-evidence)"
        )),
    }
}

impl Common {
    fn config(&self) -> Result<PipelineConfig> {
        let mut config = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                PipelineConfig::from_toml(&text).with_context(|| format!("loading {}", path.display()))?
            }
            None => PipelineConfig::narrow(),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        for a in &self.ablate {
            config = config.with_ablation(*a);
        }
        config.validate()?;
        Ok(config)
    }

    fn install_threads(&self) -> Result<()> {
        if let Some(n) = self.threads {
            if n == 0 {
                bail!("--threads must be at least 1");
            }
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .context("configuring the thread pool")?;
        }
        Ok(())
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", message(&e));
            ExitCode::FAILURE
        }
    }
}

/// The error chain joined by ": ", skipping causes already spelled out by
/// the message above them.
fn message(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !out.ends_with(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            scene,
            out,
            format,
            common,
        } => cmd_simulate(&scene, &out, format, &common),
        Command::Map {
            scans,
            poses,
            out,
            format,
            timings,
            common,
        } => cmd_map(&scans, &poses, &out, format, timings.as_deref(), &common),
        Command::Eval {
            map,
            truth,
            out,
            decision_rule,
            decision_tau,
            common,
        } => cmd_eval(&map, &truth, out.as_deref(), decision_rule, decision_tau, &common),
        Command::Render { map, out, layer } => cmd_render(&map, &out, &layer),
        Command::Bench {
            scene,
            scans,
            poses,
            format,
            repeat,
            out,
            common,
        } => cmd_bench(
            scene.as_deref(),
            scans.zip(poses),
            format,
            repeat,
            out.as_deref(),
            &common,
        ),
    }
}

fn load_scene(path: &Path) -> Result<Scene> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Scene::from_toml(&text).with_context(|| format!("loading {}", path.display()))
}

/// Lattice-aligned grid covering the path plus half a local window.
fn truth_window(poses: &[Pose], config: &PipelineConfig) -> Result<GridSpec> {
    let res = config.grid.resolution;
    let half = config.grid.extent / 2.0;
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in poses {
        let t = p.translation;
        x0 = x0.min(t.x);
        y0 = y0.min(t.y);
        x1 = x1.max(t.x);
        y1 = y1.max(t.y);
    }
    if poses.is_empty() {
        bail!("the scene has no robot poses");
    }
    let ox = ((x0 - half) / res).floor();
    let oy = ((y0 - half) / res).floor();
    let cols = ((x1 + half) / res).ceil() - ox;
    let rows = ((y1 + half) / res).ceil() - oy;
    Ok(GridSpec::new(res, cols as usize, rows as usize, [ox * res, oy * res])?)
}

fn cmd_simulate(scene_path: &Path, out: &Path, format: ScanFormat, common: &Common) -> Result<()> {
    let config = common.config()?;
    common.install_threads()?;
    let scene = load_scene(scene_path)?;
    let sim = simulate(&scene, &config.sensor, config.seed)?;
    let scan_dir = out.join("scans");
    fs::create_dir_all(&scan_dir).with_context(|| format!("creating {}", scan_dir.display()))?;
    for (k, scan) in sim.scans.iter().enumerate() {
        io::write_scan(&scan_dir.join(format!("{k:06}.{}", format.extension())), format, scan)?;
    }
    io::write_poses(&out.join("poses.txt"), &sim.poses)?;
    let spec = truth_window(&sim.poses, &config)?;
    let params = TruthParams {
        tau_h: config.completion.tau_h,
        ..TruthParams::default()
    };
    let gt = ground_truth(&scene, &spec, &params);
    io::write_truth(&gt, &out.join("truth.gt"))?;
    println!(
        "{} scans, truth grid {}x{} at {} m ({} collision cells) -> {}",
        sim.scans.len(),
        spec.cols,
        spec.rows,
        spec.resolution,
        gt.collision_count(),
        out.display()
    );
    Ok(())
}

fn read_sequence(scans: &Path, poses: &Path, format: ScanFormat) -> Result<(Vec<PathBuf>, Vec<Pose>)> {
    let files = io::scan_files(scans, format)?;
    let poses = io::read_poses(poses)?;
    if files.len() != poses.len() {
        bail!(
            "{} scan files in {} but {} poses",
            files.len(),
            scans.display(),
            poses.len()
        );
    }
    Ok((files, poses))
}

fn map_files(config: &PipelineConfig, files: &[PathBuf], poses: &[Pose], format: ScanFormat) -> Result<PipelineOutput> {
    let scans = files
        .iter()
        .enumerate()
        .map(|(k, f)| io::read_scan(f, format, k as u64));
    Ok(run_pipeline(config.clone(), scans, poses)?)
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

fn stages(t: &StageTimings) -> [(&'static str, f64); 7] {
    [
        ("projection", ms(t.projection)),
        ("steppability", ms(t.steppability)),
        ("reprojection", ms(t.reprojection)),
        ("completion", ms(t.completion)),
        ("fusion", ms(t.fusion)),
        ("local", ms(t.local())),
        ("total", ms(t.total())),
    ]
}

fn cmd_map(
    scans: &Path,
    poses: &Path,
    out: &Path,
    format: ScanFormat,
    timings: Option<&Path>,
    common: &Common,
) -> Result<()> {
    let config = common.config()?;
    common.install_threads()?;
    let (files, poses) = read_sequence(scans, poses, format)?;
    let output = map_files(&config, &files, &poses, format)?;
    io::export_map(&output.map, out)?;
    if let Some(path) = timings {
        let mut csv = String::from(
            "scan,projection_ms,steppability_ms,reprojection_ms,completion_ms,fusion_ms,local_ms,total_ms,observed,inferred,initialized,accepted,rejected\n",
        );
        for r in &output.reports {
            let t: Vec<String> = stages(&r.timings).iter().map(|(_, v)| format!("{v:.6}")).collect();
            csv.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.index,
                t.join(","),
                r.observed,
                r.inferred,
                r.update.initialized,
                r.update.accepted,
                r.update.rejected.len()
            ));
        }
        fs::write(path, csv).with_context(|| format!("writing {}", path.display()))?;
    }
    let n = output.reports.len().max(1) as f64;
    let total: f64 = output.reports.iter().map(|r| ms(r.timings.total())).sum();
    let rejected: usize = output.reports.iter().map(|r| r.update.rejected.len()).sum();
    println!(
        "{} scans, {} cells, {rejected} rejected updates, mean {:.3} ms per scan -> {}",
        output.reports.len(),
        output.map.len(),
        total / n,
        out.display()
    );
    Ok(())
}

fn cmd_eval(
    map: &Path,
    truth: &Path,
    out: Option<&Path>,
    rule: Option<DecisionRule>,
    tau: Option<f64>,
    common: &Common,
) -> Result<()> {
    let mut config = common.config()?;
    if let Some(rule) = rule {
        config.eval.decision_rule = rule;
    }
    if let Some(tau) = tau {
        config.eval.decision_tau = tau;
    }
    config.validate()?;
    let map = io::import_map(map)?;
    let gt = io::read_truth(truth)?;
    let snapshot = map.snapshot(&gt.spec)?;
    let report = evaluate(&snapshot, &gt, &config.eval)?;
    print!("{}", report.to_text());
    if let Some(path) = out {
        fs::write(path, report.to_key_values()).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn cmd_render(map: &Path, out: &Path, layers: &[Layer]) -> Result<()> {
    let map = io::import_map(map)?;
    let Some(window) = map.bounds() else {
        bail!("the map is empty");
    };
    let snapshot = map.snapshot(&window)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let layers = if layers.is_empty() { &Layer::ALL[..] } else { layers };
    for layer in layers {
        let path = out.join(format!("{}.ppm", layer.name()));
        io::write_layer(&snapshot, *layer, &path)?;
        println!("{}", path.display());
    }
    Ok(())
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = (p / 100.0 * (sorted.len() - 1) as f64).round() as usize;
    sorted[rank]
}

fn cmd_bench(
    scene: Option<&Path>,
    files: Option<(PathBuf, PathBuf)>,
    format: ScanFormat,
    repeat: usize,
    out: Option<&Path>,
    common: &Common,
) -> Result<()> {
    let config = common.config()?;
    common.install_threads()?;
    if repeat == 0 {
        bail!("--repeat must be at least 1");
    }
    let (scans, poses): (Vec<RangeScan>, Vec<Pose>) = match (scene, files) {
        (Some(path), _) => {
            let sim = simulate(&load_scene(path)?, &config.sensor, config.seed)?;
            (sim.scans, sim.poses)
        }
        (None, Some((scans, poses))) => {
            let (files, poses) = read_sequence(&scans, &poses, format)?;
            let scans = files
                .iter()
                .enumerate()
                .map(|(k, f)| io::read_scan(f, format, k as u64))
                .collect::<trip_core::Result<_>>()?;
            (scans, poses)
        }
        (None, None) => bail!("bench needs --scene or --scans with --poses"),
    };
    let mut samples: Vec<Vec<f64>> = vec![Vec::new(); 7];
    for _ in 0..repeat {
        let output = run_pipeline(config.clone(), scans.iter().cloned().map(Ok), &poses)?;
        for r in &output.reports {
            for (k, (_, v)) in stages(&r.timings).iter().enumerate() {
                samples[k].push(*v);
            }
        }
    }
    let names = stages(&StageTimings::default()).map(|(n, _)| n);
    let reference = if config.grid.extent <= PipelineConfig::narrow().grid.extent {
        REFERENCE_NARROW_MS
    } else {
        REFERENCE_OPEN_MS
    };
    let mut report = String::new();
    println!(
        "{} scans x {repeat} runs, {} threads",
        scans.len(),
        rayon::current_num_threads()
    );
    println!(
        "{:<13} {:>9} {:>9} {:>9} {:>9}",
        "stage (ms)", "mean", "p50", "p90", "p99"
    );
    for (name, values) in names.iter().zip(samples.iter_mut()) {
        values.sort_by(f64::total_cmp);
        let mean = values.iter().sum::<f64>() / values.len().max(1) as f64;
        let (p50, p90, p99) = (
            percentile(values, 50.0),
            percentile(values, 90.0),
            percentile(values, 99.0),
        );
        println!("{name:<13} {mean:>9.3} {p50:>9.3} {p90:>9.3} {p99:>9.3}");
        report.push_str(&format!(
            "{name}_mean_ms={mean}\n{name}_p50_ms={p50}\n{name}_p90_ms={p90}\n{name}_p99_ms={p99}\n"
        ));
    }
    let mean_total = samples[6].iter().sum::<f64>() / samples[6].len().max(1) as f64;
    println!(
        "mean total {mean_total:.3} ms; reference {reference} ms, budget {BUDGET_MS} ms ({})",
        if mean_total <= BUDGET_MS { "within" } else { "over" }
    );
    report.push_str(&format!("reference_total_ms={reference}\nbudget_ms={BUDGET_MS}\n"));
    if let Some(path) = out {
        fs::write(path, report).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}
