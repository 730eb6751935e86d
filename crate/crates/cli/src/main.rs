//! Command-line frontend: `synth`, `track`, `ensemble`, `eval`, `ablate`.
//!
//! Exit codes: 0 on success, 1 on validation/config/parse errors, 2 on
//! operating-system I/O failures.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use motkit_core::ablate::{ablation_csv, run_ablation, AblateError, GridSpec};
use motkit_core::domain::TrackerConfig;
use motkit_core::ensemble::{fuse_streams, EnsembleConfig};
use motkit_core::eval::{evaluate, report_json, EvalConfig, MetricsReport, MotarConvention};
use motkit_core::io::{self, FileError};
use motkit_core::pipeline::run_sequences;
use motkit_core::synth::{generate, scenario_suite, ScenarioSpec, Suite};

#[derive(Parser)]
#[command(
    name = "motkit",
    about = "Confidence-based multi-object tracking toolkit",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scenario: ground-truth and detection files.
    Synth(SynthArgs),
    /// Track a detection file and write the track results.
    Track(TrackArgs),
    /// Fuse two track files into one merged stream.
    Ensemble(EnsembleArgs),
    /// Evaluate a track file against ground truth.
    Eval(EvalArgs),
    /// Grid-search tracker hyperparameters and tabulate the metrics.
    Ablate(AblateArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Named scenario suite: easy, occlusion, clutter, or crossing.
    #[arg(long, conflicts_with = "spec")]
    suite: Option<String>,
    /// Scenario spec file (TOML).
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Output directory for gt.jsonl and det.jsonl.
    #[arg(long)]
    out_dir: PathBuf,
    /// Replace the spec seed (suites offset it per scenario).
    #[arg(long)]
    seed_override: Option<u64>,
}

#[derive(Args)]
struct TrackArgs {
    /// Tracker configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Detection file to track.
    detections: PathBuf,
    /// Output track file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EnsembleArgs {
    /// Ensemble configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Track file of the first stream.
    tracks_a: PathBuf,
    /// Track file of the second stream.
    tracks_b: PathBuf,
    /// Output track file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Ground-truth file.
    gt: PathBuf,
    /// Track file to score.
    tracks: PathBuf,
    /// Center-distance match threshold in meters.
    #[arg(long, default_value_t = 2.0)]
    dist_th: f64,
    /// Number of recall values for the AMOTA sweep.
    #[arg(long, default_value_t = 40)]
    recall_points: usize,
    /// MOTAR sign convention.
    #[arg(long, default_value = "devkit", value_parser = parse_convention)]
    motar_convention: MotarConvention,
    /// Metrics report (JSON).
    #[arg(long)]
    out: PathBuf,
    /// Optional flat CSV of the per-recall curve.
    #[arg(long)]
    curve_out: Option<PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    /// Grid file (TOML): base config plus axis arrays.
    #[arg(long)]
    grid: PathBuf,
    /// Detection file to track per cell.
    detections: PathBuf,
    /// Ground-truth file.
    gt: PathBuf,
    /// Output CSV, one row per grid cell.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2.0)]
    dist_th: f64,
    #[arg(long, default_value_t = 40)]
    recall_points: usize,
    #[arg(long, default_value = "devkit", value_parser = parse_convention)]
    motar_convention: MotarConvention,
}

fn parse_convention(s: &str) -> Result<MotarConvention, String> {
    match s {
        "devkit" => Ok(MotarConvention::Devkit),
        "paper" => Ok(MotarConvention::Paper),
        other => Err(format!(
            "unknown MOTAR convention `{other}` (use devkit or paper)"
        )),
    }
}

enum CliError {
    /// Bad content or configuration.
    Validation(String),
    /// Operating-system level failure.
    Io(String),
}

impl From<FileError> for CliError {
    fn from(e: FileError) -> Self {
        match e {
            FileError::Parse { .. } => CliError::Validation(e.to_string()),
            FileError::Io { .. } => CliError::Io(e.to_string()),
        }
    }
}

impl From<AblateError> for CliError {
    fn from(e: AblateError) -> Self {
        CliError::Validation(e.to_string())
    }
}

fn main() -> ExitCode {
    // Usage errors are validation errors (exit 1); help/version exit 0.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Track(args) => cmd_track(args),
        Command::Ensemble(args) => cmd_ensemble(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Ablate(args) => cmd_ablate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn cmd_synth(args: SynthArgs) -> Result<(), CliError> {
    let mut specs: Vec<ScenarioSpec> = match (&args.suite, &args.spec) {
        (Some(name), None) => {
            let suite = Suite::parse(name)
                .ok_or_else(|| CliError::Validation(format!("unknown suite `{name}`")))?;
            scenario_suite(suite)
        }
        (None, Some(path)) => vec![io::load_toml(path)?],
        _ => {
            return Err(CliError::Validation(
                "exactly one of --suite or --spec is required".into(),
            ))
        }
    };
    if let Some(seed) = args.seed_override {
        for (i, spec) in specs.iter_mut().enumerate() {
            spec.seed = seed + i as u64;
        }
    }
    let mut gt_streams = BTreeMap::new();
    let mut det_streams = BTreeMap::new();
    for spec in &specs {
        let (gt, dets) = generate(spec).map_err(|e| CliError::Validation(e.to_string()))?;
        gt_streams.insert(spec.name.clone(), gt);
        det_streams.insert(spec.name.clone(), dets);
    }
    if !args.out_dir.is_dir() {
        return Err(CliError::Io(format!(
            "output directory {} does not exist",
            args.out_dir.display()
        )));
    }
    io::write_gt(&args.out_dir.join("gt.jsonl"), &gt_streams)?;
    io::write_detections(&args.out_dir.join("det.jsonl"), &det_streams)?;
    for spec in &specs {
        println!("{}: seed {}", spec.name, spec.seed);
    }
    Ok(())
}

fn load_tracker_config(path: &Path) -> Result<TrackerConfig, CliError> {
    let cfg: TrackerConfig = io::load_toml(path)?;
    cfg.validate().map_err(CliError::Validation)?;
    Ok(cfg)
}

fn cmd_track(args: TrackArgs) -> Result<(), CliError> {
    let cfg = load_tracker_config(&args.config)?;
    let detections = io::read_detections(&args.detections)?;
    let tracks =
        run_sequences(&cfg, &detections).map_err(|e| CliError::Validation(e.to_string()))?;
    io::write_tracks(&args.out, &tracks)?;
    for (seq, frames) in &tracks {
        let mut ids = std::collections::BTreeSet::new();
        let mut rows = 0usize;
        for f in frames {
            for t in &f.tracks {
                ids.insert(t.id);
                rows += 1;
            }
        }
        let label = if seq.is_empty() { "(default)" } else { seq };
        println!(
            "{label}: {} tracklets, {rows} emitted boxes over {} frames",
            ids.len(),
            frames.len()
        );
    }
    Ok(())
}

fn cmd_ensemble(args: EnsembleArgs) -> Result<(), CliError> {
    let cfg: EnsembleConfig = io::load_toml(&args.config)?;
    cfg.validate().map_err(CliError::Validation)?;
    let a = io::read_tracks(&args.tracks_a)?;
    let b = io::read_tracks(&args.tracks_b)?;
    let mut sequences: Vec<String> = a.keys().chain(b.keys()).cloned().collect();
    sequences.sort();
    sequences.dedup();
    let mut merged = BTreeMap::new();
    for seq in sequences {
        let empty = Vec::new();
        let fa = a.get(&seq).unwrap_or(&empty);
        let fb = b.get(&seq).unwrap_or(&empty);
        let fused = fuse_streams(&cfg, fa, fb).map_err(|e| CliError::Validation(e.to_string()))?;
        merged.insert(seq, fused);
    }
    io::write_tracks(&args.out, &merged)?;
    let boxes: usize = merged
        .values()
        .flat_map(|f| f.iter())
        .map(|f| f.tracks.len())
        .sum();
    println!("merged {} sequences, {boxes} boxes", merged.len());
    Ok(())
}

fn render_table(report: &MetricsReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<14} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}\n",
        "class", "AMOTA", "MOTA", "FP", "FN", "IDS", "GT"
    ));
    for (class, c) in &report.per_class {
        out.push_str(&format!(
            "{:<14} {:>8.4} {:>8.4} {:>8} {:>8} {:>8} {:>8}\n",
            class, c.amota, c.mota, c.fp, c.fn_count, c.ids, c.gt
        ));
    }
    let m = &report.mean;
    out.push_str(&format!(
        "{:<14} {:>8.4} {:>8.4} {:>8} {:>8} {:>8} {:>8}\n",
        "mean", m.amota, m.mota, m.fp, m.fn_count, m.ids, m.gt
    ));
    out
}

fn curve_csv(report: &MetricsReport) -> String {
    let mut out = String::from("class,recall,threshold,motar,achieved_recall,tp,fp,fn,ids\n");
    for (class, c) in &report.per_class {
        for p in &c.curve {
            let threshold = p.threshold.map_or(String::new(), |t| t.to_string());
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                class,
                p.recall,
                threshold,
                p.motar,
                p.achieved_recall,
                p.counts.tp,
                p.counts.fp,
                p.counts.fn_count,
                p.counts.ids
            ));
        }
    }
    out
}

fn write_text(path: &Path, content: &str) -> Result<(), CliError> {
    std::fs::write(path, content)
        .map_err(|e| CliError::Io(format!("i/o failure on {}: {e}", path.display())))
}

fn cmd_eval(args: EvalArgs) -> Result<(), CliError> {
    let gt = io::read_gt(&args.gt)?;
    let tracks = io::read_tracks(&args.tracks)?;
    let cfg = EvalConfig {
        dist_th: args.dist_th,
        recall_points: args.recall_points,
        convention: args.motar_convention,
    };
    let report = evaluate(&gt, &tracks, &cfg).map_err(|e| CliError::Validation(e.to_string()))?;
    write_text(&args.out, &report_json(&report))?;
    if let Some(curve_path) = &args.curve_out {
        write_text(curve_path, &curve_csv(&report))?;
    }
    print!("{}", render_table(&report));
    Ok(())
}

fn cmd_ablate(args: AblateArgs) -> Result<(), CliError> {
    let grid: GridSpec = io::load_toml(&args.grid)?;
    grid.base.validate().map_err(CliError::Validation)?;
    let detections = io::read_detections(&args.detections)?;
    let gt = io::read_gt(&args.gt)?;
    let eval_cfg = EvalConfig {
        dist_th: args.dist_th,
        recall_points: args.recall_points,
        convention: args.motar_convention,
    };
    let rows = run_ablation(&grid, &detections, &gt, &eval_cfg)?;
    write_text(&args.out, &ablation_csv(&rows))?;
    println!(
        "{} grid cells written to {}",
        rows.len(),
        args.out.display()
    );
    Ok(())
}
