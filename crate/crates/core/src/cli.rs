//! `axlecount` command line: `simulate`, `count`, `evaluate`, `plot`.
//!
//! Settings come from defaults, then an optional TOML file (`--config`), then
//! flags, each layer overriding the previous one. Exit codes: 0 success,
//! 1 usage or configuration error, 2 data or I/O error.

use std::ffi::OsString;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::association::AssociationConfig;
use crate::detections::{self, StreamError};
use crate::par::{self, Execution};
use crate::pipeline::{self, Flag, Metrics, PipelineConfig, Summary, VehicleResult};
use crate::plot;
use crate::simulator::{self, Difficulty, GroundTruth, NoiseProfile};
use crate::tracker::{TrackId, TrackerConfig};
use crate::trax::TraxParams;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

pub const SCENARIO_SUFFIX: &str = ".scenario.json";
pub const STREAM_SUFFIX: &str = ".stream.jsonl";
pub const TRUTH_SUFFIX: &str = ".truth.json";
pub const RESULTS_SUFFIX: &str = ".results.jsonl";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {message}")]
    Data { path: PathBuf, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data { .. } => EXIT_DATA,
        }
    }

    fn data(path: &Path, message: impl ToString) -> Self {
        CliError::Data {
            path: path.to_path_buf(),
            message: message.to_string(),
        }
    }
}

/// Everything a run can be configured with.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub noise: NoiseProfile,
    pub tracker: TrackerConfig,
    pub association: AssociationConfig,
    pub trax: TraxParams,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            tracker: self.tracker,
            association: self.association,
            trax: self.trax,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "axlecount",
    version,
    about = "Axle counting from vehicle and tire detections"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate scenario, detection stream and ground-truth files.
    Simulate(SimulateArgs),
    /// Count axles in detection streams.
    Count(CountArgs),
    /// Score results against ground truth.
    Evaluate(EvaluateArgs),
    /// Draw the tire projection of one vehicle as SVG.
    Plot(PlotArgs),
}

#[derive(Debug, Args, Default)]
pub struct ConfigArgs {
    /// TOML run configuration.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub match_window: Option<f64>,
    #[arg(long)]
    pub max_gap: Option<u32>,
    #[arg(long)]
    pub min_track_len: Option<usize>,
    #[arg(long)]
    pub iou_gate: Option<f64>,
    #[arg(long)]
    pub min_hits: Option<u32>,
    #[arg(long)]
    pub max_age: Option<u32>,
    #[arg(long)]
    pub tire_iou_threshold: Option<f64>,
    #[arg(long)]
    pub motion_window: Option<usize>,
    #[arg(long)]
    pub min_motion: Option<f64>,
    #[arg(long)]
    pub frame_width: Option<f64>,
    #[arg(long)]
    pub frame_height: Option<f64>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        set(&mut cfg.trax.c, self.c);
        set(&mut cfg.trax.match_window, self.match_window);
        set(&mut cfg.trax.max_gap, self.max_gap);
        set(&mut cfg.trax.min_track_len, self.min_track_len);
        set(&mut cfg.tracker.iou_gate, self.iou_gate);
        set(&mut cfg.tracker.min_hits, self.min_hits);
        set(&mut cfg.tracker.max_age, self.max_age);
        set(
            &mut cfg.association.tire_iou_threshold,
            self.tire_iou_threshold,
        );
        set(&mut cfg.association.motion_window, self.motion_window);
        set(&mut cfg.association.min_motion, self.min_motion);
        set(&mut cfg.association.frame_width, self.frame_width);
        set(&mut cfg.association.frame_height, self.frame_height);
        // Surface invalid values as configuration errors before any work.
        pipeline::Pipeline::new(cfg.pipeline()).map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub difficulty: Difficulty,
    #[arg(long, default_value_t = 1)]
    pub n: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub pos_sigma: Option<f64>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub false_positive_rate: Option<f64>,
    #[arg(long)]
    pub occluders: Option<usize>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct CountArgs {
    /// Stream files, or directories searched for `*.stream.jsonl`.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Directory for `*.results.jsonl`; defaults to each input's directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Results file or directory of `*.results.jsonl`.
    pub results: PathBuf,
    /// Truth file or directory of `*.truth.json`.
    pub truth: PathBuf,
    /// Write the metrics summary as JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Results file.
    pub results: PathBuf,
    #[arg(long)]
    pub track_id: TrackId,
    /// SVG output path.
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `args` (program name first) and runs the command, writing the
/// human-readable report to `stdout` and warnings to `stderr`. Returns the
/// process exit code.
pub fn main_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK {
                stdout.write_all(text.as_bytes())
            } else {
                stderr.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match execute(cli.command, stdout, stderr) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(
    command: Command,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<(), CliError> {
    match command {
        Command::Simulate(a) => cmd_simulate(&a, stdout),
        Command::Count(a) => cmd_count(&a, stdout),
        Command::Evaluate(a) => cmd_evaluate(&a, stdout, stderr),
        Command::Plot(a) => cmd_plot(&a, stdout),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::data(path, e))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::data(path, e))
}

fn to_json_pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s
}

pub fn cmd_simulate(a: &SimulateArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let mut cfg = a.config.resolve()?;
    set(&mut cfg.seed, a.seed);
    set(&mut cfg.noise.pos_sigma, a.pos_sigma);
    set(&mut cfg.noise.dropout_prob, a.dropout);
    set(&mut cfg.noise.false_positive_rate, a.false_positive_rate);
    set(&mut cfg.noise.occluders, a.occluders);
    if a.out.is_some() {
        cfg.out.clone_from(&a.out);
    }
    if a.n == 0 {
        return Err(CliError::Usage("--n must be at least 1".into()));
    }
    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("."));
    create_dir(&out)?;

    let suite = simulator::build_suite(a.difficulty, a.n, cfg.seed);
    for (i, clean) in suite.iter().enumerate() {
        let scenario = simulator::apply_noise(clean, &cfg.noise);
        let (frames, truth) = simulator::generate(&scenario)
            .map_err(|e| CliError::data(&out, format!("scenario {i}: {e}")))?;
        let stem = format!("{}_{i:04}", a.difficulty);
        write_file(
            &out.join(format!("{stem}{SCENARIO_SUFFIX}")),
            to_json_pretty(&scenario).as_bytes(),
        )?;
        write_file(
            &out.join(format!("{stem}{STREAM_SUFFIX}")),
            detections::to_string(&frames).as_bytes(),
        )?;
        write_file(
            &out.join(format!("{stem}{TRUTH_SUFFIX}")),
            to_json_pretty(&truth).as_bytes(),
        )?;
    }
    let _ = writeln!(
        stdout,
        "wrote {} {} scenario(s) to {}",
        a.n,
        a.difficulty,
        out.display()
    );
    Ok(())
}

/// Files under `path` ending in `suffix`, sorted; `path` itself if it is a file.
fn collect(path: &Path, suffix: &str) -> Result<Vec<PathBuf>, CliError> {
    if !path.is_dir() {
        if !path.exists() {
            return Err(CliError::data(path, "no such file or directory"));
        }
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(path)
        .map_err(|e| CliError::data(path, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.to_string_lossy().ends_with(suffix))
        .collect();
    files.sort();
    Ok(files)
}

/// File name with `suffix` (or, failing that, the last extension) removed.
fn stem(path: &Path, suffix: &str) -> String {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    match name.strip_suffix(suffix) {
        Some(s) => s.to_string(),
        None => path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or(name),
    }
}

fn count_stream(path: &Path, config: &PipelineConfig) -> Result<Vec<VehicleResult>, CliError> {
    let file = fs::File::open(path).map_err(|e| CliError::data(path, e))?;
    let mut p = pipeline::Pipeline::new(*config).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut out = Vec::new();
    for frame in detections::StreamReader::new(BufReader::new(file)) {
        let frame = frame.map_err(|e: StreamError| CliError::data(path, e))?;
        out.extend(p.push_frame(&frame).map_err(|e| CliError::data(path, e))?);
    }
    out.extend(p.finish().map_err(|e| CliError::data(path, e))?);
    Ok(out)
}

pub fn write_results<W: Write>(mut w: W, results: &[VehicleResult]) -> std::io::Result<()> {
    for r in results {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn read_results(path: &Path) -> Result<Vec<VehicleResult>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::data(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| CliError::data(path, format!("line {}: {e}", i + 1)))
        })
        .collect()
}

pub fn cmd_count(a: &CountArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let cfg = a.config.resolve()?;
    let out_dir = a.out.clone().or(cfg.out.clone());
    let mut inputs = Vec::new();
    for p in &a.inputs {
        inputs.extend(collect(p, STREAM_SUFFIX)?);
    }
    if let Some(d) = &out_dir {
        create_dir(d)?;
    }
    let pipeline_cfg = cfg.pipeline();
    let outcomes = par::map(Execution::Parallel, &inputs, |path| {
        let results = count_stream(path, &pipeline_cfg)?;
        let dir = out_dir
            .clone()
            .unwrap_or_else(|| path.parent().map(Path::to_path_buf).unwrap_or_default());
        let target = dir.join(format!("{}{RESULTS_SUFFIX}", stem(path, STREAM_SUFFIX)));
        let file = fs::File::create(&target).map_err(|e| CliError::data(&target, e))?;
        write_results(BufWriter::new(file), &results).map_err(|e| CliError::data(&target, e))?;
        Ok((target, results.len()))
    });
    for o in outcomes {
        let (target, n) = o?;
        let _ = writeln!(stdout, "{}: {n} vehicle(s)", target.display());
    }
    Ok(())
}

fn read_truth(path: &Path) -> Result<GroundTruth, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::data(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::data(path, e))
}

/// Metrics summary written by `evaluate --out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub summary: Summary,
    pub streams: Vec<StreamReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamReport {
    pub name: String,
    pub metrics: Metrics,
}

pub fn format_table(summary: &Summary) -> String {
    let mut s = format!(
        "{:<8} {:>8} {:>7} {:>7}\n",
        "tier", "vehicles", "Mode", "TRAX"
    );
    let mut row = |name: &str, t: &pipeline::Tally| {
        s.push_str(&format!(
            "{name:<8} {:>8} {:>7.3} {:>7.3}\n",
            t.vehicles,
            t.accuracy_mode(),
            t.accuracy_trax()
        ));
    };
    for (d, t) in &summary.tiers {
        row(d.as_str(), t);
    }
    if summary.tiers.len() > 1 {
        row("all", &summary.total());
    }
    s
}

pub fn cmd_evaluate(
    a: &EvaluateArgs,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<(), CliError> {
    let pairs: Vec<(String, PathBuf, PathBuf)> = if a.results.is_dir() || a.truth.is_dir() {
        if !(a.results.is_dir() && a.truth.is_dir()) {
            return Err(CliError::Usage(
                "results and truth must both be files or both be directories".into(),
            ));
        }
        let truths = collect(&a.truth, TRUTH_SUFFIX)?;
        let results = collect(&a.results, RESULTS_SUFFIX)?;
        let mut pairs = Vec::new();
        for t in &truths {
            let name = stem(t, TRUTH_SUFFIX);
            match results.iter().find(|r| stem(r, RESULTS_SUFFIX) == name) {
                Some(r) => pairs.push((name, r.clone(), t.clone())),
                None => {
                    let _ = writeln!(
                        stderr,
                        "warning: {name}: no results file; all vehicles count as missed"
                    );
                    pairs.push((name, PathBuf::new(), t.clone()));
                }
            }
        }
        for r in &results {
            let name = stem(r, RESULTS_SUFFIX);
            if !truths.iter().any(|t| stem(t, TRUTH_SUFFIX) == name) {
                let _ = writeln!(stderr, "warning: {name}: no truth file; skipped");
            }
        }
        pairs
    } else {
        vec![(
            stem(&a.truth, TRUTH_SUFFIX),
            a.results.clone(),
            a.truth.clone(),
        )]
    };

    let mut streams = Vec::with_capacity(pairs.len());
    for (name, results_path, truth_path) in pairs {
        let truth = read_truth(&truth_path)?;
        let results = if results_path.as_os_str().is_empty() {
            Vec::new()
        } else {
            read_results(&results_path)?
        };
        let metrics = pipeline::evaluate(&results, &truth);
        for f in &metrics.flags {
            let _ = match f {
                Flag::Unmatched { truth_id } => {
                    writeln!(
                        stderr,
                        "warning: {name}: true vehicle {truth_id} has no matching result"
                    )
                }
                Flag::Extra { track_id } => {
                    writeln!(
                        stderr,
                        "warning: {name}: track {track_id} matches no true vehicle"
                    )
                }
            };
        }
        streams.push(StreamReport { name, metrics });
    }
    let summary = Summary::from_metrics(streams.iter().map(|s| &s.metrics));
    let _ = stdout.write_all(format_table(&summary).as_bytes());
    if let Some(out) = &a.out {
        write_file(
            out,
            to_json_pretty(&EvaluationReport { summary, streams }).as_bytes(),
        )?;
    }
    Ok(())
}

pub fn cmd_plot(a: &PlotArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let results = read_results(&a.results)?;
    let Some(r) = results.iter().find_map(|r| r.find(a.track_id)) else {
        return Err(CliError::data(
            &a.results,
            format!("no vehicle with track id {}", a.track_id),
        ));
    };
    let title = format!(
        "track {} ({}): {} axle(s)",
        r.track_id, r.class, r.trax_axles
    );
    write_file(&a.out, plot::render_svg(&title, &r.tracks).as_bytes())?;
    let _ = writeln!(stdout, "wrote {}", a.out.display());
    Ok(())
}
