//! Command-line definitions and the small helpers every subcommand shares.

use std::fs::{self, File};
use std::io::{self, BufRead, BufReader};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use railguard_core::calibration::Calibration;
use railguard_core::ingest::ClassLabel;
use railguard_core::metrics::TableKind;
use railguard_core::pipeline::{DistanceMode, PipelineConfig};

use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "railguard", version, about = "Track proximity alerts from per-frame detections")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a detection stream through the alert pipeline.
    Analyze(AnalyzeArgs),
    /// Score predictions against ground truth.
    Evaluate(EvaluateArgs),
    /// Generate a synthetic detection stream with exact ground truth.
    Simulate(SimulateArgs),
    /// Render a method comparison table.
    Report(ReportArgs),
    /// Accept detection streams over TCP (and optionally HTTP).
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Center,
    Polyline,
}

impl From<ModeArg> for DistanceMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Center => DistanceMode::CenterToCenter,
            ModeArg::Polyline => DistanceMode::CenterToPolyline,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ClassArg {
    Track,
    Person,
    Object,
}

impl From<ClassArg> for ClassLabel {
    fn from(c: ClassArg) -> Self {
        match c {
            ClassArg::Track => ClassLabel::Track,
            ClassArg::Person => ClassLabel::Person,
            ClassArg::Object => ClassLabel::Object,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TableArg {
    Track,
    Object,
}

impl From<TableArg> for TableKind {
    fn from(t: TableArg) -> Self {
        match t {
            TableArg::Track => TableKind::TrackDetection,
            TableArg::Object => TableKind::ObjectDetection,
        }
    }
}

/// Calibration and alerting knobs shared by `analyze` and `serve`.
#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    /// Calibration JSON. Without it pixels are read as meters.
    #[arg(long, value_name = "PATH")]
    pub calibration: Option<PathBuf>,
    #[arg(long, value_name = "FLOAT", default_value_t = 1.0)]
    pub threshold_m: f64,
    /// Consecutive breach frames before an alert is raised.
    #[arg(long, value_name = "INT", default_value_t = 3)]
    pub debounce: u32,
    /// Consecutive clear frames before an active alert is cleared.
    #[arg(long, value_name = "INT", default_value_t = 5)]
    pub release: u32,
    #[arg(long, value_name = "FLOAT", default_value_t = 0.2)]
    pub hysteresis_m: f64,
    #[arg(long, value_enum, default_value_t = ModeArg::Center)]
    pub distance_mode: ModeArg,
    #[arg(long, value_name = "FLOAT", default_value_t = 0.25)]
    pub min_track_confidence: f64,
    #[arg(long, value_name = "FLOAT", default_value_t = 0.25)]
    pub min_object_confidence: f64,
}

impl PipelineArgs {
    pub fn config(&self) -> CliResult<PipelineConfig> {
        let cfg = PipelineConfig {
            threshold_m: self.threshold_m,
            min_track_confidence: self.min_track_confidence,
            min_object_confidence: self.min_object_confidence,
            debounce_frames: self.debounce,
            release_frames: self.release,
            hysteresis_m: self.hysteresis_m,
            distance_mode: self.distance_mode.into(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn check_paths(&self) -> CliResult<()> {
        if let Some(p) = &self.calibration {
            require_file(p, "--calibration")?;
        }
        Ok(())
    }

    pub fn calibration(&self) -> CliResult<Calibration> {
        load_calibration(self.calibration.as_deref())
    }
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Detection stream, or `-` for stdin.
    #[arg(long, value_name = "PATH|-")]
    pub detections: String,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Also write one status line per classified object.
    #[arg(long)]
    pub emit_status: bool,
    /// Write alerts.jsonl, statuses.jsonl and summary.json here instead of stdout.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Per-frame overlay geometry (JSON lines) for external renderers.
    #[arg(long, value_name = "PATH")]
    pub overlay: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Predicted detections.
    #[arg(long, value_name = "PATH")]
    pub detections: PathBuf,
    /// Ground truth in the detection format, every confidence 1.0.
    #[arg(long, value_name = "PATH")]
    pub gt: PathBuf,
    #[arg(long, value_name = "FLOAT", default_value_t = 0.5)]
    pub iou: f64,
    #[arg(long, value_enum, default_value_t = ClassArg::Person)]
    pub class: ClassArg,
    /// Write metrics.json and the curve CSVs here instead of printing the JSON.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Comparison rows (CSV) to render next to the metrics; needs --out.
    #[arg(long, value_name = "PATH", requires = "out")]
    pub table_rows: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = TableArg::Object)]
    pub table: TableArg,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["scenario", "preset", "random_seed"]))]
pub struct SimulateArgs {
    /// Scenario JSON.
    #[arg(long, value_name = "PATH")]
    pub scenario: Option<PathBuf>,
    /// Built-in scenario.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Noise-free random scenario from this seed.
    #[arg(long, value_name = "SEED")]
    pub random_seed: Option<u64>,
    /// Threshold for the breach-interval document.
    #[arg(long, value_name = "FLOAT", default_value_t = 1.0)]
    pub threshold_m: f64,
    /// Write stream.jsonl, ground_truth.jsonl, breaches.json, scenario.json and
    /// calibration.json here. Without it the stream goes to stdout.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    LinearApproach,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Text,
    Csv,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long, value_enum)]
    pub table: TableArg,
    /// CSV with a header row and columns: method, accuracy, precision-recall,
    /// and computational time or F1.
    #[arg(long, value_name = "PATH")]
    pub rows: PathBuf,
    #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
    pub format: ReportFormat,
    /// Output file; stdout when omitted.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Newline-delimited TCP endpoint.
    #[arg(long, value_name = "HOST:PORT")]
    pub listen: String,
    /// Optional HTTP endpoint taking line batches.
    #[arg(long, value_name = "HOST:PORT")]
    pub http_listen: Option<String>,
    /// POST every alert here as JSON.
    #[arg(long, value_name = "URL")]
    pub webhook: Option<String>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Pending webhook deliveries before ingestion waits.
    #[arg(long, value_name = "INT", default_value_t = 1024)]
    pub queue_capacity: usize,
}

pub fn require_file(path: &Path, flag: &str) -> CliResult<()> {
    match fs::metadata(path) {
        Ok(m) if m.is_file() => Ok(()),
        Ok(_) => Err(CliError::Usage(format!("{flag}: `{}` is not a file", path.display()))),
        Err(e) => Err(CliError::Usage(format!("{flag}: cannot read `{}`: {e}", path.display()))),
    }
}

pub fn prepare_out_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Usage(format!("--out: cannot create `{}`: {e}", dir.display())))
}

pub fn open_input(spec: &str) -> CliResult<Box<dyn BufRead>> {
    if spec == "-" {
        return Ok(Box::new(BufReader::new(io::stdin().lock())));
    }
    let file = File::open(spec).map_err(|e| CliError::Usage(format!("cannot read `{spec}`: {e}")))?;
    Ok(Box::new(BufReader::new(file)))
}

pub fn load_calibration(path: Option<&Path>) -> CliResult<Calibration> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::io(format!("reading {}", p.display()), e))?;
            Ok(Calibration::parse(&text)?)
        }
        None => {
            // Printed regardless of RAILGUARD_LOG: results are in pixel units.
            eprintln!("warning: no --calibration given: pixel distances are treated as meters (meters_per_pixel = 1.0)");
            Ok(Calibration::default())
        }
    }
}
