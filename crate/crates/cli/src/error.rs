//! Failure kinds and the exit codes they map to.
//!
//! | code | meaning                                   |
//! |------|-------------------------------------------|
//! | 0    | success (alerts are data, not failures)   |
//! | 1    | I/O or runtime failure                    |
//! | 2    | usage error, including unreadable inputs  |
//! | 3    | parse or schema error in an input stream  |
//! | 4    | calibration error                         |
//! | 5    | ground truth is empty                     |

use std::fmt;
use std::io;

use railguard_core::calibration::CalibrationError;
use railguard_core::ingest::IngestError;
use railguard_core::metrics::MetricsError;
use railguard_core::pipeline::{PipelineError, RunError};
use railguard_core::simgen::SimError;

pub const EXIT_OK: u8 = 0;
pub const EXIT_IO: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_PARSE: u8 = 3;
pub const EXIT_CALIBRATION: u8 = 4;
pub const EXIT_EMPTY_GROUND_TRUTH: u8 = 5;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Parse(String),
    Calibration(String),
    EmptyGroundTruth(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Parse(_) => EXIT_PARSE,
            CliError::Calibration(_) => EXIT_CALIBRATION,
            CliError::EmptyGroundTruth(_) => EXIT_EMPTY_GROUND_TRUTH,
            CliError::Io(_) => EXIT_IO,
        }
    }

    pub fn io(context: impl fmt::Display, err: io::Error) -> Self {
        CliError::Io(format!("{context}: {err}"))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}\n\nFor more information, try '--help'."),
            CliError::Parse(m) | CliError::Calibration(m) | CliError::EmptyGroundTruth(m) | CliError::Io(m) => {
                f.write_str(m)
            }
        }
    }
}

impl std::error::Error for CliError {}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Io(io) => CliError::Io(format!("reading stream: {io}")),
            other => CliError::Parse(other.to_string()),
        }
    }
}

impl From<CalibrationError> for CliError {
    fn from(e: CalibrationError) -> Self {
        CliError::Calibration(e.to_string())
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<RunError> for CliError {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Ingest(i) => i.into(),
            RunError::Sink(io) => CliError::Io(format!("writing output: {io}")),
            RunError::Config(c) => c.into(),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::Parse(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        CliError::Parse(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
