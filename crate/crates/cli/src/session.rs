//! One ingestion session: wire-format lines in, alert events out.
//!
//! Unlike `analyze`, a session survives bad lines. A rejected line gets an
//! error reply and leaves the decoder and pipeline exactly as they were.

use serde::Serialize;

use railguard_core::calibration::Calibration;
use railguard_core::ingest::{LineDecoder, WireRecord};
use railguard_core::pipeline::{AlertEvent, Pipeline, PipelineConfig, RunSummary};

/// What a session sends back for one input line.
#[derive(Debug, Clone, PartialEq)]
pub enum Reply {
    Alert(AlertEvent),
    Error { line: usize, error: String },
}

impl Reply {
    pub fn to_json_line(&self) -> String {
        match self {
            Reply::Alert(e) => e.to_json_line(),
            Reply::Error { line, error } => {
                #[derive(Serialize)]
                struct ErrorLine<'a> {
                    #[serde(rename = "type")]
                    kind: &'static str,
                    line: usize,
                    error: &'a str,
                }
                serde_json::to_string(&ErrorLine {
                    kind: "error",
                    line: *line,
                    error,
                })
                .expect("error line serializes")
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SessionSummary {
    #[serde(rename = "type")]
    pub kind: &'static str,
    pub frames_in: u64,
    pub rejected_lines: u64,
    #[serde(flatten)]
    pub run: RunSummary,
}

impl SessionSummary {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("summary serializes")
    }
}

pub struct Session {
    decoder: LineDecoder,
    cal: Calibration,
    cfg: PipelineConfig,
    pipeline: Option<Pipeline>,
    source_id: Option<String>,
    frames_in: u64,
    rejected: u64,
}

impl Session {
    pub fn new(cal: Calibration, cfg: PipelineConfig) -> Self {
        Session {
            decoder: LineDecoder::new(),
            cal,
            cfg,
            pipeline: None,
            source_id: None,
            frames_in: 0,
            rejected: 0,
        }
    }

    /// `source_id` from the header, once one has been accepted.
    pub fn source_id(&self) -> Option<&str> {
        self.source_id.as_deref()
    }

    pub fn feed_line(&mut self, line: &str) -> Vec<Reply> {
        match self.decoder.decode(line) {
            Ok(None) => Vec::new(),
            Ok(Some(WireRecord::Header(h))) => {
                // The config was validated before the session was created.
                self.pipeline = Some(
                    Pipeline::new(h.source_id.clone(), self.cal.clone(), self.cfg.clone()).expect("validated config"),
                );
                self.source_id = Some(h.source_id);
                Vec::new()
            }
            Ok(Some(WireRecord::Frame(f))) => {
                self.frames_in += 1;
                let pipeline = self.pipeline.as_mut().expect("decoder requires a header first");
                pipeline.process(&f).events.into_iter().map(Reply::Alert).collect()
            }
            Err(e) => {
                self.rejected += 1;
                let line = e.line().unwrap_or(self.decoder.line_no());
                vec![Reply::Error {
                    line,
                    error: e.to_string(),
                }]
            }
        }
    }

    pub fn summary(&self) -> SessionSummary {
        let mut run = self.pipeline.as_ref().map(Pipeline::summary).unwrap_or_default();
        if run.source_id.is_empty() {
            run.source_id = self.source_id.clone().unwrap_or_default();
        }
        SessionSummary {
            kind: "summary",
            frames_in: self.frames_in,
            rejected_lines: self.rejected,
            run,
        }
    }
}
