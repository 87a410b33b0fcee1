//! Detection stream wire format.
//!
//! A stream is line-delimited JSON: one header object followed by one object
//! per frame.
//!
//! ```text
//! {"type":"header","source_id":"cam-1","frame_width":1920,"frame_height":1080,"fps":30.0}
//! {"type":"frame","frame_index":0,"timestamp_ms":0,"detections":[{"class":"track","bbox":[900.0,0.0,1000.0,1080.0],"confidence":0.91}]}
//! ```
//!
//! Frames may carry an `intensity_digest` of `[min, max]` normalized pixel
//! intensity so the producer's `/255` normalization can be checked without
//! touching pixels. Floats are written with the shortest representation that
//! reads back to the same value, so parse followed by write reproduces
//! canonical input byte for byte.

use std::fmt;
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::BoundingBox;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: malformed record: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: out of order: {message}")]
    Order { line: usize, message: String },
    #[error("line {line}: schema violation: {message}")]
    Schema { line: usize, message: String },
    #[error("cannot resample {n_source} frames to {m_target}")]
    InvalidResample { n_source: usize, m_target: usize },
    #[error("read failed: {0}")]
    Io(#[from] io::Error),
}

impl IngestError {
    /// 1-based line number for record-level errors.
    pub fn line(&self) -> Option<usize> {
        match self {
            IngestError::Parse { line, .. }
            | IngestError::Order { line, .. }
            | IngestError::Schema { line, .. } => Some(*line),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassLabel {
    Track,
    Person,
    Object,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 3] = [ClassLabel::Track, ClassLabel::Person, ClassLabel::Object];

    pub fn as_str(&self) -> &'static str {
        match self {
            ClassLabel::Track => "track",
            ClassLabel::Person => "person",
            ClassLabel::Object => "object",
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ClassLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "track" => Ok(ClassLabel::Track),
            "person" => Ok(ClassLabel::Person),
            "object" => Ok(ClassLabel::Object),
            other => Err(format!("unknown class `{other}` (expected track, person or object)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Detection {
    #[serde(rename = "class")]
    pub class_label: ClassLabel,
    pub bbox: BoundingBox,
    pub confidence: f64,
}

impl Detection {
    pub fn new(class_label: ClassLabel, bbox: BoundingBox, confidence: f64) -> Self {
        Detection {
            class_label,
            bbox,
            confidence,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameRecord {
    pub frame_index: u64,
    pub timestamp_ms: u64,
    pub detections: Vec<Detection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intensity_digest: Option<[f64; 2]>,
}

impl FrameRecord {
    pub fn new(frame_index: u64, timestamp_ms: u64, detections: Vec<Detection>) -> Self {
        FrameRecord {
            frame_index,
            timestamp_ms,
            detections,
            intensity_digest: None,
        }
    }

    fn validate(&self) -> Result<(), String> {
        for (i, d) in self.detections.iter().enumerate() {
            if !(0.0..=1.0).contains(&d.confidence) {
                return Err(format!(
                    "detections[{i}].confidence = {} is outside [0, 1]",
                    d.confidence
                ));
            }
        }
        if let Some([lo, hi]) = self.intensity_digest {
            if lo > hi {
                return Err(format!("intensity_digest min {lo} exceeds max {hi}"));
            }
            if let NormalizationVerdict::OutOfRange { value, .. } = check_normalization(&[lo, hi]) {
                return Err(format!(
                    "intensity_digest value {value} is outside [0, 1] (frame not normalized by 255?)"
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamHeader {
    pub source_id: String,
    pub frame_width: u32,
    pub frame_height: u32,
    pub fps: f64,
}

impl StreamHeader {
    fn validate(&self) -> Result<(), String> {
        if self.frame_width == 0 || self.frame_height == 0 {
            return Err("frame_width and frame_height must be > 0".into());
        }
        if !self.fps.is_finite() || self.fps <= 0.0 {
            return Err(format!("fps must be > 0, got {}", self.fps));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum WireRecord {
    Header(StreamHeader),
    Frame(FrameRecord),
}

impl WireRecord {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("wire records serialize")
    }
}

/// Stateful line validator. Rejected lines leave the state untouched, so a
/// caller may report an error and carry on with the next line.
#[derive(Debug, Default)]
pub struct LineDecoder {
    line_no: usize,
    header: bool,
    last: Option<(u64, u64)>,
}

impl LineDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of lines seen so far, including rejected and blank ones.
    pub fn line_no(&self) -> usize {
        self.line_no
    }

    pub fn header_seen(&self) -> bool {
        self.header
    }

    /// Decodes one line. Blank lines yield `Ok(None)`.
    pub fn decode(&mut self, line: &str) -> Result<Option<WireRecord>, IngestError> {
        self.line_no += 1;
        let line_no = self.line_no;
        if line.trim().is_empty() {
            return Ok(None);
        }
        let record: WireRecord = serde_json::from_str(line).map_err(|e| {
            let message = e.to_string();
            match e.classify() {
                serde_json::error::Category::Data => IngestError::Schema { line: line_no, message },
                _ => IngestError::Parse { line: line_no, message },
            }
        })?;
        let schema = |message: String| IngestError::Schema { line: line_no, message };
        match &record {
            WireRecord::Header(h) => {
                if self.header {
                    return Err(schema("duplicate header record".into()));
                }
                h.validate().map_err(schema)?;
                self.header = true;
            }
            WireRecord::Frame(f) => {
                if !self.header {
                    return Err(schema("first record must be a header".into()));
                }
                f.validate().map_err(schema)?;
                if let Some((index, ts)) = self.last {
                    if f.frame_index <= index {
                        return Err(IngestError::Order {
                            line: line_no,
                            message: format!(
                                "frame_index {} does not follow {}",
                                f.frame_index, index
                            ),
                        });
                    }
                    if f.timestamp_ms < ts {
                        return Err(IngestError::Order {
                            line: line_no,
                            message: format!(
                                "timestamp_ms {} precedes {}",
                                f.timestamp_ms, ts
                            ),
                        });
                    }
                }
                self.last = Some((f.frame_index, f.timestamp_ms));
            }
        }
        Ok(Some(record))
    }
}

/// Lazily parsed frames following a header. Stops after the first error.
pub struct FrameReader<R> {
    lines: io::Lines<R>,
    decoder: LineDecoder,
    failed: bool,
}

impl<R: BufRead> FrameReader<R> {
    pub fn lines_read(&self) -> usize {
        self.decoder.line_no()
    }
}

impl<R: BufRead> Iterator for FrameReader<R> {
    type Item = Result<FrameRecord, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        loop {
            let line = match self.lines.next()? {
                Ok(line) => line,
                Err(e) => {
                    self.failed = true;
                    return Some(Err(read_error(self.decoder.line_no() + 1, e)));
                }
            };
            match self.decoder.decode(&line) {
                Ok(Some(WireRecord::Frame(f))) => return Some(Ok(f)),
                Ok(Some(WireRecord::Header(_))) => unreachable!("decoder rejects a second header"),
                Ok(None) => continue,
                Err(e) => {
                    self.failed = true;
                    return Some(Err(e));
                }
            }
        }
    }
}

fn read_error(line: usize, e: io::Error) -> IngestError {
    if e.kind() == io::ErrorKind::InvalidData {
        IngestError::Parse {
            line,
            message: "line is not valid UTF-8".into(),
        }
    } else {
        IngestError::Io(e)
    }
}

/// Reads the header and returns it with a lazy iterator over the frames.
pub fn parse_stream<R: BufRead>(reader: R) -> Result<(StreamHeader, FrameReader<R>), IngestError> {
    let mut lines = reader.lines();
    let mut decoder = LineDecoder::new();
    loop {
        let Some(line) = lines.next() else {
            return Err(IngestError::Schema {
                line: decoder.line_no() + 1,
                message: "stream is empty; expected a header record".into(),
            });
        };
        let line = line.map_err(|e| read_error(decoder.line_no() + 1, e))?;
        match decoder.decode(&line)? {
            Some(WireRecord::Header(header)) => {
                return Ok((
                    header,
                    FrameReader {
                        lines,
                        decoder,
                        failed: false,
                    },
                ))
            }
            Some(WireRecord::Frame(_)) => unreachable!("decoder rejects frames before the header"),
            None => continue,
        }
    }
}

/// Convenience for small inputs: parses everything, failing on the first error.
pub fn parse_stream_str(text: &str) -> Result<(StreamHeader, Vec<FrameRecord>), IngestError> {
    let (header, frames) = parse_stream(text.as_bytes())?;
    let frames = frames.collect::<Result<Vec<_>, _>>()?;
    Ok((header, frames))
}

pub fn write_stream<'a, W, I>(mut out: W, header: &StreamHeader, frames: I) -> io::Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a FrameRecord>,
{
    serde_json::to_writer(&mut out, &WireRecord::Header(header.clone()))?;
    out.write_all(b"\n")?;
    for frame in frames {
        write_frame(&mut out, frame)?;
    }
    Ok(())
}

pub fn write_frame<W: Write>(mut out: W, frame: &FrameRecord) -> io::Result<()> {
    // Serialized through a borrowed twin so frames are not cloned per line.
    #[derive(Serialize)]
    #[serde(tag = "type", rename = "frame")]
    struct FrameLine<'a> {
        frame_index: u64,
        timestamp_ms: u64,
        detections: &'a [Detection],
        #[serde(skip_serializing_if = "Option::is_none")]
        intensity_digest: Option<[f64; 2]>,
    }
    serde_json::to_writer(
        &mut out,
        &FrameLine {
            frame_index: frame.frame_index,
            timestamp_ms: frame.timestamp_ms,
            detections: &frame.detections,
            intensity_digest: frame.intensity_digest,
        },
    )?;
    out.write_all(b"\n")
}

pub fn write_stream_string(header: &StreamHeader, frames: &[FrameRecord]) -> String {
    let mut buf = Vec::new();
    write_stream(&mut buf, header, frames).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

/// Source frame indices kept when thinning `n_source` frames to `m_target`.
///
/// Index `k` is `round(k * (n - 1) / (m - 1))` with halves rounded up, computed
/// in integer arithmetic so every implementation agrees exactly.
pub fn resample_indices(n_source: usize, m_target: usize) -> Result<Vec<usize>, IngestError> {
    if n_source == 0 || m_target == 0 || m_target > n_source {
        return Err(IngestError::InvalidResample { n_source, m_target });
    }
    if m_target == 1 {
        return Ok(vec![0]);
    }
    let num = (n_source - 1) as u128;
    let den = (m_target - 1) as u128;
    Ok((0..m_target as u128)
        .map(|k| ((2 * k * num + den) / (2 * den)) as usize)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormalizationVerdict {
    Pass,
    /// First sample outside `[0, 1]`.
    OutOfRange { index: usize, value: f64 },
    Empty,
}

impl NormalizationVerdict {
    pub fn is_pass(&self) -> bool {
        matches!(self, NormalizationVerdict::Pass)
    }
}

/// Checks that intensity samples were scaled into `[0, 1]`.
pub fn check_normalization(samples: &[f64]) -> NormalizationVerdict {
    if samples.is_empty() {
        return NormalizationVerdict::Empty;
    }
    match samples
        .iter()
        .enumerate()
        .find(|(_, v)| !(0.0..=1.0).contains(*v))
    {
        Some((index, &value)) => NormalizationVerdict::OutOfRange { index, value },
        None => NormalizationVerdict::Pass,
    }
}
