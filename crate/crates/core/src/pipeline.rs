//! Per-frame proximity classification and the alert state machine.
//!
//! Each frame goes through three stages:
//!
//! 1. the centers of the track boxes are joined into a centerline, far to
//!    near (ascending image `y`);
//! 2. every person/object box is measured against the track in ground-plane
//!    meters and flagged as a breach when `distance <= threshold_m`;
//! 3. breaches feed a per-object latch that raises after `debounce_frames`
//!    consecutive breaches and clears after `release_frames` consecutive
//!    frames beyond `threshold_m + hysteresis_m` (or with the object absent).
//!
//! A frame with no usable track gives every object an unknown distance.
//! Unknown distances never raise anything; they are counted in the
//! [`RunSummary`] instead.
//!
//! Objects are keyed by class plus their left-to-right rank within the frame.
//! There is no identity tracking, so two objects of the same class that swap
//! horizontal order also swap keys.

use std::collections::BTreeMap;
use std::fmt;
use std::io;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::calibration::Calibration;
use crate::geometry::{Point, Polyline};
use crate::ingest::{ClassLabel, FrameRecord, IngestError, StreamHeader};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid pipeline config: {0}")]
    Config(String),
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("writing output failed: {0}")]
    Sink(#[from] io::Error),
    #[error(transparent)]
    Config(#[from] PipelineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum DistanceMode {
    /// Object center to the nearest track-box center.
    #[default]
    #[serde(rename = "center")]
    CenterToCenter,
    /// Object center to the centerline through all track-box centers.
    #[serde(rename = "polyline")]
    CenterToPolyline,
}

impl std::str::FromStr for DistanceMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "center" => Ok(DistanceMode::CenterToCenter),
            "polyline" => Ok(DistanceMode::CenterToPolyline),
            other => Err(format!("unknown distance mode `{other}` (expected center or polyline)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub threshold_m: f64,
    pub min_track_confidence: f64,
    pub min_object_confidence: f64,
    pub debounce_frames: u32,
    pub release_frames: u32,
    pub hysteresis_m: f64,
    pub distance_mode: DistanceMode,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            threshold_m: 1.0,
            min_track_confidence: 0.25,
            min_object_confidence: 0.25,
            debounce_frames: 3,
            release_frames: 5,
            hysteresis_m: 0.2,
            distance_mode: DistanceMode::CenterToCenter,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |msg: String| Err(PipelineError::Config(msg));
        if !self.threshold_m.is_finite() || self.threshold_m <= 0.0 {
            return bad(format!("threshold_m must be > 0, got {}", self.threshold_m));
        }
        if !self.hysteresis_m.is_finite() || self.hysteresis_m < 0.0 {
            return bad(format!("hysteresis_m must be >= 0, got {}", self.hysteresis_m));
        }
        if self.debounce_frames == 0 || self.release_frames == 0 {
            return bad("debounce_frames and release_frames must be >= 1".into());
        }
        for (name, v) in [
            ("min_track_confidence", self.min_track_confidence),
            ("min_object_confidence", self.min_object_confidence),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        Ok(())
    }
}

/// Per-frame object identity: class plus left-to-right rank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ObjectKey {
    pub class_label: ClassLabel,
    pub rank: usize,
}

impl fmt::Display for ObjectKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.class_label, self.rank)
    }
}

impl Serialize for ObjectKey {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl std::str::FromStr for ObjectKey {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (class, rank) = s.split_once('#').ok_or_else(|| format!("bad object key `{s}`"))?;
        Ok(ObjectKey {
            class_label: class.parse()?,
            rank: rank.parse().map_err(|_| format!("bad object key `{s}`"))?,
        })
    }
}

impl<'de> Deserialize<'de> for ObjectKey {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProximityStatus {
    pub frame_index: u64,
    pub object_key: ObjectKey,
    /// `None` when no track was usable or the point could not be projected.
    pub distance_m: Option<f64>,
    pub breach: bool,
}

impl ProximityStatus {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("status serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlertKind {
    Raised,
    Cleared,
}

impl AlertKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            AlertKind::Raised => "raised",
            AlertKind::Cleared => "cleared",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertEvent {
    pub kind: AlertKind,
    pub object_key: ObjectKey,
    pub frame_index: u64,
    pub timestamp_ms: u64,
    pub distance_m: Option<f64>,
}

impl AlertEvent {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("alert serializes")
    }
}

/// Centers of the confident track boxes, sorted far to near.
pub fn build_track_centerline(frame: &FrameRecord, cfg: &PipelineConfig) -> Option<Polyline> {
    let mut centers: Vec<Point> = frame
        .detections
        .iter()
        .filter(|d| d.class_label == ClassLabel::Track && d.confidence >= cfg.min_track_confidence)
        .map(|d| d.bbox.center())
        .collect();
    if centers.is_empty() {
        return None;
    }
    centers.sort_by(|a, b| a.y.total_cmp(&b.y).then(a.x.total_cmp(&b.x)));
    Some(Polyline::new(centers).expect("box centers are finite and non-empty"))
}

/// Confident person/object detections with their keys, in key order.
pub fn keyed_objects(frame: &FrameRecord, cfg: &PipelineConfig) -> Vec<(ObjectKey, usize)> {
    let mut out = Vec::new();
    for class_label in [ClassLabel::Person, ClassLabel::Object] {
        let mut members: Vec<(usize, Point)> = frame
            .detections
            .iter()
            .enumerate()
            .filter(|(_, d)| d.class_label == class_label && d.confidence >= cfg.min_object_confidence)
            .map(|(i, d)| (i, d.bbox.center()))
            .collect();
        members.sort_by(|(_, a), (_, b)| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
        out.extend(
            members
                .into_iter()
                .enumerate()
                .map(|(rank, (i, _))| (ObjectKey { class_label, rank }, i)),
        );
    }
    out
}

/// Everything derived from one frame, kept for diagnostics and overlays.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameClassification {
    pub centerline: Option<Polyline>,
    pub statuses: Vec<ProximityStatus>,
    /// Index into `frame.detections` for each status.
    pub detection_indices: Vec<usize>,
    pub horizon_failures: usize,
}

pub fn classify_frame_detailed(
    frame: &FrameRecord,
    cal: &Calibration,
    cfg: &PipelineConfig,
) -> FrameClassification {
    let centerline = build_track_centerline(frame, cfg);
    let mut horizon_failures = 0;

    // Ground-plane track geometry. Vertices that fail to project are dropped.
    let ground_track: Option<Vec<Point>> = centerline.as_ref().map(|line| {
        line.vertices()
            .iter()
            .filter_map(|&v| match cal.project_to_ground(v) {
                Ok(g) => Some(g),
                Err(_) => {
                    horizon_failures += 1;
                    None
                }
            })
            .collect()
    });

    let keyed = keyed_objects(frame, cfg);
    let mut statuses = Vec::with_capacity(keyed.len());
    let mut detection_indices = Vec::with_capacity(keyed.len());
    for (object_key, idx) in keyed {
        let center = frame.detections[idx].bbox.center();
        let distance_m = match ground_track.as_deref() {
            None | Some([]) => None,
            Some(track) => match cal.project_to_ground(center) {
                Err(_) => {
                    horizon_failures += 1;
                    None
                }
                Ok(g) => Some(match cfg.distance_mode {
                    DistanceMode::CenterToCenter => track
                        .iter()
                        .map(|t| t.distance(&g))
                        .fold(f64::INFINITY, f64::min),
                    DistanceMode::CenterToPolyline => Polyline::new(track.to_vec())
                        .expect("projected vertices are finite")
                        .distance_to(g),
                }),
            },
        };
        statuses.push(ProximityStatus {
            frame_index: frame.frame_index,
            object_key,
            distance_m,
            breach: distance_m.is_some_and(|d| d <= cfg.threshold_m),
        });
        detection_indices.push(idx);
    }

    FrameClassification {
        centerline,
        statuses,
        detection_indices,
        horizon_failures,
    }
}

pub fn classify_frame(frame: &FrameRecord, cal: &Calibration, cfg: &PipelineConfig) -> Vec<ProximityStatus> {
    classify_frame_detailed(frame, cal, cfg).statuses
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ObjectAlertState {
    pub consecutive_breach_count: u32,
    pub consecutive_clear_count: u32,
    pub active: bool,
}

/// Debounce/latch state for every object that is active or mid-count.
/// Idle objects are dropped, so memory tracks the number of live objects.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AlertState {
    objects: BTreeMap<ObjectKey, ObjectAlertState>,
}

impl AlertState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, key: &ObjectKey) -> Option<&ObjectAlertState> {
        self.objects.get(key)
    }

    pub fn active_keys(&self) -> impl Iterator<Item = &ObjectKey> {
        self.objects.iter().filter(|(_, s)| s.active).map(|(k, _)| k)
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    /// Advances every known or newly seen object by one frame. Events come
    /// out in key order.
    pub fn step(
        &mut self,
        frame_index: u64,
        timestamp_ms: u64,
        statuses: &[ProximityStatus],
        cfg: &PipelineConfig,
    ) -> Vec<AlertEvent> {
        let present: BTreeMap<ObjectKey, &ProximityStatus> =
            statuses.iter().map(|s| (s.object_key, s)).collect();
        for key in present.keys() {
            self.objects.entry(*key).or_default();
        }

        let release_distance = cfg.threshold_m + cfg.hysteresis_m;
        let mut events = Vec::new();
        for (key, st) in self.objects.iter_mut() {
            let status = present.get(key);
            let distance_m = status.and_then(|s| s.distance_m);
            let breach = status.is_some_and(|s| s.breach);
            let clearing = match status {
                None => true,
                Some(s) => s.distance_m.is_some_and(|d| d > release_distance),
            };

            let emit = |kind| AlertEvent {
                kind,
                object_key: *key,
                frame_index,
                timestamp_ms,
                distance_m,
            };
            if breach {
                st.consecutive_breach_count += 1;
                st.consecutive_clear_count = 0;
                if !st.active && st.consecutive_breach_count >= cfg.debounce_frames {
                    st.active = true;
                    events.push(emit(AlertKind::Raised));
                }
            } else if clearing {
                st.consecutive_breach_count = 0;
                st.consecutive_clear_count += 1;
                if st.active && st.consecutive_clear_count >= cfg.release_frames {
                    st.active = false;
                    events.push(emit(AlertKind::Cleared));
                }
            } else {
                // Inside the hysteresis band, or distance unknown: hold.
                st.consecutive_breach_count = 0;
                st.consecutive_clear_count = 0;
            }
        }
        self.objects
            .retain(|_, st| st.active || st.consecutive_breach_count > 0);
        events
    }
}

/// Functional form of [`AlertState::step`]. The frame index and timestamp are
/// taken from `frame`.
pub fn step_alert_state(
    mut state: AlertState,
    frame: &FrameRecord,
    statuses: &[ProximityStatus],
    cfg: &PipelineConfig,
) -> (AlertState, Vec<AlertEvent>) {
    let events = state.step(frame.frame_index, frame.timestamp_ms, statuses, cfg);
    (state, events)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StageTiming {
    pub centerline_and_classify_us: u64,
    pub alert_us: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunSummary {
    pub source_id: String,
    pub frames: u64,
    pub statuses: u64,
    pub breaches: u64,
    pub alerts_raised: u64,
    pub alerts_cleared: u64,
    /// Statuses whose distance could not be determined.
    pub unknown_distance: u64,
    pub frames_without_track: u64,
    pub horizon_failures: u64,
    pub timing: StageTiming,
}

impl RunSummary {
    pub fn alerts(&self) -> u64 {
        self.alerts_raised + self.alerts_cleared
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutput {
    pub frame_index: u64,
    pub timestamp_ms: u64,
    pub classification: FrameClassification,
    pub events: Vec<AlertEvent>,
}

impl FrameOutput {
    pub fn statuses(&self) -> &[ProximityStatus] {
        &self.classification.statuses
    }
}

/// Incremental runner for one stream.
#[derive(Debug, Clone)]
pub struct Pipeline {
    cal: Calibration,
    cfg: PipelineConfig,
    alerts: AlertState,
    summary: RunSummary,
    classify_time: Duration,
    alert_time: Duration,
}

impl Pipeline {
    pub fn new(source_id: impl Into<String>, cal: Calibration, cfg: PipelineConfig) -> Result<Self, PipelineError> {
        cfg.validate()?;
        Ok(Pipeline {
            cal,
            cfg,
            alerts: AlertState::new(),
            summary: RunSummary {
                source_id: source_id.into(),
                ..RunSummary::default()
            },
            classify_time: Duration::ZERO,
            alert_time: Duration::ZERO,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn alert_state(&self) -> &AlertState {
        &self.alerts
    }

    pub fn process(&mut self, frame: &FrameRecord) -> FrameOutput {
        let t0 = Instant::now();
        let classification = classify_frame_detailed(frame, &self.cal, &self.cfg);
        let t1 = Instant::now();
        let events = self.alerts.step(
            frame.frame_index,
            frame.timestamp_ms,
            &classification.statuses,
            &self.cfg,
        );
        self.alert_time += t1.elapsed();
        self.classify_time += t1 - t0;

        let s = &mut self.summary;
        s.frames += 1;
        s.statuses += classification.statuses.len() as u64;
        s.breaches += classification.statuses.iter().filter(|st| st.breach).count() as u64;
        s.unknown_distance += classification
            .statuses
            .iter()
            .filter(|st| st.distance_m.is_none())
            .count() as u64;
        s.horizon_failures += classification.horizon_failures as u64;
        if classification.centerline.is_none() {
            s.frames_without_track += 1;
        }
        for e in &events {
            match e.kind {
                AlertKind::Raised => s.alerts_raised += 1,
                AlertKind::Cleared => s.alerts_cleared += 1,
            }
        }

        FrameOutput {
            frame_index: frame.frame_index,
            timestamp_ms: frame.timestamp_ms,
            classification,
            events,
        }
    }

    pub fn summary(&self) -> RunSummary {
        let mut s = self.summary.clone();
        s.timing = StageTiming {
            centerline_and_classify_us: self.classify_time.as_micros() as u64,
            alert_us: self.alert_time.as_micros() as u64,
        };
        s
    }
}

/// Receives each frame's output as soon as it is produced.
pub trait RunSink {
    fn frame(&mut self, output: &FrameOutput) -> io::Result<()>;
}

impl<F: FnMut(&FrameOutput) -> io::Result<()>> RunSink for F {
    fn frame(&mut self, output: &FrameOutput) -> io::Result<()> {
        self(output)
    }
}

/// Keeps every status and event in memory.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct Collected {
    pub statuses: Vec<ProximityStatus>,
    pub events: Vec<AlertEvent>,
}

impl RunSink for Collected {
    fn frame(&mut self, output: &FrameOutput) -> io::Result<()> {
        self.statuses.extend_from_slice(output.statuses());
        self.events.extend_from_slice(&output.events);
        Ok(())
    }
}

/// Runs a whole stream through a fresh [`Pipeline`], stopping at the first
/// ingest or sink error.
pub fn run_stream<I, S>(
    header: &StreamHeader,
    frames: I,
    cal: &Calibration,
    cfg: &PipelineConfig,
    sink: &mut S,
) -> Result<RunSummary, RunError>
where
    I: IntoIterator<Item = Result<FrameRecord, IngestError>>,
    S: RunSink + ?Sized,
{
    let mut pipeline = Pipeline::new(header.source_id.clone(), cal.clone(), cfg.clone())?;
    for frame in frames {
        let output = pipeline.process(&frame?);
        sink.frame(&output)?;
    }
    Ok(pipeline.summary())
}

/// In-memory variant of [`run_stream`] for already-validated frames.
pub fn run_collect(
    header: &StreamHeader,
    frames: &[FrameRecord],
    cal: &Calibration,
    cfg: &PipelineConfig,
) -> Result<(Collected, RunSummary), PipelineError> {
    let mut pipeline = Pipeline::new(header.source_id.clone(), cal.clone(), cfg.clone())?;
    let mut out = Collected::default();
    for frame in frames {
        let o = pipeline.process(frame);
        out.frame(&o).expect("collecting cannot fail");
    }
    Ok((out, pipeline.summary()))
}
