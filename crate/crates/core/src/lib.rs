//! Proximity alerting for people and objects near a rail track, driven by
//! per-frame object detections.
//!
//! The crate is detector-agnostic: it consumes the line-delimited JSON
//! detection stream defined in [`ingest`], rebuilds the track centerline,
//! measures ground-plane distance through a [`calibration::Calibration`], and
//! raises debounced alerts in [`pipeline`]. [`metrics`] holds the detection
//! evaluation harness and [`simgen`] a seeded scenario generator with exact
//! breach ground truth.

pub mod calibration;
pub mod geometry;
pub mod ingest;
pub mod metrics;
pub mod pipeline;
pub mod simgen;

pub use calibration::{Calibration, CalibrationError};
pub use geometry::{BoundingBox, Point, Polyline};
pub use ingest::{ClassLabel, Detection, FrameRecord, IngestError, StreamHeader};
