//! Per-frame geometry for external renderers: the boxes that were used, the
//! centerline, and each object's distance. One JSON object per line.

use serde::Serialize;

use railguard_core::geometry::{BoundingBox, Point};
use railguard_core::ingest::{ClassLabel, FrameRecord};
use railguard_core::pipeline::{FrameOutput, ObjectKey, PipelineConfig};

#[derive(Debug, Serialize)]
pub struct OverlayObject {
    pub object_key: ObjectKey,
    pub bbox: BoundingBox,
    pub center: Point,
    pub distance_m: Option<f64>,
    pub breach: bool,
}

#[derive(Debug, Serialize)]
pub struct OverlayFrame {
    pub frame_index: u64,
    pub timestamp_ms: u64,
    pub tracks: Vec<BoundingBox>,
    /// Pixel-space centerline, `null` when no track passed the filter.
    pub centerline: Option<Vec<Point>>,
    pub objects: Vec<OverlayObject>,
}

impl OverlayFrame {
    pub fn build(frame: &FrameRecord, output: &FrameOutput, cfg: &PipelineConfig) -> Self {
        let c = &output.classification;
        let objects = c
            .statuses
            .iter()
            .zip(&c.detection_indices)
            .map(|(s, &i)| {
                let bbox = frame.detections[i].bbox;
                OverlayObject {
                    object_key: s.object_key,
                    bbox,
                    center: bbox.center(),
                    distance_m: s.distance_m,
                    breach: s.breach,
                }
            })
            .collect();
        OverlayFrame {
            frame_index: frame.frame_index,
            timestamp_ms: frame.timestamp_ms,
            tracks: frame
                .detections
                .iter()
                .filter(|d| d.class_label == ClassLabel::Track && d.confidence >= cfg.min_track_confidence)
                .map(|d| d.bbox)
                .collect(),
            centerline: c.centerline.as_ref().map(|l| l.vertices().to_vec()),
            objects,
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("overlay serializes")
    }
}
