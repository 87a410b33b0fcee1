//! Detection evaluation: IoU matching, precision/recall curves, average
//! precision and comparison tables.
//!
//! Matching is greedy. Predictions of the evaluated class are visited by
//! descending confidence (ties broken by ascending `x1`, `y1`, `x2`, `y2`) and
//! each claims the unmatched ground-truth box of the same class with the
//! highest IoU, provided that IoU reaches the threshold. Because higher
//! confidences are always visited first, the matches made by the predictions
//! above any cutoff do not depend on the predictions below it. Every curve
//! point can therefore be read off a single matching pass.
//!
//! Conventions:
//! - precision with zero counted predictions is 1.0;
//! - recall with zero ground-truth boxes is 0.0;
//! - AP is the all-point interpolated area under the precision envelope, and
//!   0 when there is no ground truth.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use serde::Serialize;
use thiserror::Error;

use crate::geometry::BoundingBox;
use crate::ingest::{ClassLabel, Detection, FrameRecord};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("{column} value {value} for `{method}` is out of range")]
    Range {
        method: String,
        column: &'static str,
        value: f64,
    },
    #[error("a comparison table needs at least one row")]
    EmptyTable,
    #[error("cannot parse `{0}` as a number")]
    BadNumber(String),
    #[error("ground-truth frame {frame_index}: confidence must be 1.0, got {confidence}")]
    GroundTruthConfidence { frame_index: u64, confidence: f64 },
    #[error("ground-truth frame {0} appears more than once")]
    DuplicateFrame(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthFrame {
    pub frame_index: u64,
    pub boxes: Vec<(ClassLabel, BoundingBox)>,
}

impl GroundTruthFrame {
    /// Reads a ground-truth frame from the detection wire format, where every
    /// confidence must be exactly 1.0.
    pub fn from_frame(frame: &FrameRecord) -> Result<Self, MetricsError> {
        let boxes = frame
            .detections
            .iter()
            .map(|d| {
                if d.confidence != 1.0 {
                    return Err(MetricsError::GroundTruthConfidence {
                        frame_index: frame.frame_index,
                        confidence: d.confidence,
                    });
                }
                Ok((d.class_label, d.bbox))
            })
            .collect::<Result<_, _>>()?;
        Ok(GroundTruthFrame {
            frame_index: frame.frame_index,
            boxes,
        })
    }

    pub fn to_frame(&self, timestamp_ms: u64) -> FrameRecord {
        FrameRecord::new(
            self.frame_index,
            timestamp_ms,
            self.boxes
                .iter()
                .map(|&(c, b)| Detection::new(c, b, 1.0))
                .collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatchedPair {
    pub pred_index: usize,
    pub gt_index: usize,
    pub iou: f64,
    pub confidence: f64,
}

/// One prediction's confidence and whether it was matched.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScoredPrediction {
    pub confidence: f64,
    pub matched: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MatchResult {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub pairs: Vec<MatchedPair>,
    /// Every prediction of the evaluated class, in visiting order.
    pub scored: Vec<ScoredPrediction>,
}

fn box_key(b: &BoundingBox) -> [f64; 4] {
    [b.x1(), b.y1(), b.x2(), b.y2()]
}

fn cmp_boxes(a: &BoundingBox, b: &BoundingBox) -> Ordering {
    box_key(a)
        .iter()
        .zip(box_key(b).iter())
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

pub fn match_detections(
    preds: &[Detection],
    gt: &[(ClassLabel, BoundingBox)],
    iou_threshold: f64,
    class_filter: ClassLabel,
) -> MatchResult {
    let mut order: Vec<usize> = (0..preds.len())
        .filter(|&i| preds[i].class_label == class_filter)
        .collect();
    order.sort_by(|&a, &b| {
        preds[b]
            .confidence
            .total_cmp(&preds[a].confidence)
            .then_with(|| cmp_boxes(&preds[a].bbox, &preds[b].bbox))
    });

    let gt_idx: Vec<usize> = (0..gt.len()).filter(|&j| gt[j].0 == class_filter).collect();
    let mut taken = vec![false; gt.len()];
    let mut result = MatchResult {
        false_negatives: gt_idx.len(),
        ..MatchResult::default()
    };

    for i in order {
        let pred = &preds[i];
        let mut best: Option<(usize, f64)> = None;
        for &j in &gt_idx {
            if taken[j] {
                continue;
            }
            let iou = pred.bbox.iou(&gt[j].1);
            let better = match best {
                None => true,
                Some((bj, biou)) => {
                    iou > biou || (iou == biou && cmp_boxes(&gt[j].1, &gt[bj].1).is_lt())
                }
            };
            if better {
                best = Some((j, iou));
            }
        }
        let matched = match best {
            Some((j, iou)) if iou >= iou_threshold => {
                taken[j] = true;
                result.pairs.push(MatchedPair {
                    pred_index: i,
                    gt_index: j,
                    iou,
                    confidence: pred.confidence,
                });
                true
            }
            _ => false,
        };
        if matched {
            result.true_positives += 1;
            result.false_negatives -= 1;
        } else {
            result.false_positives += 1;
        }
        result.scored.push(ScoredPrediction {
            confidence: pred.confidence,
            matched,
        });
    }
    result
}

/// Pooled match outcomes over a dataset for one class.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoredSet {
    pub predictions: Vec<ScoredPrediction>,
    pub ground_truth: usize,
}

impl ScoredSet {
    pub fn push(&mut self, m: &MatchResult) {
        self.predictions.extend_from_slice(&m.scored);
        self.ground_truth += m.true_positives + m.false_negatives;
    }

    /// Counts at cutoff `t`: predictions with confidence `>= t`.
    pub fn counts_at(&self, t: f64) -> Counts {
        let (mut tp, mut fp) = (0, 0);
        for p in self.predictions.iter().filter(|p| p.confidence >= t) {
            if p.matched {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        Counts {
            true_positives: tp,
            false_positives: fp,
            false_negatives: self.ground_truth - tp,
        }
    }
}

/// Matches every prediction frame against its ground truth (joined on
/// `frame_index`) and pools the outcome. Frames missing on either side count
/// as having no boxes there.
pub fn evaluate_frames(
    predictions: &[FrameRecord],
    ground_truth: &[GroundTruthFrame],
    iou_threshold: f64,
    class_filter: ClassLabel,
) -> Result<ScoredSet, MetricsError> {
    let mut gt_by_frame: BTreeMap<u64, &GroundTruthFrame> = BTreeMap::new();
    for g in ground_truth {
        if gt_by_frame.insert(g.frame_index, g).is_some() {
            return Err(MetricsError::DuplicateFrame(g.frame_index));
        }
    }
    let mut set = ScoredSet::default();
    let mut seen = std::collections::BTreeSet::new();
    for p in predictions {
        seen.insert(p.frame_index);
        let gt = gt_by_frame.get(&p.frame_index).map_or(&[][..], |g| &g.boxes[..]);
        set.push(&match_detections(&p.detections, gt, iou_threshold, class_filter));
    }
    for (idx, g) in &gt_by_frame {
        if !seen.contains(idx) {
            set.push(&match_detections(&[], &g.boxes, iou_threshold, class_filter));
        }
    }
    Ok(set)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Counts {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

impl Counts {
    pub fn precision(&self) -> f64 {
        let predicted = self.true_positives + self.false_positives;
        if predicted == 0 {
            1.0
        } else {
            self.true_positives as f64 / predicted as f64
        }
    }

    pub fn recall(&self) -> f64 {
        let truth = self.true_positives + self.false_negatives;
        if truth == 0 {
            0.0
        } else {
            self.true_positives as f64 / truth as f64
        }
    }
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    #[serde(flatten)]
    pub counts: Counts,
}

impl CurvePoint {
    fn at(set: &ScoredSet, threshold: f64) -> Self {
        let counts = set.counts_at(threshold);
        let (precision, recall) = (counts.precision(), counts.recall());
        CurvePoint {
            threshold,
            precision,
            recall,
            f1: f1_score(precision, recall),
            counts,
        }
    }
}

/// `0.00, 0.01, ..., 1.00`.
pub fn confidence_grid() -> Vec<f64> {
    (0..=100).map(|i| i as f64 / 100.0).collect()
}

/// One point per threshold, in the order given (normally ascending).
pub fn pr_curve(set: &ScoredSet, thresholds: &[f64]) -> Vec<CurvePoint> {
    thresholds.iter().map(|&t| CurvePoint::at(set, t)).collect()
}

/// [`pr_curve`] over [`confidence_grid`].
pub fn f1_confidence_curve(set: &ScoredSet) -> Vec<CurvePoint> {
    pr_curve(set, &confidence_grid())
}

/// All-point interpolated average precision.
///
/// Operating points are taken at every distinct confidence (equal
/// confidences enter together, since no cutoff can separate them).
pub fn average_precision(set: &ScoredSet) -> f64 {
    if set.ground_truth == 0 {
        return 0.0;
    }
    let mut sorted = set.predictions.clone();
    sorted.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));

    let mut points: Vec<(f64, f64)> = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    for (i, p) in sorted.iter().enumerate() {
        if p.matched {
            tp += 1;
        } else {
            fp += 1;
        }
        let group_ends = sorted.get(i + 1).is_none_or(|n| n.confidence != p.confidence);
        if group_ends {
            let recall = tp as f64 / set.ground_truth as f64;
            let precision = tp as f64 / (tp + fp) as f64;
            points.push((recall, precision));
        }
    }

    // Running max from the right gives the envelope at each point.
    let mut envelope = vec![0.0; points.len()];
    let mut best = 0.0f64;
    for (i, &(_, p)) in points.iter().enumerate().rev() {
        best = best.max(p);
        envelope[i] = best;
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (&(r, _), env) in points.iter().zip(&envelope) {
        ap += (r - prev_recall) * env;
        prev_recall = r;
    }
    ap.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Serialize)]
pub struct EvaluationConfig {
    pub iou_threshold: f64,
    pub class: ClassLabel,
    pub ap_method: &'static str,
    pub zero_prediction_precision: f64,
    pub matching: &'static str,
}

/// Everything `evaluate` writes as its JSON document.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub ap: f64,
    pub ground_truth: usize,
    pub predictions: usize,
    pub counts: Counts,
    pub best_f1: CurvePoint,
    pub pr_curve: Vec<CurvePoint>,
    pub f1_curve: Vec<CurvePoint>,
    pub config: EvaluationConfig,
}

impl MetricsReport {
    pub fn build(set: &ScoredSet, iou_threshold: f64, class: ClassLabel) -> Self {
        let f1_curve = f1_confidence_curve(set);
        let best_f1 = *f1_curve
            .iter()
            .max_by(|a, b| a.f1.total_cmp(&b.f1).then(b.threshold.total_cmp(&a.threshold)))
            .expect("grid is non-empty");
        MetricsReport {
            ap: average_precision(set),
            ground_truth: set.ground_truth,
            predictions: set.predictions.len(),
            counts: set.counts_at(f64::NEG_INFINITY),
            best_f1,
            pr_curve: pr_curve(set, &confidence_grid()),
            f1_curve,
            config: EvaluationConfig {
                iou_threshold,
                class,
                ap_method: "all-point",
                zero_prediction_precision: 1.0,
                matching: "greedy-confidence",
            },
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// `recall,precision` rows.
    pub fn pr_csv(&self) -> String {
        let mut s = String::from("recall,precision\n");
        for p in &self.pr_curve {
            let _ = writeln!(s, "{},{}", p.recall, p.precision);
        }
        s
    }

    /// `confidence,f1` rows.
    pub fn f1_csv(&self) -> String {
        let mut s = String::from("confidence,f1\n");
        for p in &self.f1_curve {
            let _ = writeln!(s, "{},{}", p.threshold, p.f1);
        }
        s
    }
}

/// A reported number that remembers how many decimals it was written with,
/// so `85.30` renders as `85.30` and `94` as `94`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measure {
    pub value: f64,
    pub decimals: u8,
}

impl Measure {
    pub fn new(value: f64, decimals: u8) -> Self {
        Measure { value, decimals }
    }
}

impl std::str::FromStr for Measure {
    type Err = MetricsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim().trim_end_matches('%');
        let value: f64 = t.parse().map_err(|_| MetricsError::BadNumber(s.to_string()))?;
        if !value.is_finite() {
            return Err(MetricsError::BadNumber(s.to_string()));
        }
        let decimals = t.split_once('.').map_or(0, |(_, frac)| frac.len()) as u8;
        Ok(Measure { value, decimals })
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.*}", self.decimals as usize, self.value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableKind {
    TrackDetection,
    ObjectDetection,
}

impl TableKind {
    fn title(&self) -> &'static str {
        match self {
            TableKind::TrackDetection => "Comparison of Rail Line Track Detection Method",
            TableKind::ObjectDetection => "Comparison of Different Object Detection Method",
        }
    }

    fn third_column(&self) -> &'static str {
        match self {
            TableKind::TrackDetection => "Computational Time (s)",
            TableKind::ObjectDetection => "F1-Score",
        }
    }

    fn third_is_percent(&self) -> bool {
        matches!(self, TableKind::ObjectDetection)
    }
}

impl std::str::FromStr for TableKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "track" | "track_detection" => Ok(TableKind::TrackDetection),
            "object" | "object_detection" => Ok(TableKind::ObjectDetection),
            other => Err(format!("unknown table kind `{other}` (expected track or object)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodRow {
    pub method: String,
    pub accuracy: Measure,
    pub precision_recall: Measure,
    /// Computational time in seconds or F1 percent, depending on the table.
    pub third: Measure,
}

impl MethodRow {
    pub fn parse(method: &str, accuracy: &str, precision_recall: &str, third: &str) -> Result<Self, MetricsError> {
        Ok(MethodRow {
            method: method.to_string(),
            accuracy: accuracy.parse()?,
            precision_recall: precision_recall.parse()?,
            third: third.parse()?,
        })
    }

    fn check(&self, kind: TableKind) -> Result<(), MetricsError> {
        let pct = |column, m: Measure| {
            if (0.0..=100.0).contains(&m.value) {
                Ok(())
            } else {
                Err(MetricsError::Range {
                    method: self.method.clone(),
                    column,
                    value: m.value,
                })
            }
        };
        pct("Accuracy", self.accuracy)?;
        pct("Precision-Recall", self.precision_recall)?;
        if kind.third_is_percent() {
            pct("F1-Score", self.third)
        } else if self.third.value < 0.0 {
            Err(MetricsError::Range {
                method: self.method.clone(),
                column: "Computational Time (s)",
                value: self.third.value,
            })
        } else {
            Ok(())
        }
    }

    fn cells(&self, kind: TableKind) -> [String; 4] {
        let third = if kind.third_is_percent() {
            format!("{}%", self.third)
        } else {
            self.third.to_string()
        };
        [
            self.method.clone(),
            format!("{}%", self.accuracy),
            format!("{}%", self.precision_recall),
            third,
        ]
    }
}

fn checked(rows: &[MethodRow], kind: TableKind) -> Result<(), MetricsError> {
    if rows.is_empty() {
        return Err(MetricsError::EmptyTable);
    }
    rows.iter().try_for_each(|r| r.check(kind))
}

/// Fixed-width text table, columns separated by two spaces.
pub fn render_comparison_table(rows: &[MethodRow], kind: TableKind) -> Result<String, MetricsError> {
    checked(rows, kind)?;
    let header = ["Method", "Accuracy", "Precision-Recall", kind.third_column()].map(String::from);
    let body: Vec<[String; 4]> = rows.iter().map(|r| r.cells(kind)).collect();
    let mut widths = header.clone().map(|h| h.chars().count());
    for cells in &body {
        for (w, c) in widths.iter_mut().zip(cells) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: &[String; 4]| {
        let mut s = String::new();
        for (i, (c, w)) in cells.iter().zip(widths).enumerate() {
            if i > 0 {
                s.push_str("  ");
            }
            let _ = write!(s, "{c:<w$}");
        }
        s.trim_end().to_string()
    };
    let mut out = format!("{}\n\n", kind.title());
    out.push_str(&line(&header));
    out.push('\n');
    out.push_str(&line(&widths.map(|w| "-".repeat(w))));
    out.push('\n');
    for cells in &body {
        out.push_str(&line(cells));
        out.push('\n');
    }
    Ok(out)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// CSV form of the same table; percentages are written without the `%`.
pub fn render_comparison_csv(rows: &[MethodRow], kind: TableKind) -> Result<String, MetricsError> {
    checked(rows, kind)?;
    let third = if kind.third_is_percent() {
        "F1-Score (%)"
    } else {
        kind.third_column()
    };
    let mut out = format!("Method,Accuracy (%),Precision-Recall (%),{third}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            csv_field(&r.method),
            r.accuracy,
            r.precision_recall,
            r.third
        );
    }
    Ok(out)
}
