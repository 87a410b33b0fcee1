//! Seeded synthetic scenarios with exact breach ground truth.
//!
//! Actors move in straight lines on the ground plane (meters). Each frame
//! their positions are pushed through the scenario calibration into pixel
//! boxes, optionally perturbed, and written as detections. Ground truth is
//! always computed from the noise-free motion model.
//!
//! The track is emitted as one small box centered on each ground-plane track
//! vertex, so the pipeline's centerline reproduces the scenario track as long
//! as the vertices are listed in ascending image `y`.
//!
//! Randomness comes from ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded with
//! `seed_from_u64(seed)`. Draws happen in a fixed order: per frame, track
//! boxes then actors (miss draw, confidence draw, two jitter draws for each),
//! then the false-positive draws.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::Calibration;
use crate::geometry::{BoundingBox, Point, Polyline};
use crate::ingest::{ClassLabel, Detection, FrameRecord, StreamHeader};
use crate::metrics::GroundTruthFrame;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("malformed scenario: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConfidenceModel {
    Constant(f64),
    /// Uniform in `[lo, hi]`.
    Uniform([f64; 2]),
}

impl ConfidenceModel {
    fn validate(&self) -> Result<(), String> {
        let ok = |v: f64| (0.0..=1.0).contains(&v);
        match *self {
            ConfidenceModel::Constant(c) if ok(c) => Ok(()),
            ConfidenceModel::Uniform([lo, hi]) if ok(lo) && ok(hi) && lo <= hi => Ok(()),
            other => Err(format!("confidence model {other:?} must lie within [0, 1]")),
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            ConfidenceModel::Constant(c) => c,
            ConfidenceModel::Uniform([lo, hi]) => lo + (hi - lo) * rng.random::<f64>(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActorSpec {
    #[serde(rename = "class")]
    pub class_label: ClassLabel,
    /// Ground position at t = 0, meters.
    pub start: Point,
    /// Meters per second.
    pub velocity: Point,
    /// Ground footprint `[width, height]` in meters.
    pub size_m: [f64; 2],
    pub confidence: ConfidenceModel,
}

impl ActorSpec {
    pub fn position_at(&self, t: f64) -> Point {
        Point::new(self.start.x + self.velocity.x * t, self.start.y + self.velocity.y * t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    /// Standard deviation of Gaussian jitter on box centers, pixels.
    pub center_jitter_px: f64,
    /// Probability per frame of one spurious `object` detection.
    pub false_positive_rate: f64,
    /// Probability that any single detection is dropped.
    pub miss_rate: f64,
}

impl NoiseSpec {
    pub fn is_zero(&self) -> bool {
        self.center_jitter_px == 0.0 && self.false_positive_rate == 0.0 && self.miss_rate == 0.0
    }
}

fn default_source_id() -> String {
    "synthetic".into()
}

fn default_track_box() -> [f64; 2] {
    [0.5, 0.5]
}

fn default_track_confidence() -> ConfidenceModel {
    ConfidenceModel::Constant(0.95)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_source_id")]
    pub source_id: String,
    pub seed: u64,
    pub duration_s: f64,
    pub fps: f64,
    pub frame_width: u32,
    pub frame_height: u32,
    /// Ground-plane track vertices, meters.
    pub track: Polyline,
    #[serde(default = "default_track_box")]
    pub track_box_m: [f64; 2],
    #[serde(default = "default_track_confidence")]
    pub track_confidence: ConfidenceModel,
    pub actors: Vec<ActorSpec>,
    #[serde(default)]
    pub noise: NoiseSpec,
    pub calibration: Calibration,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Invalid(m));
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return bad(format!("fps must be > 0, got {}", self.fps));
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return bad(format!("duration_s must be > 0, got {}", self.duration_s));
        }
        if self.frame_width == 0 || self.frame_height == 0 {
            return bad("frame dimensions must be > 0".into());
        }
        if self.track_box_m.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return bad("track_box_m must be positive".into());
        }
        self.track_confidence.validate().map_err(SimError::Invalid)?;
        for (i, a) in self.actors.iter().enumerate() {
            if a.size_m.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return bad(format!("actor {i}: size_m must be positive"));
            }
            if a.class_label == ClassLabel::Track {
                return bad(format!("actor {i}: actors cannot be of class track"));
            }
            if !(a.start.is_finite() && a.velocity.is_finite()) {
                return bad(format!("actor {i}: start and velocity must be finite"));
            }
            a.confidence
                .validate()
                .map_err(|m| SimError::Invalid(format!("actor {i}: {m}")))?;
        }
        let n = &self.noise;
        if !(n.center_jitter_px.is_finite() && n.center_jitter_px >= 0.0) {
            return bad("center_jitter_px must be >= 0".into());
        }
        for (name, r) in [("false_positive_rate", n.false_positive_rate), ("miss_rate", n.miss_rate)] {
            if !(0.0..=1.0).contains(&r) {
                return bad(format!("{name} must lie in [0, 1], got {r}"));
            }
        }
        Ok(())
    }

    pub fn frame_count(&self) -> u64 {
        (self.duration_s * self.fps).round() as u64
    }

    pub fn time_of(&self, frame_index: u64) -> f64 {
        frame_index as f64 / self.fps
    }

    pub fn timestamp_ms(&self, frame_index: u64) -> u64 {
        (frame_index as f64 * 1000.0 / self.fps).round() as u64
    }

    pub fn header(&self) -> StreamHeader {
        StreamHeader {
            source_id: self.source_id.clone(),
            frame_width: self.frame_width,
            frame_height: self.frame_height,
            fps: self.fps,
        }
    }

    /// Noise-free ground distance from an actor to the track at a frame.
    pub fn true_distance(&self, actor: usize, frame_index: u64) -> f64 {
        let pos = self.actors[actor].position_at(self.time_of(frame_index));
        self.track.distance_to(pos)
    }

    /// A person walking straight at a vertical track: 5 m away at t = 0,
    /// 1 m/s, 10 fps, 6 s, 0.01 m per pixel. The first frame within 1 m is 40.
    pub fn linear_approach() -> Self {
        Scenario {
            source_id: "linear-approach".into(),
            seed: 0,
            duration_s: 6.0,
            fps: 10.0,
            frame_width: 1920,
            frame_height: 1080,
            track: Polyline::new(vec![Point::new(5.0, 0.5), Point::new(5.0, 10.5)]).expect("static track"),
            track_box_m: default_track_box(),
            track_confidence: default_track_confidence(),
            actors: vec![ActorSpec {
                class_label: ClassLabel::Person,
                start: Point::new(10.0, 5.0),
                velocity: Point::new(-1.0, 0.0),
                size_m: [0.5, 1.7],
                confidence: ConfidenceModel::Constant(0.9),
            }],
            noise: NoiseSpec::default(),
            calibration: Calibration::Scalar {
                meters_per_pixel: 0.01,
            },
        }
    }

    /// A noise-free random scenario with a scalar calibration: a track of two
    /// to four vertices running top to bottom, one person and possibly one
    /// object, each moving between two points that keep its box in frame.
    pub fn randomized(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_5CE4_A510_0000);
        let (w, h) = (1280u32, 720u32);
        let mpp = rng.random_range(0.01..0.03);
        let (gw, gh) = (w as f64 * mpp, h as f64 * mpp);

        let n_vertices = rng.random_range(2..=4usize);
        let mut track = Vec::with_capacity(n_vertices);
        for i in 0..n_vertices {
            let frac = 0.05 + 0.9 * i as f64 / (n_vertices - 1) as f64;
            let x = gw * rng.random_range(0.35..0.65);
            track.push(Point::new(x, gh * frac));
        }

        let mut actors = Vec::new();
        let classes: &[ClassLabel] = if rng.random_bool(0.5) {
            &[ClassLabel::Person, ClassLabel::Object]
        } else {
            &[ClassLabel::Person]
        };
        let duration_s = rng.random_range(4.0..8.0);
        for &class_label in classes {
            let size_m = [rng.random_range(0.3..0.8), rng.random_range(0.5..1.8)];
            let margin_x = size_m[0] * 0.6;
            let margin_y = size_m[1] * 0.6;
            let pick = |rng: &mut ChaCha8Rng| {
                Point::new(
                    rng.random_range(margin_x..gw - margin_x),
                    rng.random_range(margin_y..gh - margin_y),
                )
            };
            let start = pick(&mut rng);
            // Half the time head for a point near the track so breaches occur.
            let end = if rng.random_bool(0.5) {
                let v = track[rng.random_range(0..track.len())];
                let x = (v.x + rng.random_range(-1.5..1.5)).clamp(margin_x, gw - margin_x);
                Point::new(x, v.y.clamp(margin_y, gh - margin_y))
            } else {
                pick(&mut rng)
            };
            actors.push(ActorSpec {
                class_label,
                start,
                velocity: Point::new((end.x - start.x) / duration_s, (end.y - start.y) / duration_s),
                size_m,
                confidence: ConfidenceModel::Constant(0.9),
            });
        }

        Scenario {
            source_id: format!("random-{seed}"),
            seed,
            duration_s,
            fps: [10.0, 15.0, 25.0, 30.0][rng.random_range(0..4)],
            frame_width: w,
            frame_height: h,
            track: Polyline::new(track).expect("finite random track"),
            track_box_m: default_track_box(),
            track_confidence: default_track_confidence(),
            actors,
            noise: NoiseSpec::default(),
            calibration: Calibration::Scalar { meters_per_pixel: mpp },
        }
    }
}

/// A box that had to be clipped to the frame, or could not be projected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClipRecord {
    pub frame_index: u64,
    /// `None` for track boxes.
    pub actor: Option<usize>,
    pub unprojectable: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthBundle {
    /// Noise-free boxes in the detection wire format, confidence 1.0.
    pub frames: Vec<FrameRecord>,
    /// `[actor][frame]` noise-free ground distance to the track, meters.
    pub actor_distances: Vec<Vec<f64>>,
    pub clipped: Vec<ClipRecord>,
}

impl GroundTruthBundle {
    pub fn ground_truth_frames(&self) -> Vec<GroundTruthFrame> {
        self.frames
            .iter()
            .map(|f| GroundTruthFrame::from_frame(f).expect("generated with unit confidence"))
            .collect()
    }

    /// Frames where the actor's true distance is within `threshold_m`.
    pub fn breach_frames(&self, actor: usize, threshold_m: f64) -> Vec<u64> {
        self.actor_distances[actor]
            .iter()
            .enumerate()
            .filter(|(_, d)| **d <= threshold_m)
            .map(|(k, _)| k as u64)
            .collect()
    }
}

/// Ground footprint of `size` centered at `center`, as a pixel box centered
/// on the projected center. Returns `None` when the center cannot be projected.
fn pixel_box(cal: &Calibration, center: Point, size: [f64; 2]) -> Option<(Point, f64, f64)> {
    let c = cal.project_to_image(center).ok()?;
    let (hw, hh) = (size[0] / 2.0, size[1] / 2.0);
    let mut half_w: f64 = 0.0;
    let mut half_h: f64 = 0.0;
    for (dx, dy) in [(-hw, -hh), (hw, -hh), (-hw, hh), (hw, hh)] {
        if let Ok(p) = cal.project_to_image(Point::new(center.x + dx, center.y + dy)) {
            half_w = half_w.max((p.x - c.x).abs());
            half_h = half_h.max((p.y - c.y).abs());
        }
    }
    Some((c, half_w, half_h))
}

/// Generates the detection stream and its ground truth. Deterministic in the
/// scenario (including its seed).
pub fn generate(scenario: &Scenario) -> (StreamHeader, Vec<FrameRecord>, GroundTruthBundle) {
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let jitter = Normal::new(0.0, scenario.noise.center_jitter_px).expect("validated std");
    let (fw, fh) = (scenario.frame_width as f64, scenario.frame_height as f64);
    let n = scenario.frame_count();

    let mut frames = Vec::with_capacity(n as usize);
    let mut bundle = GroundTruthBundle {
        frames: Vec::with_capacity(n as usize),
        actor_distances: vec![Vec::with_capacity(n as usize); scenario.actors.len()],
        clipped: Vec::new(),
    };

    // (class, ground center, ground size, confidence model, actor index)
    let track_items = scenario.track.vertices().iter().map(|&v| {
        (ClassLabel::Track, v, scenario.track_box_m, scenario.track_confidence, None)
    });

    for k in 0..n {
        let t = scenario.time_of(k);
        let items: Vec<_> = track_items
            .clone()
            .chain(scenario.actors.iter().enumerate().map(|(i, a)| {
                (a.class_label, a.position_at(t), a.size_m, a.confidence, Some(i))
            }))
            .collect();

        let mut detections = Vec::new();
        let mut truth = Vec::new();
        for (class_label, ground, size, conf_model, actor) in items {
            let missed = scenario.noise.miss_rate > 0.0 && rng.random_bool(scenario.noise.miss_rate);
            let confidence = conf_model.draw(&mut rng);
            let (jx, jy) = if scenario.noise.center_jitter_px > 0.0 {
                (jitter.sample(&mut rng), jitter.sample(&mut rng))
            } else {
                (0.0, 0.0)
            };
            let Some((c, hw, hh)) = pixel_box(&scenario.calibration, ground, size) else {
                bundle.clipped.push(ClipRecord {
                    frame_index: k,
                    actor,
                    unprojectable: true,
                });
                continue;
            };
            let make = |cx: f64, cy: f64| {
                BoundingBox::new(cx - hw, cy - hh, cx + hw, cy + hh)
                    .ok()
                    .map(|b| b.clip_to(fw, fh))
            };
            let Some((true_box, clipped)) = make(c.x, c.y) else {
                continue;
            };
            if clipped {
                bundle.clipped.push(ClipRecord {
                    frame_index: k,
                    actor,
                    unprojectable: false,
                });
            }
            truth.push(Detection::new(class_label, true_box, 1.0));
            if !missed {
                if let Some((b, _)) = make(c.x + jx, c.y + jy) {
                    detections.push(Detection::new(class_label, b, confidence));
                }
            }
        }

        if scenario.noise.false_positive_rate > 0.0 && rng.random_bool(scenario.noise.false_positive_rate) {
            let bw = rng.random_range(20.0..80.0);
            let bh = rng.random_range(20.0..80.0);
            let x = rng.random_range(0.0..(fw - bw).max(1.0));
            let y = rng.random_range(0.0..(fh - bh).max(1.0));
            let confidence = rng.random_range(0.25..0.6);
            if let Ok(b) = BoundingBox::new(x, y, x + bw, y + bh) {
                detections.push(Detection::new(ClassLabel::Object, b.clip_to(fw, fh).0, confidence));
            }
        }

        for (i, d) in bundle.actor_distances.iter_mut().enumerate() {
            d.push(scenario.true_distance(i, k));
        }
        let ts = scenario.timestamp_ms(k);
        frames.push(FrameRecord::new(k, ts, detections));
        bundle.frames.push(FrameRecord::new(k, ts, truth));
    }

    (scenario.header(), frames, bundle)
}

/// Closed interval of times, possibly unbounded.
type Interval = (f64, f64);

/// `{t : a t^2 + b t + c <= 0}` for `a >= 0`.
fn quadratic_below_zero(a: f64, b: f64, c: f64) -> Option<Interval> {
    if a == 0.0 {
        return linear_within(c, b, f64::NEG_INFINITY, 0.0);
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    let s = disc.sqrt();
    Some(((-b - s) / (2.0 * a), (-b + s) / (2.0 * a)))
}

/// `{t : lo <= alpha + beta t <= hi}`.
fn linear_within(alpha: f64, beta: f64, lo: f64, hi: f64) -> Option<Interval> {
    if beta == 0.0 {
        return (lo <= alpha && alpha <= hi).then_some((f64::NEG_INFINITY, f64::INFINITY));
    }
    let t1 = (lo - alpha) / beta;
    let t2 = (hi - alpha) / beta;
    Some((t1.min(t2), t1.max(t2)))
}

fn intersect(a: Option<Interval>, b: Option<Interval>) -> Option<Interval> {
    let (a, b) = (a?, b?);
    let lo = a.0.max(b.0);
    let hi = a.1.min(b.1);
    (lo <= hi).then_some((lo, hi))
}

/// Times at which `p0 + v t` lies within `radius` of the segment `ab`.
///
/// The set of such points is a capsule (convex), so the answer is a single
/// interval: the hull of its pieces around either endpoint disc and the slab
/// alongside the segment.
fn capsule_times(p0: Point, v: Point, a: Point, b: Point, radius: f64) -> Option<Interval> {
    let disc = |c: Point| {
        let (dx, dy) = (p0.x - c.x, p0.y - c.y);
        quadratic_below_zero(
            v.x * v.x + v.y * v.y,
            2.0 * (v.x * dx + v.y * dy),
            dx * dx + dy * dy - radius * radius,
        )
    };
    let mut pieces = vec![disc(a), disc(b)];
    let (ex, ey) = (b.x - a.x, b.y - a.y);
    let len_sq = ex * ex + ey * ey;
    if len_sq > 0.0 {
        let len = len_sq.sqrt();
        let (rx, ry) = (p0.x - a.x, p0.y - a.y);
        // Projection parameter along ab and signed offset from it, both linear in t.
        let along = linear_within((rx * ex + ry * ey) / len_sq, (v.x * ex + v.y * ey) / len_sq, 0.0, 1.0);
        let offset = linear_within((ex * ry - ey * rx) / len, (ex * v.y - ey * v.x) / len, -radius, radius);
        pieces.push(intersect(along, offset));
    }
    pieces
        .into_iter()
        .flatten()
        .reduce(|x, y| (x.0.min(y.0), x.1.max(y.1)))
}

/// Frames at which the actor's noise-free ground distance to the track is
/// `<= threshold_m`, solved from the linear motion model.
///
/// Each segment contributes one time interval. Frames strictly inside an
/// interval are taken as is; the frames on either side of each interval edge
/// are settled by evaluating the distance at that frame, so rounding in the
/// root computation cannot shift an edge.
pub fn breach_oracle(scenario: &Scenario, actor: usize, threshold_m: f64) -> Vec<u64> {
    let spec = &scenario.actors[actor];
    let n = scenario.frame_count();
    if n == 0 {
        return Vec::new();
    }
    let last = n - 1;
    let mut frames = BTreeSet::new();
    for (a, b) in scenario.track.segments() {
        let Some((lo, hi)) = capsule_times(spec.start, spec.velocity, a, b, threshold_m) else {
            continue;
        };
        let k_lo = (lo * scenario.fps).ceil();
        let k_hi = (hi * scenario.fps).floor();
        if k_hi < -1.0 || k_lo > last as f64 + 1.0 {
            continue;
        }
        let first = (k_lo - 1.0).max(0.0) as u64;
        let end = (k_hi + 1.0).min(last as f64) as u64;
        for k in first..=end {
            let kf = k as f64;
            let interior = kf > k_lo && kf < k_hi;
            if interior || scenario.true_distance(actor, k) <= threshold_m {
                frames.insert(k);
            }
        }
    }
    frames.into_iter().collect()
}

/// Collapses sorted frame indices into inclusive `[first, last]` runs.
pub fn to_intervals(frames: &[u64]) -> Vec<[u64; 2]> {
    let mut out: Vec<[u64; 2]> = Vec::new();
    for &k in frames {
        match out.last_mut() {
            Some(run) if run[1] + 1 == k => run[1] = k,
            _ => out.push([k, k]),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActorBreaches {
    pub actor: usize,
    #[serde(rename = "class")]
    pub class_label: ClassLabel,
    pub intervals: Vec<[u64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BreachDocument {
    pub source_id: String,
    pub threshold_m: f64,
    pub frames: u64,
    pub actors: Vec<ActorBreaches>,
}

pub fn breach_document(scenario: &Scenario, threshold_m: f64) -> BreachDocument {
    BreachDocument {
        source_id: scenario.source_id.clone(),
        threshold_m,
        frames: scenario.frame_count(),
        actors: scenario
            .actors
            .iter()
            .enumerate()
            .map(|(i, a)| ActorBreaches {
                actor: i,
                class_label: a.class_label,
                intervals: to_intervals(&breach_oracle(scenario, i, threshold_m)),
            })
            .collect(),
    }
}
