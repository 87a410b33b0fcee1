//! Reference computations used to check the library. Each one takes a
//! different route from the code it checks: rasterizing instead of
//! intersecting, sampling instead of projecting, re-matching at every
//! threshold instead of reading one matching pass.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use railguard_core::geometry::{BoundingBox, Point};
use railguard_core::ingest::{ClassLabel, Detection};

/// IoU of integer-coordinate boxes by counting unit pixels.
pub fn raster_iou(a: [i64; 4], b: [i64; 4]) -> f64 {
    let (mut inter, mut union) = (0u64, 0u64);
    let inside = |r: [i64; 4], x: i64, y: i64| x >= r[0] && x < r[2] && y >= r[1] && y < r[3];
    let x_lo = a[0].min(b[0]);
    let x_hi = a[2].max(b[2]);
    let y_lo = a[1].min(b[1]);
    let y_hi = a[3].max(b[3]);
    for x in x_lo..x_hi {
        for y in y_lo..y_hi {
            let (ia, ib) = (inside(a, x, y), inside(b, x, y));
            if ia && ib {
                inter += 1;
            }
            if ia || ib {
                union += 1;
            }
        }
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Minimum distance from `p` to `samples + 1` evenly spaced points on each
/// segment of `vertices`.
pub fn sampled_polyline_distance(p: Point, vertices: &[Point], samples: usize) -> f64 {
    let d = |q: (f64, f64)| ((p.x - q.0).powi(2) + (p.y - q.1).powi(2)).sqrt();
    if vertices.len() == 1 {
        return d((vertices[0].x, vertices[0].y));
    }
    let mut best = f64::INFINITY;
    for w in vertices.windows(2) {
        for i in 0..=samples {
            let t = i as f64 / samples as f64;
            let q = (w[0].x + t * (w[1].x - w[0].x), w[0].y + t * (w[1].y - w[0].y));
            best = best.min(d(q));
        }
    }
    best
}

fn plain_iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let ix = (a.x2().min(b.x2()) - a.x1().max(b.x1())).max(0.0);
    let iy = (a.y2().min(b.y2()) - a.y1().max(b.y1())).max(0.0);
    let inter = ix * iy;
    let union = (a.x2() - a.x1()) * (a.y2() - a.y1()) + (b.x2() - b.x1()) * (b.y2() - b.y1()) - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

fn lex(b: &BoundingBox) -> [f64; 4] {
    [b.x1(), b.y1(), b.x2(), b.y2()]
}

fn lex_less(a: [f64; 4], b: [f64; 4]) -> bool {
    for i in 0..4 {
        if a[i] != b[i] {
            return a[i] < b[i];
        }
    }
    false
}

/// One frame of an evaluation instance.
#[derive(Debug, Clone)]
pub struct OracleFrame {
    pub preds: Vec<Detection>,
    pub gt: Vec<(ClassLabel, BoundingBox)>,
}

/// Naive greedy matching of the predictions with confidence `>= t`.
/// Returns (tp, fp, fn).
pub fn recount_frame(frame: &OracleFrame, t: f64, iou_threshold: f64, class: ClassLabel) -> (usize, usize, usize) {
    let mut remaining: Vec<&Detection> = frame
        .preds
        .iter()
        .filter(|d| d.class_label == class && d.confidence >= t)
        .collect();
    let mut free: Vec<Option<BoundingBox>> = frame
        .gt
        .iter()
        .map(|(c, b)| (*c == class).then_some(*b))
        .collect();
    let gt_total = free.iter().flatten().count();
    let (mut tp, mut fp) = (0, 0);
    while !remaining.is_empty() {
        // Selection-sort style: pull the next prediction by the documented order.
        let mut pick = 0;
        for i in 1..remaining.len() {
            let (a, b) = (remaining[i], remaining[pick]);
            if a.confidence > b.confidence
                || (a.confidence == b.confidence && lex_less(lex(&a.bbox), lex(&b.bbox)))
            {
                pick = i;
            }
        }
        let pred = remaining.remove(pick);
        let mut best: Option<(usize, f64)> = None;
        for (j, g) in free.iter().enumerate() {
            let Some(g) = g else { continue };
            let iou = plain_iou(&pred.bbox, g);
            let take = match best {
                None => true,
                Some((bj, bi)) => iou > bi || (iou == bi && lex_less(lex(g), lex(&free[bj].unwrap()))),
            };
            if take {
                best = Some((j, iou));
            }
        }
        match best {
            Some((j, iou)) if iou >= iou_threshold => {
                free[j] = None;
                tp += 1;
            }
            _ => fp += 1,
        }
    }
    (tp, fp, gt_total - tp)
}

pub fn recount(frames: &[OracleFrame], t: f64, iou_threshold: f64, class: ClassLabel) -> (usize, usize, usize) {
    frames.iter().fold((0, 0, 0), |acc, f| {
        let (a, b, c) = recount_frame(f, t, iou_threshold, class);
        (acc.0 + a, acc.1 + b, acc.2 + c)
    })
}

/// AP from recounts at every distinct confidence, integrating the precision
/// envelope step by step over recall.
pub fn envelope_ap(frames: &[OracleFrame], iou_threshold: f64, class: ClassLabel) -> f64 {
    let (_, _, gt) = recount(frames, f64::INFINITY, iou_threshold, class);
    if gt == 0 {
        return 0.0;
    }
    let mut confs: Vec<f64> = frames
        .iter()
        .flat_map(|f| f.preds.iter())
        .filter(|d| d.class_label == class)
        .map(|d| d.confidence)
        .collect();
    confs.sort_by(|a, b| b.partial_cmp(a).unwrap());
    confs.dedup();
    let points: Vec<(f64, f64)> = confs
        .iter()
        .map(|&t| {
            let (tp, fp, fne) = recount(frames, t, iou_threshold, class);
            (tp as f64 / (tp + fne) as f64, tp as f64 / (tp + fp) as f64)
        })
        .collect();
    let mut ap = 0.0;
    let mut prev = 0.0;
    for (i, &(r, _)) in points.iter().enumerate() {
        let env = points[i..].iter().map(|p| p.1).fold(0.0, f64::max);
        ap += (r - prev) * env;
        prev = r;
    }
    ap
}

/// A random evaluation instance with at most `max_preds` predictions.
/// Confidences are sometimes rounded to two decimals to create ties.
pub fn random_instance(rng: &mut ChaCha8Rng, max_preds: usize) -> Vec<OracleFrame> {
    let n_frames = rng.random_range(1..=5);
    let mut budget = rng.random_range(0..=max_preds);
    let classes = [ClassLabel::Person, ClassLabel::Object, ClassLabel::Track];
    let round = rng.random_bool(0.5);
    let rand_box = |rng: &mut ChaCha8Rng| {
        let x = rng.random_range(0.0..200.0);
        let y = rng.random_range(0.0..200.0);
        let w = rng.random_range(2.0..40.0);
        let h = rng.random_range(2.0..40.0);
        BoundingBox::new(x, y, x + w, y + h).unwrap()
    };
    let mut frames = Vec::new();
    for f in 0..n_frames {
        let n_gt = rng.random_range(0..=10);
        let gt: Vec<(ClassLabel, BoundingBox)> = (0..n_gt)
            .map(|_| (classes[rng.random_range(0..3)], rand_box(rng)))
            .collect();
        let share = if f + 1 == n_frames { budget } else { rng.random_range(0..=budget) };
        budget -= share;
        let mut preds = Vec::with_capacity(share);
        for _ in 0..share {
            let conf: f64 = rng.random();
            let confidence = if round { (conf * 100.0).round() / 100.0 } else { conf };
            let (class, bbox) = if !gt.is_empty() && rng.random_bool(0.6) {
                let (c, g) = gt[rng.random_range(0..gt.len())];
                let j = |rng: &mut ChaCha8Rng| rng.random_range(-6.0..6.0);
                let (x1, y1) = (g.x1() + j(rng), g.y1() + j(rng));
                let (x2, y2) = (g.x2() + j(rng), g.y2() + j(rng));
                let b = BoundingBox::new(x1.min(x2), y1.min(y2), x1.max(x2), y1.max(y2)).unwrap();
                let c = if rng.random_bool(0.9) { c } else { classes[rng.random_range(0..3)] };
                (c, b)
            } else {
                (classes[rng.random_range(0..3)], rand_box(rng))
            };
            preds.push(Detection::new(class, bbox, confidence));
        }
        frames.push(OracleFrame { preds, gt });
    }
    frames
}

/// Generic homogeneous transform through nalgebra.
pub fn nalgebra_project(m: [[f64; 3]; 3], p: Point) -> Point {
    let h = nalgebra::Matrix3::new(
        m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
    );
    let v = h * nalgebra::Vector3::new(p.x, p.y, 1.0);
    Point::new(v.x / v.z, v.y / v.z)
}
