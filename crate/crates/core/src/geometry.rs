//! Bounding-box and distance primitives.
//!
//! Everything here is a pure function over small `Copy` values. Boxes are
//! kept in corner form `(x1, y1, x2, y2)`; use [`BoundingBox::from_xywh`] to
//! build one from an annotation-style `(x, y, width, height)` tuple.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("coordinate is not finite")]
    NonFinite,
    #[error("inverted box: ({x1}, {y1}, {x2}, {y2})")]
    Inverted { x1: f64, y1: f64, x2: f64, y2: f64 },
    #[error("polyline needs at least one vertex")]
    EmptyPolyline,
}

/// A point in continuous pixel (or ground-plane) coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl From<[f64; 2]> for Point {
    fn from([x, y]: [f64; 2]) -> Self {
        Point { x, y }
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Straight-line distance to `other`.
    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Free-function form of [`Point::distance`].
pub fn euclidean_distance(a: Point, b: Point) -> f64 {
    a.distance(&b)
}

/// Axis-aligned rectangle in corner form. Zero-area boxes are valid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

impl TryFrom<[f64; 4]> for BoundingBox {
    type Error = GeometryError;

    fn try_from([x1, y1, x2, y2]: [f64; 4]) -> Result<Self, Self::Error> {
        BoundingBox::new(x1, y1, x2, y2)
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        [b.x1, b.y1, b.x2, b.y2]
    }
}

impl BoundingBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self, GeometryError> {
        if ![x1, y1, x2, y2].iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        if x1 > x2 || y1 > y2 {
            return Err(GeometryError::Inverted { x1, y1, x2, y2 });
        }
        Ok(BoundingBox { x1, y1, x2, y2 })
    }

    /// Builds a box from top-left corner plus extent.
    pub fn from_xywh(x: f64, y: f64, width: f64, height: f64) -> Result<Self, GeometryError> {
        BoundingBox::new(x, y, x + width, y + height)
    }

    pub fn x1(&self) -> f64 {
        self.x1
    }

    pub fn y1(&self) -> f64 {
        self.y1
    }

    pub fn x2(&self) -> f64 {
        self.x2
    }

    pub fn y2(&self) -> f64 {
        self.y2
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Midpoint, computed as `x1 + (x2 - x1) / 2` on each axis.
    pub fn center(&self) -> Point {
        Point {
            x: self.x1 + (self.x2 - self.x1) / 2.0,
            y: self.y1 + (self.y2 - self.y1) / 2.0,
        }
    }

    pub fn intersection_area(&self, other: &BoundingBox) -> f64 {
        let w = self.x2.min(other.x2) - self.x1.max(other.x1);
        let h = self.y2.min(other.y2) - self.y1.max(other.y1);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    /// Intersection over union. Two zero-area boxes give 0 rather than NaN.
    pub fn iou(&self, other: &BoundingBox) -> f64 {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            (inter / union).clamp(0.0, 1.0)
        }
    }

    /// Clips the box to `[0, width] x [0, height]`. Returns the clipped box and
    /// whether anything changed.
    pub fn clip_to(&self, width: f64, height: f64) -> (BoundingBox, bool) {
        let x1 = self.x1.clamp(0.0, width);
        let y1 = self.y1.clamp(0.0, height);
        let x2 = self.x2.clamp(0.0, width);
        let y2 = self.y2.clamp(0.0, height);
        let clipped = BoundingBox { x1, y1, x2, y2 };
        (clipped, clipped != *self)
    }
}

pub fn bbox_center(b: &BoundingBox) -> Point {
    b.center()
}

pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    a.iou(b)
}

/// Ordered vertex chain with at least one vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Point>", into = "Vec<Point>")]
pub struct Polyline {
    vertices: Vec<Point>,
}

impl TryFrom<Vec<Point>> for Polyline {
    type Error = GeometryError;

    fn try_from(vertices: Vec<Point>) -> Result<Self, Self::Error> {
        Polyline::new(vertices)
    }
}

impl From<Polyline> for Vec<Point> {
    fn from(line: Polyline) -> Self {
        line.vertices
    }
}

impl Polyline {
    pub fn new(vertices: Vec<Point>) -> Result<Self, GeometryError> {
        if vertices.is_empty() {
            return Err(GeometryError::EmptyPolyline);
        }
        if !vertices.iter().all(Point::is_finite) {
            return Err(GeometryError::NonFinite);
        }
        Ok(Polyline { vertices })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    /// Consecutive vertex pairs. A single-vertex polyline yields one
    /// degenerate segment so callers never see an empty iterator.
    pub fn segments(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let single = (self.vertices.len() == 1).then(|| (self.vertices[0], self.vertices[0]));
        self.vertices
            .windows(2)
            .map(|w| (w[0], w[1]))
            .chain(single)
    }

    /// Smallest distance from `p` to any segment of the chain.
    pub fn distance_to(&self, p: Point) -> f64 {
        self.segments()
            .map(|(a, b)| point_to_segment_distance(p, a, b))
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn point_to_polyline_distance(p: Point, line: &Polyline) -> f64 {
    line.distance_to(p)
}

/// Distance from `p` to the closed segment `ab`, clamping to the endpoints.
pub fn point_to_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let dx = b.x - a.x;
    let dy = b.y - a.y;
    let len_sq = dx * dx + dy * dy;
    if len_sq == 0.0 {
        return p.distance(&a);
    }
    let t = ((p.x - a.x) * dx + (p.y - a.y) * dy) / len_sq;
    let (to_a, to_b) = (p.distance(&a), p.distance(&b));
    if t <= 0.0 {
        return to_a;
    }
    if t >= 1.0 {
        return to_b;
    }
    // The interior foot is never farther than either endpoint; the min keeps
    // rounding from breaking that.
    let foot = Point::new(a.x + t * dx, a.y + t * dy);
    p.distance(&foot).min(to_a).min(to_b)
}
