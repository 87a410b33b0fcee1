//! Pixel to ground-plane conversion.
//!
//! Two mappings are supported: a constant meters-per-pixel scale, and a
//! planar homography for perspective views where the scale changes with the
//! image row.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point;

/// Points whose projected `w` falls at or below this magnitude sit on or past
/// the vanishing line and have no ground position.
pub const HORIZON_EPSILON: f64 = 1e-9;

/// Homographies with `|det|` at or below this are rejected as singular.
pub const SINGULAR_EPSILON: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("point ({x}, {y}) projects to the horizon (|w| = {w:e})")]
    Horizon { x: f64, y: f64, w: f64 },
    #[error("malformed calibration document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid calibration: {0}")]
    Invalid(String),
}

pub type Matrix3 = [[f64; 3]; 3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CalibrationDoc", into = "CalibrationDoc")]
pub enum Calibration {
    Scalar { meters_per_pixel: f64 },
    Homography { matrix: Matrix3 },
}

impl Default for Calibration {
    /// Pixels read as meters. Callers should warn when falling back to this.
    fn default() -> Self {
        Calibration::Scalar {
            meters_per_pixel: 1.0,
        }
    }
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
enum CalibrationDoc {
    Scalar { meters_per_pixel: f64 },
    Homography { matrix: Matrix3 },
}

impl TryFrom<CalibrationDoc> for Calibration {
    type Error = CalibrationError;

    fn try_from(doc: CalibrationDoc) -> Result<Self, Self::Error> {
        let c = match doc {
            CalibrationDoc::Scalar { meters_per_pixel } => Calibration::Scalar { meters_per_pixel },
            CalibrationDoc::Homography { matrix } => Calibration::Homography { matrix },
        };
        c.validate()?;
        Ok(c)
    }
}

impl From<Calibration> for CalibrationDoc {
    fn from(c: Calibration) -> Self {
        match c {
            Calibration::Scalar { meters_per_pixel } => CalibrationDoc::Scalar { meters_per_pixel },
            Calibration::Homography { matrix } => CalibrationDoc::Homography { matrix },
        }
    }
}

impl Calibration {
    pub fn scalar(meters_per_pixel: f64) -> Result<Self, CalibrationError> {
        let c = Calibration::Scalar { meters_per_pixel };
        c.validate()?;
        Ok(c)
    }

    pub fn homography(matrix: Matrix3) -> Result<Self, CalibrationError> {
        let c = Calibration::Homography { matrix };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), CalibrationError> {
        match self {
            Calibration::Scalar { meters_per_pixel: s } => {
                if !s.is_finite() || *s <= 0.0 {
                    return Err(CalibrationError::Invalid(format!(
                        "meters_per_pixel must be finite and > 0, got {s}"
                    )));
                }
            }
            Calibration::Homography { matrix } => {
                if !matrix.iter().flatten().all(|v| v.is_finite()) {
                    return Err(CalibrationError::Invalid(
                        "homography entries must be finite".into(),
                    ));
                }
                let det = determinant(matrix);
                if det.abs() <= SINGULAR_EPSILON {
                    return Err(CalibrationError::Invalid(format!(
                        "homography is singular (det = {det:e})"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Parses and validates a JSON calibration document.
    pub fn parse(document: &str) -> Result<Self, CalibrationError> {
        serde_json::from_str::<CalibrationDoc>(document)?.try_into()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("calibration serializes")
    }

    /// Maps an image point to ground coordinates in meters.
    pub fn project_to_ground(&self, p: Point) -> Result<Point, CalibrationError> {
        match self {
            Calibration::Scalar { meters_per_pixel: s } => Ok(Point::new(p.x * s, p.y * s)),
            Calibration::Homography { matrix } => apply_homogeneous(matrix, p),
        }
    }

    /// Inverse of [`project_to_ground`](Self::project_to_ground).
    pub fn project_to_image(&self, g: Point) -> Result<Point, CalibrationError> {
        match self {
            Calibration::Scalar { meters_per_pixel: s } => Ok(Point::new(g.x / s, g.y / s)),
            Calibration::Homography { matrix } => apply_homogeneous(&inverse(matrix), g),
        }
    }

    /// Ground-plane distance in meters between two image points.
    pub fn metric_distance(&self, a: Point, b: Point) -> Result<f64, CalibrationError> {
        let ga = self.project_to_ground(a)?;
        let gb = self.project_to_ground(b)?;
        Ok(ga.distance(&gb))
    }
}

pub fn parse_calibration(document: &str) -> Result<Calibration, CalibrationError> {
    Calibration::parse(document)
}

pub fn project_to_ground(c: &Calibration, p: Point) -> Result<Point, CalibrationError> {
    c.project_to_ground(p)
}

pub fn metric_distance(c: &Calibration, a: Point, b: Point) -> Result<f64, CalibrationError> {
    c.metric_distance(a, b)
}

fn apply_homogeneous(m: &Matrix3, p: Point) -> Result<Point, CalibrationError> {
    let x = m[0][0] * p.x + m[0][1] * p.y + m[0][2];
    let y = m[1][0] * p.x + m[1][1] * p.y + m[1][2];
    let w = m[2][0] * p.x + m[2][1] * p.y + m[2][2];
    if w.abs() <= HORIZON_EPSILON {
        return Err(CalibrationError::Horizon { x: p.x, y: p.y, w });
    }
    Ok(Point::new(x / w, y / w))
}

fn determinant(m: &Matrix3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

// Adjugate over determinant. Only called on validated (non-singular) matrices.
fn inverse(m: &Matrix3) -> Matrix3 {
    let det = determinant(m);
    let cof = |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    [
        [cof(1, 2, 1, 2) / det, -cof(0, 2, 1, 2) / det, cof(0, 1, 1, 2) / det],
        [-cof(1, 2, 0, 2) / det, cof(0, 2, 0, 2) / det, -cof(0, 1, 0, 2) / det],
        [cof(1, 2, 0, 1) / det, -cof(0, 2, 0, 1) / det, cof(0, 1, 0, 1) / det],
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    const IDENTITY: Matrix3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

    #[test]
    fn scalar_projection() {
        let c = Calibration::scalar(0.01).unwrap();
        let g = c.project_to_ground(Point::new(250.0, 100.0)).unwrap();
        assert_eq!(g, Point::new(2.5, 1.0));
        let d = c.metric_distance(Point::new(0.0, 0.0), Point::new(300.0, 400.0)).unwrap();
        assert!((d - 5.0).abs() < 1e-12);
    }

    #[test]
    fn identity_homography() {
        let c = Calibration::homography(IDENTITY).unwrap();
        assert_eq!(c.project_to_ground(Point::new(3.0, 7.0)).unwrap(), Point::new(3.0, 7.0));
    }

    #[test]
    fn horizon_is_an_error() {
        // w' = y - 100, so the row y = 100 is the vanishing line.
        let c = Calibration::homography([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 1.0, -100.0]]).unwrap();
        let err = c.project_to_ground(Point::new(5.0, 100.0)).unwrap_err();
        assert!(matches!(err, CalibrationError::Horizon { .. }));
        assert!(c.project_to_ground(Point::new(5.0, 101.0)).is_ok());
    }

    #[test]
    fn parse_examples() {
        let c = parse_calibration(r#"{"type":"scalar","meters_per_pixel":0.01}"#).unwrap();
        assert_eq!(c, Calibration::Scalar { meters_per_pixel: 0.01 });
        let h = parse_calibration(r#"{"type":"homography","matrix":[[1,0,0],[0,1,0],[0,0,1]]}"#).unwrap();
        assert_eq!(h, Calibration::Homography { matrix: IDENTITY });
        assert!(matches!(
            parse_calibration(r#"{"type":"scalar","meters_per_pixel":-1}"#),
            Err(CalibrationError::Invalid(_))
        ));
    }

    #[test]
    fn parse_rejects_bad_documents() {
        for doc in [
            r#"{"type":"scalar","meters_per_pixel":0.01,"extra":1}"#,
            r#"{"type":"fisheye","k":1}"#,
            r#"{"type":"homography","matrix":[[1,0],[0,1]]}"#,
            r#"{"type":"scalar""#,
        ] {
            assert!(matches!(parse_calibration(doc), Err(CalibrationError::Parse(_))), "{doc}");
        }
        assert!(matches!(
            parse_calibration(r#"{"type":"homography","matrix":[[1,2,3],[2,4,6],[0,0,1]]}"#),
            Err(CalibrationError::Invalid(_))
        ));
        assert!(matches!(
            parse_calibration(r#"{"type":"scalar","meters_per_pixel":0}"#),
            Err(CalibrationError::Invalid(_))
        ));
    }

    #[test]
    fn json_round_trip() {
        let h = Calibration::homography([[2.0, 0.0, 1.0], [0.0, 3.0, 0.0], [0.0, 0.001, 1.0]]).unwrap();
        assert_eq!(Calibration::parse(&h.to_json()).unwrap(), h);
    }

    #[test]
    fn image_projection_inverts_ground_projection() {
        let h = Calibration::homography([[0.02, 0.001, -3.0], [0.0, 0.05, -1.0], [0.0, 0.002, 1.0]]).unwrap();
        let p = Point::new(640.0, 420.0);
        let back = h.project_to_image(h.project_to_ground(p).unwrap()).unwrap();
        assert!((back.x - p.x).abs() < 1e-9 && (back.y - p.y).abs() < 1e-9);
    }
}
