//! Geometric primitives behind the kinematic features.
//!
//! Angles are returned in degrees. Segments shorter than [`EPSILON`] (in data
//! units) are rejected as degenerate rather than producing NaN.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Degeneracy threshold for segment lengths and plane normals, in data units.
pub const EPSILON: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("degenerate geometry: {0}")]
    Degenerate(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, o: Self) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Self) -> Self {
        Self::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn distance(self, o: Self) -> f64 {
        (self - o).norm()
    }

    pub fn as_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Angle between two vectors in degrees, cosine clamped to [-1, 1].
fn angle_between(u: Vec3, v: Vec3) -> Result<f64, GeometryError> {
    let nu = u.norm();
    let nv = v.norm();
    if nu <= EPSILON || nv <= EPSILON {
        return Err(GeometryError::Degenerate("zero-length segment"));
    }
    let cos = (u.dot(v) / (nu * nv)).clamp(-1.0, 1.0);
    Ok(cos.acos().to_degrees())
}

/// Angle at vertex `b` between rays `b→a` and `b→c`, in `[0, 180]`.
pub fn joint_angle(a: Vec3, b: Vec3, c: Vec3) -> Result<f64, GeometryError> {
    angle_between(a - b, c - b)
}

/// Angle between the segment `base→tip` and the world `up` axis, in `[0, 180]`.
pub fn segment_vertical_angle(base: Vec3, tip: Vec3, up: Vec3) -> Result<f64, GeometryError> {
    angle_between(tip - base, up)
}

/// Signed angle of the hip line against the horizontal plane, in `[-90, 90]`.
/// Positive when the left hip sits higher along `up`.
pub fn pelvic_tilt(left_hip: Vec3, right_hip: Vec3, up: Vec3) -> Result<f64, GeometryError> {
    let line = left_hip - right_hip;
    let len = line.norm();
    if len <= EPSILON {
        return Err(GeometryError::Degenerate("coincident hips"));
    }
    let sin = (line.dot(up) / len).clamp(-1.0, 1.0);
    Ok(sin.asin().to_degrees())
}

/// `max - min` of a per-frame signal. Panics on fewer than two values.
pub fn stability_range(series: &[f64]) -> f64 {
    assert!(series.len() >= 2, "stability range needs at least two frames");
    let (lo, hi) = series
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    hi - lo
}

/// A plane through `origin` with unit `normal`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    pub origin: Vec3,
    pub normal: Vec3,
}

impl Plane {
    pub fn through(p0: Vec3, p1: Vec3, p2: Vec3) -> Result<Self, GeometryError> {
        let n = (p1 - p0).cross(p2 - p0);
        let len = n.norm();
        if len <= EPSILON {
            return Err(GeometryError::Degenerate("collinear plane points"));
        }
        Ok(Self {
            origin: p0,
            normal: n * (1.0 / len),
        })
    }

    pub fn distance(&self, p: Vec3) -> f64 {
        (p - self.origin).dot(self.normal).abs()
    }
}

/// Unsigned distance of each tracked point from the plane through the three
/// reference points.
pub fn plane_deviation(
    points: &[Vec3],
    plane_points: [Vec3; 3],
) -> Result<Vec<f64>, GeometryError> {
    let plane = Plane::through(plane_points[0], plane_points[1], plane_points[2])?;
    Ok(points.iter().map(|&p| plane.distance(p)).collect())
}

/// Distance between two points after removing the `up` component.
pub fn horizontal_distance(a: Vec3, b: Vec3, up: Vec3) -> f64 {
    let d = a - b;
    (d - up * d.dot(up)).norm()
}

/// Height of `p` along `up` relative to `reference`.
pub fn vertical_displacement(p: Vec3, reference: Vec3, up: Vec3) -> f64 {
    (p - reference).dot(up)
}

/// Project `p` onto the plane through the origin with unit normal `n`.
pub fn project_onto_plane(p: Vec3, n: Vec3) -> Vec3 {
    p - n * p.dot(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: f64, y: f64, z: f64) -> Vec3 {
        Vec3::new(x, y, z)
    }

    #[test]
    fn joint_angle_examples() {
        let a = joint_angle(v(0., 1., 0.), v(0., 0., 0.), v(1., 0., 0.)).unwrap();
        assert!((a - 90.0).abs() < 1e-12);
        let a = joint_angle(v(0., 2., 0.), v(0., 1., 0.), v(0., 0., 0.)).unwrap();
        assert!((a - 180.0).abs() < 1e-12);
        assert!(joint_angle(v(0., 0., 0.), v(0., 0., 0.), v(1., 0., 0.)).is_err());
    }

    #[test]
    fn vertical_angle_examples() {
        let up = v(0., 1., 0.);
        assert_eq!(segment_vertical_angle(v(0., 0., 0.), v(0., 1., 0.), up).unwrap(), 0.0);
        let h = segment_vertical_angle(v(0., 0., 0.), v(1., 0., 0.), up).unwrap();
        assert!((h - 90.0).abs() < 1e-12);
        assert!(segment_vertical_angle(v(1., 1., 1.), v(1., 1., 1.), up).is_err());
    }

    #[test]
    fn pelvic_tilt_examples() {
        let up = v(0., 1., 0.);
        assert_eq!(pelvic_tilt(v(-0.1, 1., 0.), v(0.1, 1., 0.), up).unwrap(), 0.0);
        // Rotate a level hip pair (half-width 0.15) by exactly 5 degrees about z.
        let t = 5f64.to_radians();
        let left = v(-0.15 * t.cos(), 1.0 + 0.15 * t.sin(), 0.0);
        let right = v(0.15 * t.cos(), 1.0 - 0.15 * t.sin(), 0.0);
        let tilt = pelvic_tilt(left, right, up).unwrap();
        assert!((tilt - 5.0).abs() < 1e-6, "{tilt}");
        let swapped = pelvic_tilt(right, left, up).unwrap();
        assert!((swapped + tilt).abs() < 1e-12);
        assert!(pelvic_tilt(left, left, up).is_err());
    }

    #[test]
    fn stability_range_examples() {
        assert_eq!(stability_range(&[1.5, 1.5, 1.5]), 0.0);
        assert_eq!(stability_range(&[-2.0, 3.0]), 5.0);
    }

    #[test]
    fn plane_deviation_examples() {
        let plane = [v(0., 0., 0.), v(1., 0., 0.), v(0., 1., 0.)];
        let in_plane = [v(0.3, 0.2, 0.0), v(-5.0, 2.0, 0.0)];
        assert_eq!(plane_deviation(&in_plane, plane).unwrap(), vec![0.0, 0.0]);
        let off = plane_deviation(&[v(0.3, 0.2, 0.1)], plane).unwrap();
        assert!((off[0] - 0.1).abs() < 1e-9);
        let collinear = [v(0., 0., 0.), v(1., 0., 0.), v(2., 0., 0.)];
        assert!(plane_deviation(&in_plane, collinear).is_err());
    }

    #[test]
    fn horizontal_and_vertical() {
        let up = v(0., 1., 0.);
        assert!((horizontal_distance(v(0., 5., 0.), v(3., 0., 4.), up) - 5.0).abs() < 1e-12);
        assert_eq!(vertical_displacement(v(1., 2.5, 0.), v(0., 1., 9.), up), 1.5);
    }
}
