//! Sphere model of the articular surface and on-sphere primitives.

use thiserror::Error;

use crate::geom::{Point3, RigidTransform};

/// Points closer than this to the center have no radial direction.
pub const CENTER_EPS: f64 = 1e-9;

/// Maximum radial deviation for a point to count as lying on the sphere.
pub const ON_SPHERE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SphereError {
    #[error("point coincides with the sphere center")]
    DegeneratePoint,
    #[error("point is {0:e} mm off the sphere")]
    NotOnSphere(f64),
    #[error("invalid sphere: radius {radius}, residual {rms}")]
    Invalid { radius: f64, rms: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sphere {
    pub center: Point3,
    pub radius: f64,
    pub rms_residual: f64,
}

impl Sphere {
    pub fn new(center: Point3, radius: f64, rms_residual: f64) -> Result<Self, SphereError> {
        if !(radius > 0.0 && radius.is_finite() && rms_residual >= 0.0 && center.is_finite()) {
            return Err(SphereError::Invalid { radius, rms: rms_residual });
        }
        Ok(Self { center, radius, rms_residual })
    }

    /// Signed distance from the surface, positive outside.
    pub fn radial_deviation(&self, p: Point3) -> f64 {
        (p - self.center).norm() - self.radius
    }

    /// Radial projection onto the surface together with the signed radial deviation.
    pub fn project(&self, p: Point3) -> Result<(Point3, f64), SphereError> {
        let d = p - self.center;
        let len = d.norm();
        if len <= CENTER_EPS {
            return Err(SphereError::DegeneratePoint);
        }
        Ok((self.center + d * (self.radius / len), len - self.radius))
    }

    /// Unit direction from the center towards `p`.
    pub fn direction(&self, p: Point3) -> Result<Point3, SphereError> {
        let d = p - self.center;
        let len = d.norm();
        if len <= CENTER_EPS {
            return Err(SphereError::DegeneratePoint);
        }
        Ok(d / len)
    }

    /// Great-circle distance between two on-sphere points.
    pub fn geodesic_distance(&self, a: Point3, b: Point3) -> Result<f64, SphereError> {
        for p in [a, b] {
            let dev = self.radial_deviation(p);
            if dev.abs() >= ON_SPHERE_TOL {
                return Err(SphereError::NotOnSphere(dev));
            }
        }
        Ok(self.radius * angle_between(a - self.center, b - self.center))
    }

    pub fn transformed(&self, t: &RigidTransform) -> Sphere {
        Sphere { center: t.apply(self.center), ..*self }
    }
}

/// Angle between two vectors via `atan2(|u×v|, u·v)`; stable near 0 and π.
#[inline]
pub fn angle_between(u: Point3, v: Point3) -> f64 {
    libm::atan2(u.cross(v).norm(), u.dot(v))
}

/// Spherical interpolation between unit vectors `a` and `b` at parameter `t`.
///
/// Falls back to normalized linear interpolation when the angle is tiny.
pub fn slerp(a: Point3, b: Point3, t: f64) -> Point3 {
    let theta = angle_between(a, b);
    if theta < 1e-9 {
        return (a * (1.0 - t) + b * t).normalized().unwrap_or(a);
    }
    let s = libm::sin(theta);
    a * (libm::sin((1.0 - t) * theta) / s) + b * (libm::sin(t * theta) / s)
}
