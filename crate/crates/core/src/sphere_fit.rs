//! Least-squares sphere fitting to picked articular-surface landmarks.
//!
//! An algebraic (linear) fit provides the initial guess; Gauss–Newton on the
//! geometric objective `Σ (|p − c| − R)²` refines it. The geometric stage
//! matters for partial coverage (a lunate surface covers less than half a
//! sphere), where the algebraic estimate is biased.

use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, Matrix4, Vector4};
use thiserror::Error;

use crate::geom::{centroid, Point3, RigidTransform};
use crate::sphere::Sphere;

/// Smallest singular value of the centered landmark matrix below which the
/// points count as coplanar.
pub const COPLANAR_TOL: f64 = 1e-6;

const MAX_ITERATIONS: usize = 100;
const STEP_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("need at least 4 landmarks, got {0}")]
    TooFewPoints(usize),
    #[error("landmarks are degenerate (coplanar or collinear)")]
    DegenerateConfiguration,
    #[error("landmark contains a non-finite coordinate")]
    NonFinite,
    #[error("Gauss-Newton did not converge in {iterations} iterations")]
    NonConvergence { best: Sphere, iterations: usize },
}

/// At least four non-coplanar labeled points.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSet {
    points: Vec<Point3>,
    label: String,
}

impl LandmarkSet {
    pub fn new(points: Vec<Point3>, label: impl Into<String>) -> Result<Self, FitError> {
        if points.len() < 4 {
            return Err(FitError::TooFewPoints(points.len()));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(FitError::NonFinite);
        }
        let c = centroid(&points);
        let m = DMatrix::from_fn(points.len(), 3, |i, j| (points[i] - c).coord(j));
        let smallest = m.singular_values().min();
        if !(smallest > COPLANAR_TOL) {
            return Err(FitError::DegenerateConfiguration);
        }
        Ok(Self { points, label: label.into() })
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn transformed(&self, t: &RigidTransform) -> LandmarkSet {
        LandmarkSet { points: self.points.iter().map(|p| t.apply(*p)).collect(), label: self.label.clone() }
    }
}

/// Root-mean-square geometric residual of `points` against a sphere.
pub fn rms_residual(points: &[Point3], center: Point3, radius: f64) -> f64 {
    libm::sqrt(geometric_objective(points, center, radius) / points.len() as f64)
}

/// `Σ (|p − c| − R)²`.
pub fn geometric_objective(points: &[Point3], center: Point3, radius: f64) -> f64 {
    points
        .iter()
        .map(|p| {
            let r = p.distance(center) - radius;
            r * r
        })
        .sum()
}

/// Linear fit of `|p|² = 2c·p + k`, with `k = R² − |c|²`.
pub fn fit_sphere_algebraic(set: &LandmarkSet) -> Result<Sphere, FitError> {
    let pts = set.points();
    // work relative to the centroid for conditioning
    let origin = centroid(pts);
    let a = DMatrix::from_fn(pts.len(), 4, |i, j| {
        let q = pts[i] - origin;
        if j < 3 {
            2.0 * q.coord(j)
        } else {
            1.0
        }
    });
    let b = DVector::from_iterator(pts.len(), pts.iter().map(|p| (*p - origin).norm_squared()));
    let svd = a.svd(true, true);
    let sv = &svd.singular_values;
    if !(sv.min() > 1e-12 * sv.max()) {
        return Err(FitError::DegenerateConfiguration);
    }
    let x = svd.solve(&b, 0.0).map_err(|_| FitError::DegenerateConfiguration)?;
    let c_local = Point3::xyz(x[0], x[1], x[2]);
    let r2 = x[3] + c_local.norm_squared();
    if !(r2 > 0.0) {
        return Err(FitError::DegenerateConfiguration);
    }
    let center = origin + c_local;
    let radius = libm::sqrt(r2);
    Sphere::new(center, radius, rms_residual(pts, center, radius)).map_err(|_| FitError::DegenerateConfiguration)
}

/// Result of the Gauss–Newton refinement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometricFit {
    pub sphere: Sphere,
    pub iterations: usize,
}

/// Gauss–Newton refinement of `init` on the geometric objective.
///
/// Steps are halved until the objective does not increase, so the returned
/// residual never exceeds the initial one. Stops once the step is below
/// `1e-10` relative to the parameter scale.
pub fn fit_sphere_geometric(set: &LandmarkSet, init: &Sphere) -> Result<GeometricFit, FitError> {
    let pts = set.points();
    // parameters relative to the landmark centroid
    let origin = centroid(pts);
    let mut center = init.center - origin;
    let mut radius = init.radius;
    let local: Vec<Point3> = pts.iter().map(|p| *p - origin).collect();
    let mut objective = geometric_objective(&local, center, radius);

    for iteration in 1..=MAX_ITERATIONS {
        let mut jtj = Matrix4::<f64>::zeros();
        let mut jtr = Vector4::<f64>::zeros();
        for p in &local {
            let d = *p - center;
            let len = d.norm();
            if len <= 1e-12 {
                return Err(FitError::DegenerateConfiguration);
            }
            let u = d / len;
            let row = Vector4::new(-u.x, -u.y, -u.z, -1.0);
            let r = len - radius;
            jtj += row * row.transpose();
            jtr += row * r;
        }
        let Some(step) = jtj.cholesky().map(|c| c.solve(&(-jtr))) else {
            return Err(FitError::DegenerateConfiguration);
        };

        let scale = center.norm() + radius.abs();
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let c_try = center + Point3::xyz(step[0], step[1], step[2]) * t;
            let r_try = radius + step[3] * t;
            let obj = geometric_objective(&local, c_try, r_try);
            if r_try > 0.0 && obj <= objective {
                center = c_try;
                radius = r_try;
                objective = obj;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        let step_norm = step.norm() * t;
        if !accepted || step_norm <= STEP_TOL * scale {
            return finish(pts, origin, center, radius, iteration);
        }
    }
    let best = finish(pts, origin, center, radius, MAX_ITERATIONS)?.sphere;
    Err(FitError::NonConvergence { best, iterations: MAX_ITERATIONS })
}

fn finish(
    pts: &[Point3],
    origin: Point3,
    center: Point3,
    radius: f64,
    iterations: usize,
) -> Result<GeometricFit, FitError> {
    let center = origin + center;
    let sphere = Sphere::new(center, radius, rms_residual(pts, center, radius))
        .map_err(|_| FitError::DegenerateConfiguration)?;
    Ok(GeometricFit { sphere, iterations })
}

/// Algebraic initialization followed by geometric refinement.
pub fn fit_sphere(set: &LandmarkSet) -> Result<GeometricFit, FitError> {
    let init = fit_sphere_algebraic(set)?;
    fit_sphere_geometric(set, &init)
}
