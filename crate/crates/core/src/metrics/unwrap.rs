//! Azimuthal-equidistant chart about the gap's spherical centroid.

use alloc::vec::Vec;

use nalgebra::Matrix3;

use super::{MetricsError, ProjectedLine};
use crate::geom::{Point3, RigidTransform};
use crate::sphere::{angle_between, slerp, Sphere};
use crate::triangulate::{find_self_intersection, signed_area, Point2};

/// Boundary vertices closer than this in the chart are merged.
pub const SNAP_TOL: f64 = 1e-6;

/// Chart on a sphere: geodesic distance from the chart center is preserved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AzimuthalChart {
    /// World → local; local origin at the sphere center, local +z through the chart center.
    pub frame: RigidTransform,
    pub radius: f64,
}

impl AzimuthalChart {
    /// Chart centered on `center_direction`, with the local x axis along the
    /// tangential component of `reference` (any perpendicular when parallel).
    pub fn new(sphere: &Sphere, center_direction: Point3, reference: Point3) -> Option<Self> {
        let z = center_direction.normalized()?;
        let x = (reference - z * reference.dot(z)).normalized().or_else(|| {
            let helper = if z.x.abs() < 0.9 { Point3::xyz(1.0, 0.0, 0.0) } else { Point3::xyz(0.0, 1.0, 0.0) };
            (helper - z * helper.dot(z)).normalized()
        })?;
        let y = z.cross(x);
        let rot =
            Matrix3::from_rows(&[x.to_vector().transpose(), y.to_vector().transpose(), z.to_vector().transpose()]);
        let translation = -(rot * sphere.center.to_vector());
        let frame = RigidTransform::new(rot, translation).ok()?;
        Some(Self { frame, radius: sphere.radius })
    }

    pub fn center_direction(&self) -> Point3 {
        self.frame.inverse().rotate(Point3::xyz(0.0, 0.0, 1.0))
    }

    /// Maps a world point (any radius) to chart coordinates in mm.
    pub fn forward(&self, p: Point3) -> Point2 {
        let d = self.frame.apply(p);
        let h = libm::hypot(d.x, d.y);
        if h <= 1e-300 {
            return [0.0, 0.0];
        }
        let rho = libm::atan2(h, d.z);
        let s = self.radius * rho / h;
        [s * d.x, s * d.y]
    }

    /// World unit direction for chart coordinates.
    pub fn inverse_direction(&self, uv: Point2) -> Point3 {
        let r = libm::hypot(uv[0], uv[1]);
        let local = if r <= 1e-300 {
            Point3::xyz(0.0, 0.0, 1.0)
        } else {
            let rho = r / self.radius;
            let s = libm::sin(rho) / r;
            Point3::xyz(s * uv[0], s * uv[1], libm::cos(rho))
        };
        self.frame.inverse().rotate(local)
    }

    /// World point on the sphere of radius `radius + offset` for chart coordinates.
    pub fn inverse_point(&self, uv: Point2, offset: f64) -> Point3 {
        let center = self.frame.inverse().translation();
        center + self.inverse_direction(uv) * (self.radius + offset)
    }
}

/// Closed gap boundary in the chart, counter-clockwise.
#[derive(Debug, Clone, PartialEq)]
pub struct UnwrappedRegion {
    pub boundary: Vec<Point2>,
    /// Signed radial deviation at each boundary vertex.
    pub node_deviations: Vec<f64>,
    pub chart: AzimuthalChart,
    pub center_direction: Point3,
    /// Angular radius of the smallest cap about the center holding all points.
    pub cap_angle: f64,
}

impl UnwrappedRegion {
    pub fn area_2d(&self) -> f64 {
        signed_area(&self.boundary)
    }
}

/// Great-circle samples strictly between `a` and `b` (surface points), at
/// most `arc_step` apart, with linearly interpolated deviations.
fn connector(sphere: &Sphere, a: (Point3, f64), b: (Point3, f64), arc_step: f64, out: &mut Vec<(Point3, f64)>) {
    let (Ok(da), Ok(db)) = (sphere.direction(a.0), sphere.direction(b.0)) else {
        return;
    };
    let angle = angle_between(da, db);
    let pieces = libm::ceil(sphere.radius * angle / arc_step).max(1.0) as usize;
    for k in 1..pieces {
        let t = k as f64 / pieces as f64;
        let dir = slerp(da, db, t).normalized().unwrap_or(da);
        out.push((sphere.center + dir * sphere.radius, a.1 + t * (b.1 - a.1)));
    }
}

pub(super) fn build_region(
    sphere: &Sphere,
    line_a: &ProjectedLine,
    line_b: &ProjectedLine,
    arc_step: f64,
) -> Result<UnwrappedRegion, MetricsError> {
    let dirs: Vec<Point3> = line_a
        .surface_points
        .iter()
        .chain(&line_b.surface_points)
        .map(|&p| sphere.direction(p))
        .collect::<Result<_, _>>()?;
    let mut sum = Point3::ORIGIN;
    for d in &dirs {
        sum += *d;
    }
    let center = sum.normalized().ok_or(MetricsError::RegionTooLarge { cap_degrees: 180.0 })?;
    let cap_angle = dirs.iter().map(|&d| angle_between(center, d)).fold(0.0, f64::max);
    if cap_angle >= core::f64::consts::FRAC_PI_2 {
        return Err(MetricsError::RegionTooLarge { cap_degrees: cap_angle.to_degrees() });
    }
    let chart =
        AzimuthalChart::new(sphere, center, dirs[0]).ok_or(MetricsError::RegionTooLarge { cap_degrees: 180.0 })?;

    let a: Vec<(Point3, f64)> = line_a.samples().collect();
    let mut b: Vec<(Point3, f64)> = line_b.samples().collect();
    let a_end = a[a.len() - 1].0;
    let to_first = sphere.geodesic_distance(a_end, b[0].0)?;
    let to_last = sphere.geodesic_distance(a_end, b[b.len() - 1].0)?;
    if !(to_first < to_last) {
        b.reverse();
    }

    let mut ring: Vec<(Point3, f64)> = Vec::with_capacity(a.len() + b.len() + 64);
    ring.extend_from_slice(&a);
    connector(sphere, a[a.len() - 1], b[0], arc_step, &mut ring);
    ring.extend_from_slice(&b);
    connector(sphere, b[b.len() - 1], a[0], arc_step, &mut ring);

    let mut boundary: Vec<Point2> = Vec::with_capacity(ring.len());
    let mut node_deviations = Vec::with_capacity(ring.len());
    for (p, dev) in ring {
        let uv = chart.forward(p);
        if let Some(last) = boundary.last() {
            if crate::triangulate::dist(*last, uv) < SNAP_TOL {
                continue;
            }
        }
        boundary.push(uv);
        node_deviations.push(dev);
    }
    while boundary.len() > 1 && crate::triangulate::dist(boundary[0], boundary[boundary.len() - 1]) < SNAP_TOL {
        boundary.pop();
        node_deviations.pop();
    }

    let perimeter: f64 =
        (0..boundary.len()).map(|i| crate::triangulate::dist(boundary[i], boundary[(i + 1) % boundary.len()])).sum();
    let area = signed_area(&boundary);
    if boundary.len() < 3 || area.abs() <= 1e-9 * perimeter * perimeter.max(1.0) {
        return Err(MetricsError::ZeroWidthRegion);
    }
    if let Some((i, j)) = find_self_intersection(&boundary) {
        return Err(MetricsError::SelfIntersectingBoundary(i, j));
    }
    if area < 0.0 {
        boundary.reverse();
        node_deviations.reverse();
    }
    Ok(UnwrappedRegion { boundary, node_deviations, chart, center_direction: center, cap_angle })
}
