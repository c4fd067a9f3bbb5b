//! Points, rigid motions, meshes and polylines in millimeter units.

use alloc::vec::Vec;
use core::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use nalgebra::{Matrix3, Matrix4, Vector3};
use thiserror::Error;

/// Tolerance on `RᵀR − I` and `det R − 1` accepted by [`RigidTransform::new`].
pub const ROTATION_TOL: f64 = 1e-9;

/// Minimum separation between consecutive polyline points.
pub const MIN_POLYLINE_SEPARATION: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeomError {
    #[error("non-finite coordinate in {0}")]
    NonFinite(&'static str),
    #[error("rotation is not orthonormal (max |RᵀR − I| = {0:e})")]
    NotOrthonormal(f64),
    #[error("rotation is improper (det = {0})")]
    Improper(f64),
    #[error("face {face} references vertex {index} but mesh has {count} vertices")]
    IndexOutOfRange { face: usize, index: usize, count: usize },
    #[error("mesh needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("polyline needs at least 2 points, got {0}")]
    PolylineTooShort(usize),
    #[error("polyline points {0} and {1} coincide")]
    RepeatedPoint(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const ORIGIN: Point3 = Point3 { x: 0.0, y: 0.0, z: 0.0 };

    /// Builds a point, rejecting NaN and infinite coordinates.
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self, GeomError> {
        if x.is_finite() && y.is_finite() && z.is_finite() {
            Ok(Self { x, y, z })
        } else {
            Err(GeomError::NonFinite("point"))
        }
    }

    /// Unchecked constructor for values produced by arithmetic on finite points.
    #[inline]
    pub const fn xyz(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    #[inline]
    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    #[inline]
    pub fn dot(self, o: Point3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn cross(self, o: Point3) -> Point3 {
        Point3::xyz(self.y * o.z - self.z * o.y, self.z * o.x - self.x * o.z, self.x * o.y - self.y * o.x)
    }

    #[inline]
    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        libm::sqrt(self.norm_squared())
    }

    #[inline]
    pub fn distance(self, o: Point3) -> f64 {
        (self - o).norm()
    }

    /// Squared distance, summed in x, y, z order.
    #[inline]
    pub fn distance_squared(self, o: Point3) -> f64 {
        let dx = self.x - o.x;
        let dy = self.y - o.y;
        let dz = self.z - o.z;
        dx * dx + dy * dy + dz * dz
    }

    /// Unit vector in the same direction, or `None` for a (near) zero vector.
    pub fn normalized(self) -> Option<Point3> {
        let n = self.norm();
        (n > 1e-300).then(|| self / n)
    }

    #[inline]
    pub fn coord(&self, axis: usize) -> f64 {
        match axis {
            0 => self.x,
            1 => self.y,
            _ => self.z,
        }
    }

    #[inline]
    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    #[inline]
    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Point3::xyz(v.x, v.y, v.z)
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl From<[f64; 3]> for Point3 {
    fn from(a: [f64; 3]) -> Self {
        Point3::xyz(a[0], a[1], a[2])
    }
}

impl Add for Point3 {
    type Output = Point3;
    #[inline]
    fn add(self, o: Point3) -> Point3 {
        Point3::xyz(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Point3 {
    #[inline]
    fn add_assign(&mut self, o: Point3) {
        *self = *self + o;
    }
}

impl Sub for Point3 {
    type Output = Point3;
    #[inline]
    fn sub(self, o: Point3) -> Point3 {
        Point3::xyz(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Point3 {
    type Output = Point3;
    #[inline]
    fn neg(self) -> Point3 {
        Point3::xyz(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Point3 {
    type Output = Point3;
    #[inline]
    fn mul(self, s: f64) -> Point3 {
        Point3::xyz(self.x * s, self.y * s, self.z * s)
    }
}

impl Div<f64> for Point3 {
    type Output = Point3;
    #[inline]
    fn div(self, s: f64) -> Point3 {
        Point3::xyz(self.x / s, self.y / s, self.z / s)
    }
}

/// Mean of a non-empty point list.
pub fn centroid(points: &[Point3]) -> Point3 {
    let mut acc = Point3::ORIGIN;
    for p in points {
        acc += *p;
    }
    acc / points.len() as f64
}

/// Proper rigid motion `p ↦ R·p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    /// Validates orthonormality and `det R = +1` to [`ROTATION_TOL`].
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeomError> {
        if rotation.iter().chain(translation.iter()).any(|v| !v.is_finite()) {
            return Err(GeomError::NonFinite("transform"));
        }
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).amax();
        if ortho > ROTATION_TOL {
            return Err(GeomError::NotOrthonormal(ortho));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ROTATION_TOL {
            return Err(GeomError::Improper(det));
        }
        Ok(Self { rotation, translation })
    }

    pub fn from_translation(t: Point3) -> Self {
        Self { rotation: Matrix3::identity(), translation: t.to_vector() }
    }

    /// Rotation by `angle` radians about `axis` (through the origin).
    pub fn from_axis_angle(axis: Point3, angle: f64) -> Option<Self> {
        let k = axis.normalized()?;
        let (s, c) = (libm::sin(angle), libm::cos(angle));
        let v = 1.0 - c;
        #[rustfmt::skip]
        let rotation = Matrix3::new(
            c + k.x * k.x * v,       k.x * k.y * v - k.z * s, k.x * k.z * v + k.y * s,
            k.y * k.x * v + k.z * s, c + k.y * k.y * v,       k.y * k.z * v - k.x * s,
            k.z * k.x * v - k.y * s, k.z * k.y * v + k.x * s, c + k.z * k.z * v,
        );
        Some(Self { rotation, translation: Vector3::zeros() })
    }

    /// Same rotation with the given translation.
    pub fn with_translation(mut self, t: Point3) -> Self {
        self.translation = t.to_vector();
        self
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> Point3 {
        Point3::from_vector(&self.translation)
    }

    #[inline]
    pub fn apply(&self, p: Point3) -> Point3 {
        Point3::from_vector(&(self.rotation * p.to_vector() + self.translation))
    }

    /// Applies only the rotation (for directions).
    #[inline]
    pub fn rotate(&self, v: Point3) -> Point3 {
        Point3::from_vector(&(self.rotation * v.to_vector()))
    }

    /// `self ∘ other`: first `other`, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform { rotation: rt, translation: -(rt * self.translation) }
    }

    /// Rotation angle in radians, in `[0, π]`.
    pub fn rotation_angle(&self) -> f64 {
        let r = &self.rotation;
        // sin θ from the skew part, cos θ from the trace.
        let sx = r[(2, 1)] - r[(1, 2)];
        let sy = r[(0, 2)] - r[(2, 0)];
        let sz = r[(1, 0)] - r[(0, 1)];
        let s = 0.5 * libm::sqrt(sx * sx + sy * sy + sz * sz);
        let c = 0.5 * (r.trace() - 1.0);
        libm::atan2(s, c)
    }

    /// Homogeneous 4×4 matrix.
    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Row-major 4×4 homogeneous matrix.
    pub fn to_row_major(&self) -> [[f64; 4]; 4] {
        let m = self.to_homogeneous();
        let mut out = [[0.0; 4]; 4];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = m[(i, j)];
            }
        }
        out
    }

    /// Parses a row-major 4×4 homogeneous matrix; the last row must be `0 0 0 1`.
    pub fn from_row_major(m: &[[f64; 4]; 4]) -> Result<Self, GeomError> {
        let last = m[3];
        if last[0].abs() > ROTATION_TOL
            || last[1].abs() > ROTATION_TOL
            || last[2].abs() > ROTATION_TOL
            || (last[3] - 1.0).abs() > ROTATION_TOL
        {
            return Err(GeomError::NotOrthonormal(f64::NAN));
        }
        let rotation = Matrix3::from_fn(|i, j| m[i][j]);
        let translation = Vector3::new(m[0][3], m[1][3], m[2][3]);
        Self::new(rotation, translation)
    }
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

/// Indexed triangle surface.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Mesh {
    pub vertices: Vec<Point3>,
    pub faces: Vec<[usize; 3]>,
}

impl Mesh {
    pub fn new(vertices: Vec<Point3>, faces: Vec<[usize; 3]>) -> Result<Self, GeomError> {
        if !vertices.is_empty() && vertices.len() < 3 {
            return Err(GeomError::TooFewVertices(vertices.len()));
        }
        if vertices.iter().any(|p| !p.is_finite()) {
            return Err(GeomError::NonFinite("mesh vertex"));
        }
        let count = vertices.len();
        for (face, f) in faces.iter().enumerate() {
            if let Some(&index) = f.iter().find(|&&i| i >= count) {
                return Err(GeomError::IndexOutOfRange { face, index, count });
            }
        }
        Ok(Self { vertices, faces })
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn face_area(&self, f: &[usize; 3]) -> f64 {
        let [a, b, c] = f.map(|i| self.vertices[i]);
        0.5 * (b - a).cross(c - a).norm()
    }

    pub fn surface_area(&self) -> f64 {
        self.faces.iter().map(|f| self.face_area(f)).sum()
    }

    /// Number of faces whose area is exactly zero.
    pub fn degenerate_face_count(&self) -> usize {
        self.faces.iter().filter(|f| self.face_area(f) == 0.0).count()
    }

    pub fn transformed(&self, t: &RigidTransform) -> Mesh {
        Mesh { vertices: self.vertices.iter().map(|p| t.apply(*p)).collect(), faces: self.faces.clone() }
    }
}

/// Ordered 3D polyline with at least two distinct consecutive points.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline3 {
    points: Vec<Point3>,
}

impl Polyline3 {
    pub fn new(points: Vec<Point3>) -> Result<Self, GeomError> {
        if points.len() < 2 {
            return Err(GeomError::PolylineTooShort(points.len()));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(GeomError::NonFinite("polyline"));
        }
        for (i, w) in points.windows(2).enumerate() {
            if w[0].distance(w[1]) <= MIN_POLYLINE_SEPARATION {
                return Err(GeomError::RepeatedPoint(i, i + 1));
            }
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn reversed(&self) -> Polyline3 {
        let mut points = self.points.clone();
        points.reverse();
        Polyline3 { points }
    }

    pub fn transformed(&self, t: &RigidTransform) -> Polyline3 {
        Polyline3 { points: self.points.iter().map(|p| t.apply(*p)).collect() }
    }
}
