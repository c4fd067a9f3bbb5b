//! Bidirectional Chamfer distance for segmentation quality control.
//!
//! `d(A, B) = mean_{a∈A} min_{b∈B} |a − b| + mean_{b∈B} min_{a∈A} |b − a|`,
//! the plain sum of both directed means (no halving).

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geom::{Mesh, Point3};
use crate::kdtree::KdTree;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChamferError {
    #[error("point set is empty")]
    EmptySet,
    #[error("point set contains a non-finite coordinate")]
    NonFinite,
    #[error("mesh is empty")]
    EmptyMesh,
    #[error("mesh has zero total area")]
    ZeroTotalArea,
}

/// Non-empty finite point cloud with an exact nearest-neighbor index.
#[derive(Debug, Clone)]
pub struct PointSet {
    tree: KdTree,
}

impl PointSet {
    pub fn new(points: Vec<Point3>) -> Result<Self, ChamferError> {
        if points.is_empty() {
            return Err(ChamferError::EmptySet);
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(ChamferError::NonFinite);
        }
        Ok(Self { tree: KdTree::build(&points) })
    }

    pub fn points(&self) -> &[Point3] {
        self.tree.points()
    }

    pub fn len(&self) -> usize {
        self.tree.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tree.is_empty()
    }

    /// Nearest stored point to `q`: (index, Euclidean distance).
    pub fn nearest(&self, q: Point3) -> (usize, f64) {
        // non-empty by construction
        let (i, d2) = self.tree.nearest(q).unwrap_or((0, f64::INFINITY));
        (i, libm::sqrt(d2))
    }
}

/// How a mesh is turned into a point set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sampling {
    /// The vertex list verbatim.
    #[default]
    Vertices,
    /// `count` points uniform over the surface, seeded.
    AreaWeighted { count: usize, seed: u64 },
}

/// Mean over `a` of the exact nearest-neighbor distance into `b`.
pub fn directed_mean_nn(a: &PointSet, b: &PointSet) -> f64 {
    let sum: f64 = a.points().iter().map(|&p| b.nearest(p).1).sum();
    sum / a.len() as f64
}

pub fn chamfer_distance(a: &PointSet, b: &PointSet) -> f64 {
    directed_mean_nn(a, b) + directed_mean_nn(b, a)
}

pub fn mesh_vertex_set(mesh: &Mesh, sampling: Sampling) -> Result<PointSet, ChamferError> {
    if mesh.is_empty() {
        return Err(ChamferError::EmptyMesh);
    }
    match sampling {
        Sampling::Vertices => PointSet::new(mesh.vertices.clone()),
        Sampling::AreaWeighted { count, seed } => PointSet::new(sample_surface(mesh, count, seed)?),
    }
}

/// Uniform surface samples: triangle chosen by area, then uniform barycentric.
pub fn sample_surface(mesh: &Mesh, count: usize, seed: u64) -> Result<Vec<Point3>, ChamferError> {
    if mesh.is_empty() || mesh.faces.is_empty() {
        return Err(ChamferError::EmptyMesh);
    }
    let mut cumulative = Vec::with_capacity(mesh.faces.len());
    let mut total = 0.0;
    for f in &mesh.faces {
        total += mesh.face_area(f);
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(ChamferError::ZeroTotalArea);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let target = rng.random::<f64>() * total;
        let k = cumulative.partition_point(|&c| c <= target).min(mesh.faces.len() - 1);
        let [a, b, c] = mesh.faces[k].map(|i| mesh.vertices[i]);
        let r1 = libm::sqrt(rng.random::<f64>());
        let r2 = rng.random::<f64>();
        out.push(a * (1.0 - r1) + b * (r1 * (1.0 - r2)) + c * (r1 * r2));
    }
    Ok(out)
}
