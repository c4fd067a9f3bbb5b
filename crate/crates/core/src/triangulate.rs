//! Triangulation of a simple polygon with edge-length refinement.
//!
//! Boundary edges longer than the target are subdivided first, the polygon
//! is ear-clipped, interior edges are flipped towards the constrained
//! Delaunay triangulation, and finally the globally longest interior edge is
//! bisected until every edge is within the target length. Bisecting the
//! longest edge first keeps every new median shorter than `√3/2` of the
//! current maximum, so the refinement terminates.

use alloc::collections::{BTreeMap, BinaryHeap};
use alloc::vec::Vec;
use core::cmp::Reverse;

use thiserror::Error;

pub type Point2 = [f64; 2];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TriangulationError {
    #[error("polygon needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("boundary is self-intersecting (edges {0} and {1})")]
    SelfIntersectingBoundary(usize, usize),
    #[error("boundary must be counter-clockwise with positive area")]
    NotCounterClockwise,
    #[error("target edge length must be positive, got {0}")]
    InvalidTargetEdge(f64),
    #[error("ear clipping stalled with {0} vertices left")]
    EarClippingFailed(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Triangulation {
    pub vertices: Vec<Point2>,
    /// Counter-clockwise vertex triples.
    pub triangles: Vec<[usize; 3]>,
    /// `vertices[..boundary_len]` is the (subdivided) boundary, in order.
    pub boundary_len: usize,
    /// Index in `vertices` of each input boundary vertex.
    pub input_vertices: Vec<usize>,
}

impl Triangulation {
    pub fn triangle_area(&self, t: &[usize; 3]) -> f64 {
        0.5 * orient(self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]])
    }

    pub fn area(&self) -> f64 {
        self.triangles.iter().map(|t| self.triangle_area(t)).sum()
    }

    pub fn max_edge_length(&self) -> f64 {
        self.triangles
            .iter()
            .flat_map(|t| (0..3).map(move |k| (t[k], t[(k + 1) % 3])))
            .map(|(a, b)| dist(self.vertices[a], self.vertices[b]))
            .fold(0.0, f64::max)
    }
}

/// Twice the signed area of `(a, b, c)`; positive when counter-clockwise.
#[inline]
pub fn orient(a: Point2, b: Point2, c: Point2) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

#[inline]
pub fn dist(a: Point2, b: Point2) -> f64 {
    libm::hypot(b[0] - a[0], b[1] - a[1])
}

/// Shoelace signed area.
pub fn signed_area(poly: &[Point2]) -> f64 {
    let n = poly.len();
    let mut s = 0.0;
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        s += a[0] * b[1] - b[0] * a[1];
    }
    0.5 * s
}

fn bbox_scale(poly: &[Point2]) -> f64 {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in poly {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    libm::hypot(hi[0] - lo[0], hi[1] - lo[1]).max(1e-300)
}

/// Whether segments `p1p2` and `q1q2` touch, collinear overlaps included.
fn segments_touch(p1: Point2, p2: Point2, q1: Point2, q2: Point2, eps: f64) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    let sgn = |d: f64| {
        if d > eps {
            1
        } else if d < -eps {
            -1
        } else {
            0
        }
    };
    let (s1, s2, s3, s4) = (sgn(d1), sgn(d2), sgn(d3), sgn(d4));
    if s1 * s2 < 0 && s3 * s4 < 0 {
        return true;
    }
    let on = |a: Point2, b: Point2, p: Point2| {
        p[0] >= a[0].min(b[0]) - 1e-12
            && p[0] <= a[0].max(b[0]) + 1e-12
            && p[1] >= a[1].min(b[1]) - 1e-12
            && p[1] <= a[1].max(b[1]) + 1e-12
    };
    (s1 == 0 && on(q1, q2, p1))
        || (s2 == 0 && on(q1, q2, p2))
        || (s3 == 0 && on(p1, p2, q1))
        || (s4 == 0 && on(p1, p2, q2))
}

/// First pair of boundary edges that intersect, if any.
///
/// Adjacent edges may only share their common vertex; folding back onto
/// each other counts as an intersection.
pub fn find_self_intersection(poly: &[Point2]) -> Option<(usize, usize)> {
    let n = poly.len();
    if n < 3 {
        return None;
    }
    let scale = bbox_scale(poly);
    let eps = 1e-14 * scale * scale;
    let edge = |i: usize| (poly[i], poly[(i + 1) % n]);
    let boxes: Vec<[f64; 4]> = (0..n)
        .map(|i| {
            let (a, b) = edge(i);
            [a[0].min(b[0]), a[0].max(b[0]), a[1].min(b[1]), a[1].max(b[1])]
        })
        .collect();
    for i in 0..n {
        let (a, b) = edge(i);
        // fold-back at the shared vertex b of edges i and i+1
        let c = poly[(i + 2) % n];
        if orient(a, b, c).abs() <= eps {
            let u = [b[0] - a[0], b[1] - a[1]];
            let v = [c[0] - b[0], c[1] - b[1]];
            if u[0] * v[0] + u[1] * v[1] < 0.0 {
                return Some((i, (i + 1) % n));
            }
        }
        for j in (i + 2)..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            let (bi, bj) = (&boxes[i], &boxes[j]);
            if bi[1] < bj[0] - 1e-12 || bj[1] < bi[0] - 1e-12 || bi[3] < bj[2] - 1e-12 || bj[3] < bi[2] - 1e-12 {
                continue;
            }
            let (c, d) = edge(j);
            if segments_touch(a, b, c, d, eps) {
                return Some((i, j));
            }
        }
    }
    None
}

/// Triangulates a simple counter-clockwise polygon so that no edge exceeds
/// `target_edge`. Input vertices are kept exactly.
pub fn triangulate_polygon(boundary: &[Point2], target_edge: f64) -> Result<Triangulation, TriangulationError> {
    if boundary.len() < 3 {
        return Err(TriangulationError::TooFewVertices(boundary.len()));
    }
    if !(target_edge > 0.0 && target_edge.is_finite()) {
        return Err(TriangulationError::InvalidTargetEdge(target_edge));
    }
    if let Some((i, j)) = find_self_intersection(boundary) {
        return Err(TriangulationError::SelfIntersectingBoundary(i, j));
    }
    if !(signed_area(boundary) > 0.0) {
        return Err(TriangulationError::NotCounterClockwise);
    }

    let n = boundary.len();
    let mut vertices = Vec::with_capacity(2 * n);
    let mut input_vertices = Vec::with_capacity(n);
    for i in 0..n {
        let a = boundary[i];
        let b = boundary[(i + 1) % n];
        input_vertices.push(vertices.len());
        vertices.push(a);
        let pieces = libm::ceil(dist(a, b) / target_edge).max(1.0) as usize;
        for k in 1..pieces {
            let t = k as f64 / pieces as f64;
            vertices.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
        }
    }
    let boundary_len = vertices.len();

    let triangles = ear_clip(&vertices)?;
    let mut mesh = EdgeMesh::new(vertices, triangles);
    mesh.make_delaunay();
    mesh.refine(target_edge);
    Ok(Triangulation { vertices: mesh.vertices, triangles: mesh.triangles, boundary_len, input_vertices })
}

fn ear_clip(poly: &[Point2]) -> Result<Vec<[usize; 3]>, TriangulationError> {
    let n = poly.len();
    let scale = bbox_scale(poly);
    let eps = 1e-13 * scale * scale;
    let mut next: Vec<usize> = (0..n).map(|i| (i + 1) % n).collect();
    let mut prev: Vec<usize> = (0..n).map(|i| (i + n - 1) % n).collect();
    let mut alive = n;
    let convex = |p: usize, i: usize, q: usize| orient(poly[p], poly[i], poly[q]) > eps;
    let mut reflex: Vec<bool> = (0..n).map(|i| !convex(prev[i], i, next[i])).collect();
    let mut out = Vec::with_capacity(n - 2);

    // `strict` ignores points lying exactly on the candidate's edges
    let is_ear = |i: usize, prev: &[usize], next: &[usize], reflex: &[bool], strict: bool| -> bool {
        let (p, q) = (prev[i], next[i]);
        if !convex(p, i, q) {
            return false;
        }
        let (a, b, c) = (poly[p], poly[i], poly[q]);
        let lo = [a[0].min(b[0]).min(c[0]), a[1].min(b[1]).min(c[1])];
        let hi = [a[0].max(b[0]).max(c[0]), a[1].max(b[1]).max(c[1])];
        let mut j = next[q];
        while j != p {
            let x = poly[j];
            if reflex[j]
                && x[0] >= lo[0]
                && x[0] <= hi[0]
                && x[1] >= lo[1]
                && x[1] <= hi[1]
                && x != a
                && x != b
                && x != c
            {
                let (d1, d2, d3) = (orient(a, b, x), orient(b, c, x), orient(c, a, x));
                let inside =
                    if strict { d1 > eps && d2 > eps && d3 > eps } else { d1 >= -eps && d2 >= -eps && d3 >= -eps };
                if inside {
                    return false;
                }
            }
            j = next[j];
        }
        true
    };

    let mut i = 0;
    let mut misses = 0;
    let mut strict = false;
    while alive > 3 {
        if is_ear(i, &prev, &next, &reflex, strict) {
            let (p, q) = (prev[i], next[i]);
            out.push([p, i, q]);
            next[p] = q;
            prev[q] = p;
            alive -= 1;
            reflex[p] = !convex(prev[p], p, q);
            reflex[q] = !convex(p, q, next[q]);
            i = q;
            misses = 0;
            strict = false;
        } else {
            i = next[i];
            misses += 1;
            if misses > alive {
                if strict {
                    return Err(TriangulationError::EarClippingFailed(alive));
                }
                strict = true;
                misses = 0;
            }
        }
    }
    let (p, q) = (prev[i], next[i]);
    if orient(poly[p], poly[i], poly[q]) > 0.0 {
        out.push([p, i, q]);
    }
    Ok(out)
}

/// Triangles plus a directed-edge lookup `(a, b) → triangle`.
struct EdgeMesh {
    vertices: Vec<Point2>,
    triangles: Vec<[usize; 3]>,
    edges: BTreeMap<(usize, usize), usize>,
}

impl EdgeMesh {
    fn new(vertices: Vec<Point2>, triangles: Vec<[usize; 3]>) -> Self {
        let mut edges = BTreeMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                edges.insert((tri[k], tri[(k + 1) % 3]), t);
            }
        }
        Self { vertices, triangles, edges }
    }

    fn set(&mut self, t: usize, tri: [usize; 3]) {
        if t < self.triangles.len() {
            let old = self.triangles[t];
            for k in 0..3 {
                let e = (old[k], old[(k + 1) % 3]);
                if self.edges.get(&e) == Some(&t) {
                    self.edges.remove(&e);
                }
            }
            self.triangles[t] = tri;
        } else {
            self.triangles.push(tri);
        }
        for k in 0..3 {
            self.edges.insert((tri[k], tri[(k + 1) % 3]), t);
        }
    }

    /// Triangle containing directed edge `(a, b)`, rotated to start at `a`.
    fn tri_with(&self, a: usize, b: usize) -> Option<(usize, usize)> {
        let &t = self.edges.get(&(a, b))?;
        let tri = self.triangles[t];
        let k = tri.iter().position(|&v| v == a)?;
        Some((t, tri[(k + 2) % 3]))
    }

    fn len(&self, a: usize, b: usize) -> f64 {
        dist(self.vertices[a], self.vertices[b])
    }

    /// Lawson flips on interior edges until locally Delaunay.
    fn make_delaunay(&mut self) {
        let stack: Vec<(usize, usize)> = self.edges.keys().copied().filter(|&(a, b)| a < b).collect();
        let scale = bbox_scale(&self.vertices);
        self.legalize(stack, scale, |_, _| {});
    }

    /// Flips edges from `stack` (and edges uncovered by flips) that fail the
    /// incircle test. `created` sees every new diagonal.
    fn legalize(&mut self, mut stack: Vec<(usize, usize)>, scale: f64, mut created: impl FnMut(usize, usize)) {
        let eps = 1e-12 * scale * scale * scale * scale;
        let area_eps = 1e-14 * scale * scale;
        let mut budget = 64 * self.triangles.len() + 1024;
        while let Some((a, b)) = stack.pop() {
            if budget == 0 {
                break;
            }
            budget -= 1;
            let (Some((t1, c)), Some((t2, d))) = (self.tri_with(a, b), self.tri_with(b, a)) else {
                continue;
            };
            let [pa, pb, pc, pd] = [a, b, c, d].map(|i| self.vertices[i]);
            if incircle(pa, pb, pc, pd) <= eps {
                continue;
            }
            // the flipped pair must stay counter-clockwise
            if orient(pa, pd, pc) <= area_eps || orient(pd, pb, pc) <= area_eps {
                continue;
            }
            self.set(t1, [a, d, c]);
            self.set(t2, [d, b, c]);
            created(c, d);
            stack.extend_from_slice(&[(a, d), (d, b), (b, c), (c, a)]);
        }
    }

    /// Bisects the longest edge first until all edges are `<= target`.
    fn refine(&mut self, target: f64) {
        let scale = bbox_scale(&self.vertices);
        let quantum = target * 1e-9;
        let key =
            |len: f64, a: usize, b: usize| (libm::floor(len / quantum) as u64, Reverse(a.min(b)), Reverse(a.max(b)));
        let mut heap: BinaryHeap<(u64, Reverse<usize>, Reverse<usize>)> = self
            .edges
            .keys()
            .filter(|&&(a, b)| a < b || !self.edges.contains_key(&(b, a)))
            .filter_map(|&(a, b)| {
                let l = self.len(a, b);
                (l > target).then(|| key(l, a, b))
            })
            .collect();
        while let Some((_, Reverse(a), Reverse(b))) = heap.pop() {
            let first = self.tri_with(a, b);
            let second = self.tri_with(b, a);
            if first.is_none() && second.is_none() {
                continue;
            }
            let (pa, pb) = (self.vertices[a], self.vertices[b]);
            let m = self.vertices.len();
            self.vertices.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
            let mut fresh = alloc::vec![(a, m), (m, b)];
            let mut suspect = Vec::with_capacity(4);
            if let Some((t, c)) = first {
                self.set(t, [a, m, c]);
                let t_new = self.triangles.len();
                self.set(t_new, [m, b, c]);
                fresh.push((m, c));
                suspect.extend_from_slice(&[(a, c), (c, b)]);
            }
            if let Some((t, d)) = second {
                self.set(t, [b, m, d]);
                let t_new = self.triangles.len();
                self.set(t_new, [m, a, d]);
                fresh.push((m, d));
                suspect.extend_from_slice(&[(b, d), (d, a)]);
            }
            self.legalize(suspect, scale, |u, v| fresh.push((u, v)));
            for (u, v) in fresh {
                let l = self.len(u, v);
                if l > target && (self.edges.contains_key(&(u, v)) || self.edges.contains_key(&(v, u))) {
                    heap.push(key(l, u, v));
                }
            }
        }
    }
}

/// Positive when `d` lies inside the circumcircle of counter-clockwise `(a, b, c)`.
fn incircle(a: Point2, b: Point2, c: Point2, d: Point2) -> f64 {
    let (adx, ady) = (a[0] - d[0], a[1] - d[1]);
    let (bdx, bdy) = (b[0] - d[0], b[1] - d[1]);
    let (cdx, cdy) = (c[0] - d[0], c[1] - d[1]);
    let ad = adx * adx + ady * ady;
    let bd = bdx * bdx + bdy * bdy;
    let cd = cdx * cdx + cdy * cdy;
    adx * (bdy * cd - bd * cdy) - ady * (bdx * cd - bd * cdx) + ad * (bdx * cdy - bdy * cdx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn check_partition(poly: &[Point2], tri: &Triangulation) {
        let expected = signed_area(poly);
        assert!(((tri.area() - expected) / expected).abs() < 1e-9, "{} vs {}", tri.area(), expected);
        assert!(tri.triangles.iter().all(|t| tri.triangle_area(t) > 0.0));
        for (k, &vi) in tri.input_vertices.iter().enumerate() {
            assert_eq!(tri.vertices[vi], poly[k]);
        }
    }

    #[test]
    fn unit_square_two_triangles() {
        let sq = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let t = triangulate_polygon(&sq, 2.0).unwrap();
        assert_eq!(t.triangles.len(), 2);
        assert!((t.area() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn refinement_bounds_edges() {
        let sq = [[0.0, 0.0], [3.0, 0.0], [3.0, 2.0], [0.0, 2.0]];
        let t = triangulate_polygon(&sq, 0.3).unwrap();
        assert!(t.max_edge_length() <= 0.3 + 1e-12);
        check_partition(&sq, &t);
    }

    #[test]
    fn concave_comb_polygon() {
        let mut poly = vec![[0.0, 0.0], [10.0, 0.0], [10.0, 3.0]];
        for k in (0..5).rev() {
            let x = 2.0 * k as f64;
            poly.push([x + 1.5, 3.0]);
            poly.push([x + 1.0, 1.0]);
            poly.push([x + 0.5, 3.0]);
            poly.push([x, 3.0]);
        }
        poly.dedup();
        let t = triangulate_polygon(&poly, 0.4).unwrap();
        check_partition(&poly, &t);
        assert!(t.max_edge_length() <= 0.4 + 1e-12);
    }

    #[test]
    fn annular_sector_with_collinear_runs() {
        let mut poly = Vec::new();
        let n = 200;
        for i in 0..=n {
            let a = 5.5 * i as f64 / n as f64;
            poly.push([10.0 * libm::cos(a), 10.0 * libm::sin(a)]);
        }
        for i in (0..=n).rev() {
            let a = 5.5 * i as f64 / n as f64;
            poly.push([7.0 * libm::cos(a), 7.0 * libm::sin(a)]);
        }
        let t = triangulate_polygon(&poly, 0.25).unwrap();
        check_partition(&poly, &t);
        assert!(t.max_edge_length() <= 0.25 + 1e-12);
    }

    #[test]
    fn detects_bow_tie_and_clockwise() {
        let bow = [[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]];
        assert!(matches!(triangulate_polygon(&bow, 1.0), Err(TriangulationError::SelfIntersectingBoundary(_, _))));
        let cw = [[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0]];
        assert_eq!(triangulate_polygon(&cw, 1.0), Err(TriangulationError::NotCounterClockwise));
        let back = [[0.0, 0.0], [2.0, 0.0], [1.0, 0.0], [1.0, 1.0]];
        assert!(find_self_intersection(&back).is_some());
    }
}
