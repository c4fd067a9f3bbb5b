//! Thin-plate-spline interpolation of scattered 2D data.
//!
//! `f(x) = Σ wᵢ φ(|x − xᵢ|) + a₀ + a₁u + a₂v` with `φ(r) = r² ln r`, subject to
//! `Σ wᵢ = Σ wᵢuᵢ = Σ wᵢvᵢ = 0`. Interpolation is exact (no smoothing) and
//! affine fields are reproduced exactly.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::triangulate::Point2;

/// Nodes closer than this are merged (values averaged).
pub const DUPLICATE_TOL: f64 = 1e-9;

/// Above this 1-norm condition estimate the system is refit with a ridge term.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Ridge strength relative to the mean absolute kernel entry.
pub const RIDGE_FACTOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RbfError {
    #[error("need at least 3 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("node and value counts differ ({nodes} vs {values})")]
    LengthMismatch { nodes: usize, values: usize },
    #[error("nodes are collinear")]
    CollinearNodes,
    #[error("non-finite node or value")]
    NonFinite,
    #[error("interpolation system is singular")]
    SingularSystem,
}

#[inline]
pub fn tps_kernel(r: f64) -> f64 {
    if r <= 0.0 {
        0.0
    } else {
        r * r * libm::log(r)
    }
}

#[derive(Debug, Clone)]
pub struct ThinPlateSpline {
    /// Nodes in normalized coordinates.
    nodes: Vec<Point2>,
    weights: Vec<f64>,
    affine: [f64; 3],
    offset: Point2,
    scale: f64,
    condition_estimate: f64,
    regularized: bool,
}

impl ThinPlateSpline {
    #[inline]
    fn normalize(&self, p: Point2) -> Point2 {
        [(p[0] - self.offset[0]) / self.scale, (p[1] - self.offset[1]) / self.scale]
    }

    pub fn evaluate(&self, p: Point2) -> f64 {
        let q = self.normalize(p);
        let mut s = self.affine[0] + self.affine[1] * q[0] + self.affine[2] * q[1];
        for (n, w) in self.nodes.iter().zip(&self.weights) {
            s += w * tps_kernel(libm::hypot(q[0] - n[0], q[1] - n[1]));
        }
        s
    }

    /// Number of nodes after duplicate merging.
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// 1-norm condition estimate of the interpolation system.
    pub fn condition_estimate(&self) -> f64 {
        self.condition_estimate
    }

    /// True when the ridge fallback was used; interpolation is then inexact.
    pub fn is_regularized(&self) -> bool {
        self.regularized
    }
}

/// Merges nodes within [`DUPLICATE_TOL`], averaging their values.
pub fn merge_duplicates(nodes: &[Point2], values: &[f64]) -> (Vec<Point2>, Vec<f64>) {
    let mut order: Vec<usize> = (0..nodes.len()).collect();
    order.sort_by(|&i, &j| nodes[i][0].total_cmp(&nodes[j][0]).then(i.cmp(&j)));
    let mut group = alloc::vec![usize::MAX; nodes.len()];
    let mut out_nodes: Vec<Point2> = Vec::new();
    let mut sums: Vec<(f64, usize)> = Vec::new();
    // assign in input order so the result is independent of sort ties
    for i in 0..nodes.len() {
        if group[i] != usize::MAX {
            continue;
        }
        let g = out_nodes.len();
        group[i] = g;
        out_nodes.push(nodes[i]);
        sums.push((values[i], 1));
        let start = order.partition_point(|&k| nodes[k][0] < nodes[i][0] - DUPLICATE_TOL);
        for &k in &order[start..] {
            if nodes[k][0] > nodes[i][0] + DUPLICATE_TOL {
                break;
            }
            if k != i
                && group[k] == usize::MAX
                && libm::hypot(nodes[k][0] - nodes[i][0], nodes[k][1] - nodes[i][1]) <= DUPLICATE_TOL
            {
                group[k] = g;
                sums[g].0 += values[k];
                sums[g].1 += 1;
            }
        }
    }
    let values = sums.into_iter().map(|(s, c)| s / c as f64).collect();
    (out_nodes, values)
}

pub fn rbf_fit(nodes: &[Point2], values: &[f64]) -> Result<ThinPlateSpline, RbfError> {
    if nodes.len() != values.len() {
        return Err(RbfError::LengthMismatch { nodes: nodes.len(), values: values.len() });
    }
    if nodes.iter().flatten().chain(values).any(|v| !v.is_finite()) {
        return Err(RbfError::NonFinite);
    }
    let (raw, values) = merge_duplicates(nodes, values);
    let n = raw.len();
    if n < 3 {
        return Err(RbfError::TooFewNodes(n));
    }

    let mut offset = [0.0, 0.0];
    for p in &raw {
        offset[0] += p[0] / n as f64;
        offset[1] += p[1] / n as f64;
    }
    let scale = raw.iter().map(|p| libm::hypot(p[0] - offset[0], p[1] - offset[1])).fold(0.0, f64::max);
    if !(scale > 0.0) {
        return Err(RbfError::CollinearNodes);
    }
    let local: Vec<Point2> = raw.iter().map(|p| [(p[0] - offset[0]) / scale, (p[1] - offset[1]) / scale]).collect();

    // collinear iff the centered second-moment matrix is rank deficient
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in &local {
        sxx += p[0] * p[0];
        sxy += p[0] * p[1];
        syy += p[1] * p[1];
    }
    let tr = sxx + syy;
    let det = sxx * syy - sxy * sxy;
    if !(det > 1e-12 * tr * tr) {
        return Err(RbfError::CollinearNodes);
    }

    let size = n + 3;
    let mut a = DMatrix::<f64>::zeros(size, size);
    for i in 0..n {
        for j in (i + 1)..n {
            let k = tps_kernel(libm::hypot(local[i][0] - local[j][0], local[i][1] - local[j][1]));
            a[(i, j)] = k;
            a[(j, i)] = k;
        }
        a[(i, n)] = 1.0;
        a[(i, n + 1)] = local[i][0];
        a[(i, n + 2)] = local[i][1];
        a[(n, i)] = 1.0;
        a[(n + 1, i)] = local[i][0];
        a[(n + 2, i)] = local[i][1];
    }
    let mut rhs = DVector::<f64>::zeros(size);
    rhs.rows_mut(0, n).copy_from_slice(&values);

    let (solution, condition_estimate, regularized) = match solve_checked(&a, &rhs) {
        Some((x, cond)) if cond <= CONDITION_LIMIT => (x, cond, false),
        _ => {
            let mean_abs = a.view((0, 0), (n, n)).iter().map(|v| v.abs()).sum::<f64>() / (n * n) as f64;
            let lambda = RIDGE_FACTOR * mean_abs.max(f64::MIN_POSITIVE);
            let mut ridge = a.clone();
            for i in 0..n {
                ridge[(i, i)] += lambda;
            }
            let (x, cond) = solve_checked(&ridge, &rhs).ok_or(RbfError::SingularSystem)?;
            (x, cond, true)
        }
    };
    if solution.iter().any(|v| !v.is_finite()) {
        return Err(RbfError::SingularSystem);
    }

    Ok(ThinPlateSpline {
        nodes: local,
        weights: solution.rows(0, n).iter().copied().collect(),
        affine: [solution[n], solution[n + 1], solution[n + 2]],
        offset,
        scale,
        condition_estimate,
        regularized,
    })
}

/// LU solve with one step of iterative refinement, plus a Hager 1-norm
/// condition estimate (the matrix is symmetric, so `Aᵀ` solves reuse the LU).
fn solve_checked(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<(DVector<f64>, f64)> {
    let lu = a.clone().lu();
    let mut x = lu.solve(b)?;
    let r = b - a * &x;
    if let Some(dx) = lu.solve(&r) {
        x += dx;
    }
    let norm_a = (0..a.ncols()).map(|j| a.column(j).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let inv_norm = hager_inverse_norm(&lu, a.nrows())?;
    Some((x, norm_a * inv_norm))
}

fn hager_inverse_norm(lu: &nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>, n: usize) -> Option<f64> {
    let mut v = DVector::from_element(n, 1.0 / n as f64);
    let mut estimate = 0.0;
    for _ in 0..5 {
        let y = lu.solve(&v)?;
        let new_estimate = y.iter().map(|v| v.abs()).sum::<f64>();
        let xi = y.map(|v| if v >= 0.0 { 1.0 } else { -1.0 });
        let z = lu.solve(&xi)?;
        let (j, zmax) =
            z.iter().enumerate().fold((0, 0.0), |acc, (k, v)| if v.abs() > acc.1 { (k, v.abs()) } else { acc });
        if new_estimate <= estimate || zmax <= z.dot(&v) {
            estimate = estimate.max(new_estimate);
            break;
        }
        estimate = new_estimate;
        v.fill(0.0);
        v[j] = 1.0;
    }
    Some(estimate)
}
