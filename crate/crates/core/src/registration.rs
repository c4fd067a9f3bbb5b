//! Per-fragment rigid registration between the original and the reduced pose.
//!
//! Transforms map the original fragment onto the reduced one. Each fragment
//! is solved independently: PCA initialization (four proper sign
//! combinations), then trimmed point-to-point ICP with a closed-form Kabsch
//! update.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use thiserror::Error;

use crate::chamfer::{mesh_vertex_set, ChamferError, PointSet, Sampling};
use crate::geom::{centroid, GeomError, Mesh, Point3, RigidTransform};

/// Relative eigenvalue gap below which principal axes are ambiguous.
pub const EIGEN_GAP_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegistrationError {
    #[error("degenerate point configuration: {0}")]
    DegenerateConfiguration(&'static str),
    #[error("point lists differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("invalid parameter {name} = {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error(transparent)]
    Points(#[from] ChamferError),
    #[error(transparent)]
    Geometry(#[from] GeomError),
}

/// Least-squares rigid motion taking `src[i]` onto `dst[i]`.
///
/// Reflections are excluded by flipping the weakest singular direction.
pub fn kabsch(src: &[Point3], dst: &[Point3]) -> Result<RigidTransform, RegistrationError> {
    if src.len() != dst.len() {
        return Err(RegistrationError::LengthMismatch(src.len(), dst.len()));
    }
    if src.len() < 3 {
        return Err(RegistrationError::DegenerateConfiguration("fewer than 3 correspondences"));
    }
    let cs = centroid(src);
    let cd = centroid(dst);
    let mut h = Matrix3::<f64>::zeros();
    let mut spread = Matrix3::<f64>::zeros();
    for (s, d) in src.iter().zip(dst) {
        let a = (*s - cs).to_vector();
        let b = (*d - cd).to_vector();
        h += a * b.transpose();
        spread += a * a.transpose();
    }
    let sv = spread.symmetric_eigenvalues();
    let (lo, mid, hi) = sorted3(sv[0], sv[1], sv[2]);
    let _ = lo;
    if !(hi > 0.0) || mid <= 1e-20 * hi {
        return Err(RegistrationError::DegenerateConfiguration("source points are collinear or coincident"));
    }
    let svd = h.svd(true, true);
    let (Some(u), Some(v_t)) = (svd.u, svd.v_t) else {
        return Err(RegistrationError::DegenerateConfiguration("SVD failed"));
    };
    let v = v_t.transpose();
    let d = (v * u.transpose()).determinant().signum();
    // nalgebra sorts singular values descending; the last column is the weakest
    let correction = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d));
    let rotation = v * correction * u.transpose();
    let translation = cd.to_vector() - rotation * cs.to_vector();
    Ok(RigidTransform::new(rotation, translation)?)
}

fn sorted3(a: f64, b: f64, c: f64) -> (f64, f64, f64) {
    let mut v = [a, b, c];
    v.sort_by(f64::total_cmp);
    (v[0], v[1], v[2])
}

/// Principal axes sorted by descending variance, as columns with `det = +1`.
fn principal_axes(points: &[Point3]) -> Result<(Point3, Matrix3<f64>, [f64; 3]), RegistrationError> {
    if points.len() < 3 {
        return Err(RegistrationError::DegenerateConfiguration("fewer than 3 points"));
    }
    let c = centroid(points);
    let mut cov = Matrix3::<f64>::zeros();
    for p in points {
        let d = (*p - c).to_vector();
        cov += d * d.transpose();
    }
    cov /= points.len() as f64;
    let eig = SymmetricEigen::new(cov);
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = idx.map(|i| eig.eigenvalues[i]);
    let top = values[0];
    if !(top > 0.0) || values[2] <= EIGEN_GAP_TOL * top {
        return Err(RegistrationError::DegenerateConfiguration("rank-deficient covariance"));
    }
    if values[0] - values[1] <= EIGEN_GAP_TOL * top || values[1] - values[2] <= EIGEN_GAP_TOL * top {
        return Err(RegistrationError::DegenerateConfiguration("principal axes are not distinct"));
    }
    let mut axes = Matrix3::from_columns(&[
        eig.eigenvectors.column(idx[0]).into_owned(),
        eig.eigenvectors.column(idx[1]).into_owned(),
        eig.eigenvectors.column(idx[2]).into_owned(),
    ]);
    if axes.determinant() < 0.0 {
        axes.set_column(2, &(-axes.column(2)));
    }
    Ok((c, axes, values))
}

/// Trimmed RMS of nearest-neighbor distances from `src` (moved by `t`) into `dst`.
pub fn trimmed_rms(src: &PointSet, dst: &PointSet, t: &RigidTransform, trim_fraction: f64) -> f64 {
    let mut d2: Vec<f64> = src
        .points()
        .iter()
        .map(|&p| {
            let (_, d) = dst.nearest(t.apply(p));
            d * d
        })
        .collect();
    let keep = kept_count(d2.len(), trim_fraction);
    if keep < d2.len() {
        d2.select_nth_unstable_by(keep - 1, f64::total_cmp);
    }
    libm::sqrt(d2[..keep].iter().sum::<f64>() / keep as f64)
}

fn kept_count(n: usize, trim_fraction: f64) -> usize {
    (libm::ceil(trim_fraction * n as f64) as usize).clamp(1, n)
}

/// Four proper-rotation PCA alignments of `src` onto `dst`, best first.
pub fn pca_init(
    src: &PointSet,
    dst: &PointSet,
    trim_fraction: f64,
) -> Result<Vec<(RigidTransform, f64)>, RegistrationError> {
    let (cs, es, _) = principal_axes(src.points())?;
    let (cd, ed, _) = principal_axes(dst.points())?;
    let mut out = Vec::with_capacity(4);
    for (s1, s2) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
        // both frames are proper, so s3 = s1·s2 keeps det = +1
        let flip = Matrix3::from_diagonal(&Vector3::new(s1, s2, s1 * s2));
        let rotation = ed * flip * es.transpose();
        let translation = cd.to_vector() - rotation * cs.to_vector();
        let t = RigidTransform::new(rotation, translation)?;
        out.push((t, trimmed_rms(src, dst, &t, trim_fraction)));
    }
    out.sort_by(|a, b| a.1.total_cmp(&b.1));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcpParams {
    pub trim_fraction: f64,
    pub max_iter: usize,
    /// Convergence threshold on the change of trimmed RMS, in mm.
    pub tol: f64,
}

impl Default for IcpParams {
    fn default() -> Self {
        Self { trim_fraction: 0.9, max_iter: 100, tol: 1e-6 }
    }
}

impl IcpParams {
    fn validate(&self) -> Result<(), RegistrationError> {
        if !(0.5..=1.0).contains(&self.trim_fraction) {
            return Err(RegistrationError::InvalidParameter { name: "trim_fraction", value: self.trim_fraction });
        }
        if !(self.tol >= 0.0) {
            return Err(RegistrationError::InvalidParameter { name: "tol", value: self.tol });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationResult {
    /// Maps the original (source) pose onto the reduced (target) pose.
    pub transform: RigidTransform,
    /// Trimmed RMS at `transform`, in mm.
    pub rms: f64,
    pub inlier_fraction: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Trimmed RMS of the matches at the start of each iteration.
    pub rms_history: Vec<f64>,
}

/// Trimmed point-to-point ICP from `init`.
pub fn icp_rigid(
    src: &PointSet,
    dst: &PointSet,
    init: &RigidTransform,
    params: &IcpParams,
) -> Result<RegistrationResult, RegistrationError> {
    params.validate()?;
    let n = src.len();
    let keep = kept_count(n, params.trim_fraction);
    let mut transform = *init;
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut matches: Vec<(f64, usize, usize)> = Vec::with_capacity(n);
    let mut src_kept = Vec::with_capacity(keep);
    let mut dst_kept = Vec::with_capacity(keep);

    while iterations < params.max_iter {
        iterations += 1;
        matches.clear();
        for (i, &p) in src.points().iter().enumerate() {
            let (j, d) = dst.nearest(transform.apply(p));
            matches.push((d * d, i, j));
        }
        if keep < n {
            matches.select_nth_unstable_by(keep - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        }
        let kept = &mut matches[..keep];
        kept.sort_unstable_by_key(|m| m.1);
        let rms = libm::sqrt(kept.iter().map(|m| m.0).sum::<f64>() / keep as f64);
        let change = history.last().map(|&prev: &f64| (prev - rms).abs());
        history.push(rms);
        if change.is_some_and(|c| c < params.tol) || rms == 0.0 {
            converged = true;
            break;
        }
        src_kept.clear();
        dst_kept.clear();
        for &(_, i, j) in kept.iter() {
            src_kept.push(src.points()[i]);
            dst_kept.push(dst.points()[j]);
        }
        transform = kabsch(&src_kept, &dst_kept)?;
    }
    let rms = trimmed_rms(src, dst, &transform, params.trim_fraction);
    Ok(RegistrationResult {
        transform,
        rms,
        inlier_fraction: keep as f64 / n as f64,
        iterations,
        converged,
        rms_history: history,
    })
}

/// One fragment seen in its original and its reduced scan.
#[derive(Debug, Clone, PartialEq)]
pub struct FragmentMatch {
    pub fragment_id: String,
    pub original: Mesh,
    pub reduced: Mesh,
    /// Optional manual initial transform; skips PCA initialization.
    pub seed_transform: Option<RigidTransform>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegistrationParams {
    pub icp: IcpParams,
    pub sampling: Sampling,
    /// PCA candidates whose initial RMS exceeds this multiple of the best
    /// candidate's are not refined.
    pub candidate_rms_factor: f64,
}

impl Default for RegistrationParams {
    fn default() -> Self {
        Self { icp: IcpParams::default(), sampling: Sampling::Vertices, candidate_rms_factor: 3.0 }
    }
}

/// Registers one fragment; tries every plausible PCA candidate and keeps
/// the lowest final RMS (ties keep the earlier candidate).
pub fn register_fragment(
    m: &FragmentMatch,
    params: &RegistrationParams,
) -> Result<RegistrationResult, RegistrationError> {
    let src = mesh_vertex_set(&m.original, params.sampling)?;
    let dst = mesh_vertex_set(&m.reduced, params.sampling)?;
    if let Some(seed) = &m.seed_transform {
        return icp_rigid(&src, &dst, seed, &params.icp);
    }
    let candidates = pca_init(&src, &dst, params.icp.trim_fraction)?;
    let best_initial = candidates[0].1;
    let mut best: Option<RegistrationResult> = None;
    for (init, initial_rms) in &candidates {
        if *initial_rms > params.candidate_rms_factor * best_initial && best.is_some() {
            break;
        }
        let result = icp_rigid(&src, &dst, init, &params.icp)?;
        if best.as_ref().is_none_or(|b| result.rms < b.rms) {
            best = Some(result);
        }
    }
    best.ok_or(RegistrationError::DegenerateConfiguration("no candidate"))
}

/// Registration outcome for one fragment of a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct FragmentRegistration {
    pub fragment_id: String,
    pub result: Result<RegistrationResult, String>,
}

/// Registers every fragment independently; failures are recorded per entry.
pub fn recover_fragment_transforms(
    matches: &[FragmentMatch],
    params: &RegistrationParams,
) -> Vec<FragmentRegistration> {
    matches
        .iter()
        .map(|m| FragmentRegistration {
            fragment_id: m.fragment_id.clone(),
            result: register_fragment(m, params).map_err(|e| e.to_string()),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use core::f64::consts::FRAC_PI_2;

    fn cloud() -> Vec<Point3> {
        // anisotropic box lattice: distinct principal axes
        let mut v = Vec::new();
        for i in 0..8 {
            for j in 0..5 {
                for k in 0..3 {
                    v.push(Point3::xyz(i as f64 * 1.3, j as f64 * 0.9 + 0.05 * i as f64, k as f64 * 0.4));
                }
            }
        }
        v
    }

    #[test]
    fn kabsch_identity_and_exact_motion() {
        let src = cloud();
        let t = kabsch(&src, &src).unwrap();
        assert!((t.to_homogeneous() - nalgebra::Matrix4::identity()).amax() < 1e-12);

        let truth = RigidTransform::from_axis_angle(Point3::xyz(0.0, 0.0, 1.0), FRAC_PI_2)
            .unwrap()
            .with_translation(Point3::xyz(1.0, 2.0, 3.0));
        let dst: Vec<Point3> = src.iter().map(|&p| truth.apply(p)).collect();
        let t = kabsch(&src, &dst).unwrap();
        assert!((t.to_homogeneous() - truth.to_homogeneous()).amax() < 1e-10);
    }

    #[test]
    fn kabsch_rejects_collinear() {
        let line: Vec<Point3> = (0..5).map(|i| Point3::xyz(i as f64, 0.0, 0.0)).collect();
        assert!(matches!(kabsch(&line, &line), Err(RegistrationError::DegenerateConfiguration(_))));
        assert!(matches!(kabsch(&line[..2], &line[..2]), Err(RegistrationError::DegenerateConfiguration(_))));
        assert_eq!(kabsch(&line, &line[..3]).unwrap_err(), RegistrationError::LengthMismatch(5, 3));
    }

    #[test]
    fn kabsch_never_reflects() {
        // a planar mirrored configuration would yield det = -1 without correction
        let src = vec![
            Point3::xyz(0.0, 0.0, 0.0),
            Point3::xyz(1.0, 0.0, 0.0),
            Point3::xyz(0.0, 1.0, 0.0),
            Point3::xyz(1.0, 1.0, 0.0),
        ];
        let dst: Vec<Point3> = src.iter().map(|p| Point3::xyz(p.x, p.y, -p.z)).collect();
        let t = kabsch(&src, &dst).unwrap();
        assert!((t.rotation().determinant() - 1.0).abs() < 1e-12);
        let mirrored: Vec<Point3> = src.iter().map(|p| Point3::xyz(-p.x, p.y, p.z)).collect();
        let t = kabsch(&src, &mirrored).unwrap();
        assert!((t.rotation().determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pca_identity_first() {
        let s = PointSet::new(cloud()).unwrap();
        let c = pca_init(&s, &s, 0.9).unwrap();
        assert_eq!(c.len(), 4);
        assert!((c[0].0.to_homogeneous() - nalgebra::Matrix4::identity()).amax() < 1e-9);
        assert!(c.windows(2).all(|w| w[0].1 <= w[1].1));
    }

    #[test]
    fn pca_rejects_symmetric_cloud() {
        let mut v = Vec::new();
        for s in [-1.0, 1.0] {
            v.push(Point3::xyz(s, 0.0, 0.0));
            v.push(Point3::xyz(0.0, s, 0.0));
            v.push(Point3::xyz(0.0, 0.0, s));
        }
        let s = PointSet::new(v).unwrap();
        assert!(matches!(pca_init(&s, &s, 0.9), Err(RegistrationError::DegenerateConfiguration(_))));
    }

    #[test]
    fn icp_fixed_point() {
        let s = PointSet::new(cloud()).unwrap();
        let r = icp_rigid(&s, &s, &RigidTransform::identity(), &IcpParams::default()).unwrap();
        assert!(r.converged);
        assert!(r.iterations <= 2);
        assert!(r.rms < 1e-9);
    }

    #[test]
    fn icp_rejects_bad_trim() {
        let s = PointSet::new(cloud()).unwrap();
        let p = IcpParams { trim_fraction: 0.3, ..IcpParams::default() };
        assert!(matches!(
            icp_rigid(&s, &s, &RigidTransform::identity(), &p),
            Err(RegistrationError::InvalidParameter { .. })
        ));
    }
}
