//! Reduction-quality metrics on the fitted articular sphere.
//!
//! * 3D gap: symmetric geodesic Hausdorff distance between the two projected
//!   fracture lines of a pair.
//! * 3D step-off: largest absolute radial deviation of the line samples from
//!   the sphere (or, in differential mode, the largest deviation difference
//!   across the gap).
//! * Gap area: the region between the lines is unwrapped with an
//!   azimuthal-equidistant chart, triangulated, lifted back to 3D with radial
//!   deviations interpolated by a thin-plate spline, and integrated.
//!
//! Over several pairs the gap and step-off are maxima, the area is a sum.

mod unwrap;

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;

use thiserror::Error;

use crate::geom::{Mesh, Point3, Polyline3, RigidTransform};
use crate::rbf::{rbf_fit, RbfError, ThinPlateSpline};
use crate::sphere::{angle_between, slerp, Sphere, SphereError};
use crate::sphere_fit::{fit_sphere_algebraic, fit_sphere_geometric, FitError, LandmarkSet};
use crate::triangulate::{triangulate_polygon, Triangulation, TriangulationError};

pub use unwrap::{AzimuthalChart, UnwrappedRegion, SNAP_TOL};

pub const DEFAULT_ARC_STEP: f64 = 0.25;
pub const DEFAULT_TARGET_EDGE: f64 = 0.5;

pub const GAP_DEFINITION: &str = "symmetric geodesic Hausdorff distance between projected fracture lines";
pub const UNWRAP_CHART: &str = "azimuthal-equidistant about the spherical centroid of the projected lines";
pub const AGGREGATION: &str = "gap_3d and step_off_3d: max over pairs; total_gap_area: sum over pairs";
pub const RBF_KERNEL: &str = "thin-plate spline r^2 log r with affine term";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error(transparent)]
    Sphere(#[from] SphereError),
    #[error(transparent)]
    Geometry(#[from] crate::geom::GeomError),
    #[error("consecutive line points are antipodal on the sphere")]
    AntipodalSegment,
    #[error("gap region spans a cap of {cap_degrees:.2} degrees (must be below 90)")]
    RegionTooLarge { cap_degrees: f64 },
    #[error("gap boundary self-intersects (edges {0} and {1})")]
    SelfIntersectingBoundary(usize, usize),
    #[error("gap region has zero width")]
    ZeroWidthRegion,
    #[error("triangulation failed: {0}")]
    Triangulation(#[from] TriangulationError),
    #[error("radial interpolation failed: {0}")]
    Rbf(#[from] RbfError),
    #[error("invalid parameter {name} = {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("pair fragment ids must differ (both {0:?})")]
    SameFragment(String),
    #[error("no fracture line pairs")]
    MissingPairs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StepOffMode {
    /// Largest |radial deviation| over both lines.
    #[default]
    Absolute,
    /// Largest |dev(a) − dev(b)| between geodesic nearest neighbors across the gap.
    Differential,
}

impl StepOffMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            StepOffMode::Absolute => "absolute",
            StepOffMode::Differential => "differential",
        }
    }
}

impl core::str::FromStr for StepOffMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "absolute" => Ok(Self::Absolute),
            "differential" => Ok(Self::Differential),
            other => Err(format!("unknown step-off mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricParams {
    pub arc_step: f64,
    pub target_edge: f64,
    pub step_off_mode: StepOffMode,
}

impl Default for MetricParams {
    fn default() -> Self {
        Self { arc_step: DEFAULT_ARC_STEP, target_edge: DEFAULT_TARGET_EDGE, step_off_mode: StepOffMode::Absolute }
    }
}

impl MetricParams {
    pub fn validate(&self) -> Result<(), MetricsError> {
        check_positive("arc_step", self.arc_step)?;
        check_positive("target_edge", self.target_edge)
    }
}

fn check_positive(name: &'static str, value: f64) -> Result<(), MetricsError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(MetricsError::InvalidParameter { name, value })
    }
}

/// Two opposing fracture lines bounding one gap.
#[derive(Debug, Clone, PartialEq)]
pub struct FractureLinePair {
    pub pair_id: String,
    pub fragment_a: String,
    pub fragment_b: String,
    pub line_a: Polyline3,
    pub line_b: Polyline3,
}

impl FractureLinePair {
    pub fn new(
        pair_id: impl Into<String>,
        fragment_a: impl Into<String>,
        line_a: Polyline3,
        fragment_b: impl Into<String>,
        line_b: Polyline3,
    ) -> Result<Self, MetricsError> {
        let (fragment_a, fragment_b) = (fragment_a.into(), fragment_b.into());
        if fragment_a == fragment_b {
            return Err(MetricsError::SameFragment(fragment_a));
        }
        Ok(Self { pair_id: pair_id.into(), fragment_a, fragment_b, line_a, line_b })
    }

    /// The same pair with the two sides exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            pair_id: self.pair_id.clone(),
            fragment_a: self.fragment_b.clone(),
            fragment_b: self.fragment_a.clone(),
            line_a: self.line_b.clone(),
            line_b: self.line_a.clone(),
        }
    }

    pub fn transformed(&self, t: &RigidTransform) -> Self {
        Self { line_a: self.line_a.transformed(t), line_b: self.line_b.transformed(t), ..self.clone() }
    }

    /// Lines in a canonical order that depends only on intrinsic shape
    /// (length, then point count), so swapping sides or moving the case
    /// rigidly gives the same gap region.
    fn canonical_lines(&self) -> (&Polyline3, &Polyline3) {
        let (a, b) = (&self.line_a, &self.line_b);
        let (la, lb) = (polyline_length(a), polyline_length(b));
        let order = if (la - lb).abs() > 1e-9 * la.max(lb) {
            la.total_cmp(&lb)
        } else if a.len() != b.len() {
            a.len().cmp(&b.len())
        } else {
            lexicographic(a.points(), b.points())
        };
        if order == Ordering::Greater {
            (b, a)
        } else {
            (a, b)
        }
    }
}

fn polyline_length(line: &Polyline3) -> f64 {
    line.points().windows(2).map(|w| w[0].distance(w[1])).sum()
}

fn lexicographic(a: &[Point3], b: &[Point3]) -> Ordering {
    for (p, q) in a.iter().zip(b) {
        for k in 0..3 {
            let o = p.coord(k).total_cmp(&q.coord(k));
            if o != Ordering::Equal {
                return o;
            }
        }
    }
    a.len().cmp(&b.len())
}

/// A fracture line radially projected onto the sphere and resampled.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedLine {
    pub surface_points: Vec<Point3>,
    /// Signed radial deviation (positive outside) at each surface point.
    pub radial_deviations: Vec<f64>,
}

impl ProjectedLine {
    pub fn len(&self) -> usize {
        self.surface_points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.surface_points.is_empty()
    }

    pub fn samples(&self) -> impl Iterator<Item = (Point3, f64)> + '_ {
        self.surface_points.iter().copied().zip(self.radial_deviations.iter().copied())
    }
}

/// Projects every vertex onto the sphere and resamples each segment along
/// its great circle so consecutive samples are at most `arc_step` apart.
pub fn project_line(sphere: &Sphere, line: &Polyline3, arc_step: f64) -> Result<ProjectedLine, MetricsError> {
    check_positive("arc_step", arc_step)?;
    let mut dirs = Vec::with_capacity(line.len());
    let mut devs = Vec::with_capacity(line.len());
    for &p in line.points() {
        let (_, dev) = sphere.project(p)?;
        dirs.push(sphere.direction(p)?);
        devs.push(dev);
    }
    let mut surface_points = Vec::new();
    let mut radial_deviations = Vec::new();
    let on_sphere = |d: Point3| sphere.center + d * sphere.radius;
    surface_points.push(on_sphere(dirs[0]));
    radial_deviations.push(devs[0]);
    for i in 0..dirs.len() - 1 {
        let (da, db) = (dirs[i], dirs[i + 1]);
        let angle = angle_between(da, db);
        if core::f64::consts::PI - angle < 1e-9 {
            return Err(MetricsError::AntipodalSegment);
        }
        let pieces = libm::ceil(sphere.radius * angle / arc_step).max(1.0) as usize;
        for k in 1..pieces {
            let t = k as f64 / pieces as f64;
            let d = slerp(da, db, t).normalized().unwrap_or(da);
            surface_points.push(on_sphere(d));
            radial_deviations.push(devs[i] + t * (devs[i + 1] - devs[i]));
        }
        surface_points.push(on_sphere(db));
        radial_deviations.push(devs[i + 1]);
    }
    Ok(ProjectedLine { surface_points, radial_deviations })
}

fn directions(sphere: &Sphere, line: &ProjectedLine) -> Vec<Point3> {
    line.surface_points.iter().map(|&p| (p - sphere.center) / sphere.radius).collect()
}

/// For each point of `from`, the angle to and index of its geodesic nearest
/// neighbor in `to`.
fn nearest_angles(from: &[Point3], to: &[Point3]) -> Vec<(f64, usize)> {
    from.iter()
        .map(|&u| {
            // chord length is monotone in the angle; refine the winner with atan2
            let mut best = (f64::INFINITY, 0);
            for (j, &v) in to.iter().enumerate() {
                let d = u.distance_squared(v);
                if d < best.0 {
                    best = (d, j);
                }
            }
            (angle_between(u, to[best.1]), best.1)
        })
        .collect()
}

/// Symmetric geodesic Hausdorff distance between two projected lines.
pub fn hausdorff_gap(sphere: &Sphere, a: &ProjectedLine, b: &ProjectedLine) -> f64 {
    let (da, db) = (directions(sphere, a), directions(sphere, b));
    let ab = nearest_angles(&da, &db).into_iter().map(|x| x.0).fold(0.0, f64::max);
    let ba = nearest_angles(&db, &da).into_iter().map(|x| x.0).fold(0.0, f64::max);
    sphere.radius * ab.max(ba)
}

pub fn gap_3d(sphere: &Sphere, pair: &FractureLinePair, arc_step: f64) -> Result<f64, MetricsError> {
    let a = project_line(sphere, &pair.line_a, arc_step)?;
    let b = project_line(sphere, &pair.line_b, arc_step)?;
    Ok(hausdorff_gap(sphere, &a, &b))
}

fn step_off_between(sphere: &Sphere, a: &ProjectedLine, b: &ProjectedLine, mode: StepOffMode) -> f64 {
    match mode {
        StepOffMode::Absolute => {
            a.radial_deviations.iter().chain(&b.radial_deviations).map(|d| d.abs()).fold(0.0, f64::max)
        }
        StepOffMode::Differential => {
            let (da, db) = (directions(sphere, a), directions(sphere, b));
            let across = |from: &ProjectedLine, to: &ProjectedLine, nn: Vec<(f64, usize)>| {
                nn.into_iter()
                    .enumerate()
                    .map(|(i, (_, j))| (from.radial_deviations[i] - to.radial_deviations[j]).abs())
                    .fold(0.0, f64::max)
            };
            let ab = across(a, b, nearest_angles(&da, &db));
            let ba = across(b, a, nearest_angles(&db, &da));
            ab.max(ba)
        }
    }
}

pub fn step_off_3d(
    sphere: &Sphere,
    pair: &FractureLinePair,
    arc_step: f64,
    mode: StepOffMode,
) -> Result<f64, MetricsError> {
    let a = project_line(sphere, &pair.line_a, arc_step)?;
    let b = project_line(sphere, &pair.line_b, arc_step)?;
    Ok(step_off_between(sphere, &a, &b, mode))
}

/// Closed chart-plane boundary of the gap between the two lines of `pair`.
///
/// The boundary runs along line A, connects to the nearer end of line B,
/// runs back along B and closes to the start of A; it is made
/// counter-clockwise.
pub fn unwrap_region(sphere: &Sphere, pair: &FractureLinePair, arc_step: f64) -> Result<UnwrappedRegion, MetricsError> {
    let (la, lb) = pair.canonical_lines();
    let a = project_line(sphere, la, arc_step)?;
    let b = project_line(sphere, lb, arc_step)?;
    unwrap::build_region(sphere, &a, &b, arc_step)
}

pub fn triangulate_region(region: &UnwrappedRegion, target_edge: f64) -> Result<Triangulation, MetricsError> {
    Ok(triangulate_polygon(&region.boundary, target_edge)?)
}

/// Radial-deviation interpolant over the region boundary nodes.
pub fn fit_region_deviation(region: &UnwrappedRegion) -> Result<ThinPlateSpline, MetricsError> {
    Ok(rbf_fit(&region.boundary, &region.node_deviations)?)
}

/// Triangulated 3D surface spanning one gap.
#[derive(Debug, Clone, PartialEq)]
pub struct GapPatch {
    pub mesh: Mesh,
    pub area: f64,
    /// Patch vertex index of each region boundary node.
    pub boundary_nodes: Vec<usize>,
    /// The interpolant fell back to a ridge fit.
    pub regularized: bool,
}

/// Lifts the chart triangulation onto the sphere, offset radially by the
/// interpolated deviation, and sums the 3D triangle areas.
pub fn reproject_patch(
    sphere: &Sphere,
    tri: &Triangulation,
    model: &ThinPlateSpline,
    region: &UnwrappedRegion,
) -> GapPatch {
    let chart = AzimuthalChart { radius: sphere.radius, ..region.chart };
    let vertices: Vec<Point3> = tri.vertices.iter().map(|&uv| chart.inverse_point(uv, model.evaluate(uv))).collect();
    let mesh = Mesh { vertices, faces: tri.triangles.clone() };
    let area = mesh.surface_area();
    GapPatch { mesh, area, boundary_nodes: tri.input_vertices.clone(), regularized: model.is_regularized() }
}

/// Full area pipeline for one pair: unwrap, triangulate, interpolate, lift.
pub fn gap_patch(sphere: &Sphere, pair: &FractureLinePair, params: &MetricParams) -> Result<GapPatch, MetricsError> {
    params.validate()?;
    let region = unwrap_region(sphere, pair, params.arc_step)?;
    let tri = triangulate_region(&region, params.target_edge)?;
    let model = fit_region_deviation(&region)?;
    Ok(reproject_patch(sphere, &tri, &model, &region))
}

/// Gap area of one pair; a zero-width region (coincident lines) has area 0.
pub fn pair_gap_area(
    sphere: &Sphere,
    pair: &FractureLinePair,
    params: &MetricParams,
) -> Result<(f64, Vec<String>), MetricsError> {
    match gap_patch(sphere, pair, params) {
        Ok(patch) => {
            let mut warnings = Vec::new();
            if patch.regularized {
                warnings.push(format!("pair {}: radial interpolation used ridge regularization", pair.pair_id));
            }
            Ok((patch.area, warnings))
        }
        Err(MetricsError::ZeroWidthRegion) => {
            Ok((0.0, alloc::vec![format!("pair {}: zero-width gap region, area set to 0", pair.pair_id)]))
        }
        Err(e) => Err(e),
    }
}

/// Metrics of one fracture-line pair. A `None` metric failed; see `error`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairMetrics {
    pub pair_id: String,
    pub gap_3d: Option<f64>,
    pub step_off_3d: Option<f64>,
    pub gap_area: Option<f64>,
    pub error: Option<String>,
}

impl PairMetrics {
    pub fn is_complete(&self) -> bool {
        self.gap_3d.is_some() && self.step_off_3d.is_some() && self.gap_area.is_some()
    }
}

/// Per-pair gap areas and their sum over the pairs that succeeded.
#[derive(Debug, Clone, PartialEq)]
pub struct GapAreaSummary {
    pub per_pair: Vec<Result<f64, MetricsError>>,
    pub total: f64,
    pub warnings: Vec<String>,
}

pub fn total_gap_area(
    sphere: &Sphere,
    pairs: &[FractureLinePair],
    params: &MetricParams,
) -> Result<GapAreaSummary, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::MissingPairs);
    }
    let mut warnings = Vec::new();
    let per_pair: Vec<Result<f64, MetricsError>> = pairs
        .iter()
        .map(|p| {
            pair_gap_area(sphere, p, params).map(|(area, w)| {
                warnings.extend(w);
                area
            })
        })
        .collect();
    let total = per_pair.iter().filter_map(|r| r.as_ref().ok()).sum();
    Ok(GapAreaSummary { per_pair, total, warnings })
}

/// All three metrics for one pair; failures are recorded, not propagated.
pub fn pair_metrics(sphere: &Sphere, pair: &FractureLinePair, params: &MetricParams) -> (PairMetrics, Vec<String>) {
    let mut row =
        PairMetrics { pair_id: pair.pair_id.clone(), gap_3d: None, step_off_3d: None, gap_area: None, error: None };
    let mut warnings = Vec::new();
    let mut errors: Vec<String> = Vec::new();
    if let Err(e) = params.validate() {
        row.error = Some(e.to_string());
        return (row, warnings);
    }
    match (project_line(sphere, &pair.line_a, params.arc_step), project_line(sphere, &pair.line_b, params.arc_step)) {
        (Ok(a), Ok(b)) => {
            row.gap_3d = Some(hausdorff_gap(sphere, &a, &b));
            row.step_off_3d = Some(step_off_between(sphere, &a, &b, params.step_off_mode));
        }
        (Err(e), _) | (_, Err(e)) => errors.push(format!("projection: {e}")),
    }
    match pair_gap_area(sphere, pair, params) {
        Ok((area, w)) => {
            row.gap_area = Some(area);
            warnings.extend(w);
        }
        Err(e) => errors.push(format!("gap area: {e}")),
    }
    if !errors.is_empty() {
        row.error = Some(errors.join("; "));
    }
    (row, warnings)
}

/// Case-level result: fitted sphere, per-pair rows and aggregates.
#[derive(Debug, Clone, PartialEq)]
pub struct ReductionReport {
    pub sphere: Sphere,
    pub sphere_iterations: usize,
    pub per_pair: Vec<PairMetrics>,
    /// Sum of available per-pair areas.
    pub total_gap_area: f64,
    /// Max of available per-pair gaps.
    pub gap_3d: Option<f64>,
    /// Max of available per-pair step-offs.
    pub step_off_3d: Option<f64>,
    pub params: MetricParams,
    pub warnings: Vec<String>,
}

impl ReductionReport {
    /// Every pair produced all three metrics.
    pub fn is_complete(&self) -> bool {
        self.per_pair.iter().all(PairMetrics::is_complete)
    }

    pub fn from_rows(
        sphere: Sphere,
        sphere_iterations: usize,
        per_pair: Vec<PairMetrics>,
        params: MetricParams,
        mut warnings: Vec<String>,
    ) -> Self {
        let total_gap_area = per_pair.iter().filter_map(|r| r.gap_area).sum();
        let max_of = |f: fn(&PairMetrics) -> Option<f64>| per_pair.iter().filter_map(f).reduce(f64::max);
        let gap_3d = max_of(|r| r.gap_3d);
        let step_off_3d = max_of(|r| r.step_off_3d);
        for r in &per_pair {
            if let Some(e) = &r.error {
                warnings.push(format!("pair {} excluded from affected aggregates: {e}", r.pair_id));
            }
        }
        Self { sphere, sphere_iterations, per_pair, total_gap_area, gap_3d, step_off_3d, params, warnings }
    }
}

/// Pipeline stage where a case failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Input,
    SphereFit,
    Metrics,
}

impl Stage {
    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::Input => "input",
            Stage::SphereFit => "sphere fit",
            Stage::Metrics => "metrics",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{} stage: {message}", stage.as_str())]
pub struct CaseError {
    pub stage: Stage,
    pub message: String,
}

impl CaseError {
    fn new(stage: Stage, e: impl core::fmt::Display) -> Self {
        Self { stage, message: e.to_string() }
    }
}

/// Fits the articular sphere to the landmarks, then computes every pair.
pub fn case_metrics(
    landmarks: &LandmarkSet,
    pairs: &[FractureLinePair],
    params: &MetricParams,
) -> Result<ReductionReport, CaseError> {
    if pairs.is_empty() {
        return Err(CaseError::new(Stage::Input, MetricsError::MissingPairs));
    }
    params.validate().map_err(|e| CaseError::new(Stage::Input, e))?;
    let mut warnings = Vec::new();
    let init = fit_sphere_algebraic(landmarks).map_err(|e| CaseError::new(Stage::SphereFit, e))?;
    let (sphere, iterations) = match fit_sphere_geometric(landmarks, &init) {
        Ok(fit) => (fit.sphere, fit.iterations),
        Err(FitError::NonConvergence { best, iterations }) => {
            warnings.push(format!("sphere fit did not converge in {iterations} iterations; using best iterate"));
            (best, iterations)
        }
        Err(e) => return Err(CaseError::new(Stage::SphereFit, e)),
    };
    let mut rows = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let (row, w) = pair_metrics(&sphere, pair, params);
        warnings.extend(w);
        rows.push(row);
    }
    if rows.iter().all(|r| r.gap_3d.is_none() && r.gap_area.is_none()) {
        let msg = rows.iter().filter_map(|r| r.error.clone()).collect::<Vec<_>>().join("; ");
        return Err(CaseError::new(Stage::Metrics, msg));
    }
    Ok(ReductionReport::from_rows(sphere, iterations, rows, *params, warnings))
}
