//! Deterministic synthetic fracture cases with closed-form ground truth.
//!
//! A band case is a sphere cut along two parallels: fragment A lies above
//! colatitude `colat_a`, fragment B below `colat_b`, and the zone between
//! them is the gap. Its three metrics have closed forms:
//! gap `R·Δθ`, step-off `max |dev|`, area `(span/360)·2πR²(cos θa − cos θb)`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::geom::{Mesh, Point3, Polyline3, RigidTransform};
use crate::metrics::FractureLinePair;
use crate::sphere::Sphere;
use crate::sphere_fit::LandmarkSet;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("parameter out of domain: {0}")]
    Domain(String),
    #[error("expected {expected} transforms, got {got}")]
    CountMismatch { expected: usize, got: usize },
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
}

/// Area of the spherical zone between two colatitudes over `arc_span` degrees.
pub fn analytic_zone_area(radius: f64, colat_a: f64, colat_b: f64, arc_span: f64) -> Result<f64, SynthError> {
    if !(radius > 0.0) {
        return Err(SynthError::Domain(format!("radius {radius} must be positive")));
    }
    if !(0.0..=180.0).contains(&colat_a) || !(0.0..=180.0).contains(&colat_b) || colat_a > colat_b {
        return Err(SynthError::Domain(format!("colatitudes {colat_a}/{colat_b} must satisfy 0 <= a <= b <= 180")));
    }
    if !(arc_span > 0.0 && arc_span <= 360.0) {
        return Err(SynthError::Domain(format!("arc span {arc_span} must lie in (0, 360]")));
    }
    let (ca, cb) = (libm::cos(colat_a.to_radians()), libm::cos(colat_b.to_radians()));
    Ok(arc_span / 360.0 * 2.0 * PI * radius * radius * (ca - cb))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandParams {
    pub radius: f64,
    /// Degrees; fracture line of fragment A.
    pub colat_a: f64,
    /// Degrees; fracture line of fragment B.
    pub colat_b: f64,
    /// Degrees of longitude covered by the lines.
    pub arc_span: f64,
    pub n_line_points: usize,
    /// Radial offset of fragment A (and its line) from the sphere, mm.
    pub deviation_a: f64,
    pub deviation_b: f64,
    pub seed: u64,
    /// Colatitude extent of each fragment beyond its fracture line, degrees.
    pub fragment_extent: f64,
    pub thickness: f64,
    /// Approximate vertex spacing of the fragment meshes, mm.
    pub mesh_spacing: f64,
    pub landmark_count: usize,
    /// Gaussian noise on landmarks, mm.
    pub landmark_noise: f64,
    /// Amplitude (degrees of colatitude) of smooth random line perturbations; 0 for exact parallels.
    pub irregularity: f64,
}

impl BandParams {
    pub fn new(radius: f64, colat_a: f64, colat_b: f64, arc_span: f64) -> Self {
        Self {
            radius,
            colat_a,
            colat_b,
            arc_span,
            n_line_points: (libm::round(arc_span) as usize).max(2) + 1,
            deviation_a: 0.0,
            deviation_b: 0.0,
            seed: 0,
            fragment_extent: 20.0,
            thickness: 3.0,
            mesh_spacing: 0.5,
            landmark_count: 100,
            landmark_noise: 0.0,
            irregularity: 0.0,
        }
    }

    pub fn with_deviations(mut self, a: f64, b: f64) -> Self {
        self.deviation_a = a;
        self.deviation_b = b;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn validate(&self) -> Result<(), SynthError> {
        let fail = |m: String| Err(SynthError::Domain(m));
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return fail(format!("radius {} must be positive", self.radius));
        }
        if !(0.0 < self.colat_a && self.colat_a < self.colat_b && self.colat_b < 90.0) {
            return fail(format!("colatitudes must satisfy 0 < a < b < 90, got {}/{}", self.colat_a, self.colat_b));
        }
        if !(self.arc_span > 0.0 && self.arc_span <= 360.0) {
            return fail(format!("arc span {} must lie in (0, 360]", self.arc_span));
        }
        if self.n_line_points < 2 {
            return fail(format!("need at least 2 line points, got {}", self.n_line_points));
        }
        if !(self.thickness > 0.0 && self.fragment_extent > 0.0 && self.mesh_spacing > 0.0) {
            return fail("fragment thickness, extent and mesh spacing must be positive".into());
        }
        if self.landmark_count < 4 {
            return fail(format!("need at least 4 landmarks, got {}", self.landmark_count));
        }
        if self.deviation_a.abs() >= self.radius || self.deviation_b.abs() >= self.radius {
            return fail("deviations must be smaller than the radius".into());
        }
        Ok(())
    }

    fn full_ring(&self) -> bool {
        self.arc_span >= 360.0
    }

    /// Longitudes of the line samples, degrees. A full ring leaves out the
    /// closing point so the lines stay open.
    fn longitudes(&self) -> Vec<f64> {
        let n = self.n_line_points;
        if self.full_ring() {
            (0..n).map(|i| 360.0 * i as f64 / n as f64).collect()
        } else {
            (0..n).map(|i| self.arc_span * i as f64 / (n - 1) as f64).collect()
        }
    }
}

/// Closed-form metrics; `None` where no closed form applies.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub gap_3d: Option<f64>,
    pub step_off_3d: Option<f64>,
    pub total_gap_area: Option<f64>,
    /// Original → current pose, one per fragment.
    pub transforms: Vec<RigidTransform>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticFragment {
    pub id: String,
    pub mesh: Mesh,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCase {
    pub fragments: Vec<SyntheticFragment>,
    pub landmarks: LandmarkSet,
    pub pairs: Vec<FractureLinePair>,
    pub ground_truth: GroundTruth,
    /// The generating sphere.
    pub sphere: Sphere,
    pub seed: u64,
}

fn on_sphere(center: Point3, radius: f64, colat_deg: f64, lon_deg: f64) -> Point3 {
    let (t, p) = (colat_deg.to_radians(), lon_deg.to_radians());
    center
        + Point3::xyz(radius * libm::sin(t) * libm::cos(p), radius * libm::sin(t) * libm::sin(p), radius * libm::cos(t))
}

/// Smooth bone-thickness field over the patch parameters `(s, t) ∈ [0,1]²`,
/// between 0.4 and 1.6 times the nominal thickness. Integer frequencies in
/// `t` keep full rings continuous.
fn thickness_field(rng: &mut ChaCha8Rng, nominal: f64) -> impl Fn(f64, f64) -> f64 {
    let terms: Vec<(f64, f64, f64, f64)> = [(1.0, 3.0), (2.0, 6.0), (1.0, 9.0)]
        .iter()
        .map(|&(ks, kt)| (ks, kt, rng.random_range(0.0..2.0 * PI), rng.random_range(0.1..0.2)))
        .collect();
    move |s: f64, t: f64| {
        let wobble: f64 =
            terms.iter().map(|&(ks, kt, phase, a)| a * libm::sin(2.0 * PI * (ks * s + kt * t) + phase)).sum();
        nominal * (1.0 + wobble)
    }
}

/// Closed patch between two colatitudes and longitudes: a spherical outer
/// (articular) surface over an inner surface of varying depth.
fn shell_patch(
    center: Point3,
    outer: f64,
    thickness: &dyn Fn(f64, f64) -> f64,
    colat: (f64, f64),
    lon: (f64, f64),
    ring: bool,
    spacing: f64,
) -> Mesh {
    let span = lon.1 - lon.0;
    let widest = libm::sin(colat.0.to_radians()).max(libm::sin(colat.1.to_radians()));
    let nt = (libm::ceil(outer * (colat.1 - colat.0).to_radians() / spacing) as usize).max(4);
    let np = (libm::ceil(outer * widest * span.to_radians() / spacing) as usize).max(8);
    // ring patches wrap in longitude and have no side walls there
    let cols = if ring { np } else { np + 1 };
    let mut vertices = Vec::with_capacity(2 * (nt + 1) * cols);
    for inner in [false, true] {
        for i in 0..=nt {
            let t = colat.0 + (colat.1 - colat.0) * i as f64 / nt as f64;
            for j in 0..cols {
                let p = lon.0 + span * j as f64 / np as f64;
                let r = if inner { outer - thickness(i as f64 / nt as f64, j as f64 / np as f64) } else { outer };
                vertices.push(on_sphere(center, r, t, p));
            }
        }
    }
    let idx = |layer: usize, i: usize, j: usize| layer * (nt + 1) * cols + i * cols + (j % cols);
    let mut faces = Vec::new();
    let mut quad = |a: usize, b: usize, c: usize, d: usize| {
        faces.push([a, b, c]);
        faces.push([a, c, d]);
    };
    let jmax = if ring { cols } else { cols - 1 };
    for i in 0..nt {
        for j in 0..jmax {
            quad(idx(0, i, j), idx(0, i + 1, j), idx(0, i + 1, j + 1), idx(0, i, j + 1));
            quad(idx(1, i, j), idx(1, i, j + 1), idx(1, i + 1, j + 1), idx(1, i + 1, j));
        }
    }
    for j in 0..jmax {
        quad(idx(0, 0, j), idx(0, 0, j + 1), idx(1, 0, j + 1), idx(1, 0, j));
        quad(idx(0, nt, j), idx(1, nt, j), idx(1, nt, j + 1), idx(0, nt, j + 1));
    }
    if !ring {
        for i in 0..nt {
            quad(idx(0, i, 0), idx(1, i, 0), idx(1, i + 1, 0), idx(0, i + 1, 0));
            let e = cols - 1;
            quad(idx(0, i, e), idx(0, i + 1, e), idx(1, i + 1, e), idx(1, i, e));
        }
    }
    Mesh { vertices, faces }
}

/// Smooth random colatitude perturbation (a few low-frequency sinusoids).
fn perturbation(rng: &mut ChaCha8Rng, amplitude: f64) -> impl Fn(f64) -> f64 {
    let terms: Vec<(f64, f64, f64)> = (1..=3)
        .map(|k| (k as f64, rng.random_range(0.0..2.0 * PI), rng.random_range(-1.0..1.0) * amplitude / k as f64))
        .collect();
    move |t: f64| terms.iter().map(|&(k, phase, a)| a * libm::sin(k * t * 2.0 * PI + phase)).sum()
}

pub fn make_band_case(params: &BandParams) -> Result<SyntheticCase, SynthError> {
    params.validate()?;
    let p = params;
    let center = Point3::ORIGIN;
    let sphere = Sphere::new(center, p.radius, 0.0).map_err(|e| SynthError::Domain(format!("{e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let lons = p.longitudes();

    let (pert_a, pert_b): (Vec<f64>, Vec<f64>) = if p.irregularity > 0.0 {
        let fa = perturbation(&mut rng, p.irregularity);
        let fb = perturbation(&mut rng, p.irregularity);
        let span = if p.full_ring() { 360.0 } else { p.arc_span };
        lons.iter().map(|&l| (fa(l / span), fb(l / span))).unzip()
    } else {
        (alloc::vec![0.0; lons.len()], alloc::vec![0.0; lons.len()])
    };
    let line = |colat: f64, dev: f64, pert: &[f64]| {
        Polyline3::new(lons.iter().zip(pert).map(|(&l, &d)| on_sphere(center, p.radius + dev, colat + d, l)).collect())
    };
    let line_a = line(p.colat_a, p.deviation_a, &pert_a).map_err(|e| SynthError::Domain(format!("{e}")))?;
    let line_b = line(p.colat_b, p.deviation_b, &pert_b).map_err(|e| SynthError::Domain(format!("{e}")))?;
    let pair =
        FractureLinePair::new("gap-ab", "A", line_a, "B", line_b).map_err(|e| SynthError::Domain(format!("{e}")))?;

    let lon_range = (0.0, if p.full_ring() { 360.0 } else { p.arc_span });
    let extent_a = p.fragment_extent.min(0.75 * p.colat_a);
    let depth_a = thickness_field(&mut rng, p.thickness);
    let depth_b = thickness_field(&mut rng, p.thickness);
    let frag_a = shell_patch(
        center,
        p.radius + p.deviation_a,
        &depth_a,
        (p.colat_a - extent_a, p.colat_a),
        lon_range,
        p.full_ring(),
        p.mesh_spacing,
    );
    let frag_b = shell_patch(
        center,
        p.radius + p.deviation_b,
        &depth_b,
        (p.colat_b, p.colat_b + p.fragment_extent),
        lon_range,
        p.full_ring(),
        p.mesh_spacing,
    );

    // landmarks: uniform over the articular region of the generating sphere
    let noise = Normal::new(0.0, p.landmark_noise.max(0.0)).map_err(|e| SynthError::Domain(format!("{e}")))?;
    let cos_max = libm::cos((p.colat_b + p.fragment_extent).min(179.0).to_radians());
    let landmarks: Vec<Point3> = (0..p.landmark_count)
        .map(|_| {
            let z = rng.random_range(cos_max..1.0);
            let colat = libm::acos(z).to_degrees();
            let lon = rng.random_range(lon_range.0..lon_range.1);
            let q = on_sphere(center, p.radius, colat, lon);
            if p.landmark_noise > 0.0 {
                q + Point3::xyz(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng))
            } else {
                q
            }
        })
        .collect();
    let landmarks =
        LandmarkSet::new(landmarks, "synthetic_articular_surface").map_err(|e| SynthError::Domain(format!("{e}")))?;

    let exact = p.irregularity == 0.0;
    let span = if p.full_ring() { 360.0 } else { p.arc_span };
    let area = if exact && p.deviation_a == p.deviation_b {
        Some(analytic_zone_area(p.radius + p.deviation_a, p.colat_a, p.colat_b, span)?)
    } else {
        None
    };
    let ground_truth = GroundTruth {
        gap_3d: exact.then(|| p.radius * (p.colat_b - p.colat_a).to_radians()),
        step_off_3d: Some(p.deviation_a.abs().max(p.deviation_b.abs())),
        total_gap_area: area,
        transforms: alloc::vec![RigidTransform::identity(); 2],
    };
    Ok(SyntheticCase {
        fragments: alloc::vec![
            SyntheticFragment { id: "A".into(), mesh: frag_a },
            SyntheticFragment { id: "B".into(), mesh: frag_b },
        ],
        landmarks,
        pairs: alloc::vec![pair],
        ground_truth,
        sphere,
        seed: p.seed,
    })
}

/// Moves each fragment (with its fracture lines) by its own transform.
///
/// Landmarks describe the articular reference surface, so they follow only a
/// whole-case motion (all transforms equal); the metric ground truth is kept
/// in that case and dropped otherwise.
pub fn make_displaced_case(base: &SyntheticCase, transforms: &[RigidTransform]) -> Result<SyntheticCase, SynthError> {
    if transforms.len() != base.fragments.len() {
        return Err(SynthError::CountMismatch { expected: base.fragments.len(), got: transforms.len() });
    }
    let whole = transforms.windows(2).all(|w| (w[0].to_homogeneous() - w[1].to_homogeneous()).amax() <= 1e-12);
    let transform_of = |id: &str| {
        base.fragments.iter().position(|f| f.id == id).map(|k| transforms[k]).unwrap_or_else(RigidTransform::identity)
    };
    let fragments = base
        .fragments
        .iter()
        .zip(transforms)
        .map(|(f, t)| SyntheticFragment { id: f.id.clone(), mesh: f.mesh.transformed(t) })
        .collect();
    let pairs = base
        .pairs
        .iter()
        .map(|pair| FractureLinePair {
            line_a: pair.line_a.transformed(&transform_of(&pair.fragment_a)),
            line_b: pair.line_b.transformed(&transform_of(&pair.fragment_b)),
            ..pair.clone()
        })
        .collect();
    let (landmarks, sphere) = if whole {
        (base.landmarks.transformed(&transforms[0]), base.sphere.transformed(&transforms[0]))
    } else {
        (base.landmarks.clone(), base.sphere)
    };
    let ground_truth = GroundTruth {
        gap_3d: base.ground_truth.gap_3d.filter(|_| whole),
        step_off_3d: base.ground_truth.step_off_3d.filter(|_| whole),
        total_gap_area: base.ground_truth.total_gap_area.filter(|_| whole),
        transforms: transforms.iter().zip(&base.ground_truth.transforms).map(|(t, prior)| t.compose(prior)).collect(),
    };
    Ok(SyntheticCase { fragments, landmarks, pairs, ground_truth, sphere, seed: base.seed })
}

/// Random rigid motion: rotation up to `max_angle_deg` about a uniformly
/// random axis, translation uniform in a ball of radius `max_translation`.
pub fn random_rigid(rng: &mut impl Rng, max_angle_deg: f64, max_translation: f64) -> RigidTransform {
    let axis = loop {
        let v = Point3::xyz(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            break v / n;
        }
    };
    let angle = rng.random_range(0.0..=max_angle_deg).to_radians();
    let t = loop {
        let v = Point3::xyz(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if v.norm() <= 1.0 {
            break v * max_translation;
        }
    };
    RigidTransform::from_axis_angle(axis, angle).unwrap_or_else(RigidTransform::identity).with_translation(t)
}

/// Adds isotropic Gaussian noise to every vertex.
pub fn perturb_vertices(mesh: &Mesh, sigma: f64, seed: u64) -> Mesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma.max(0.0)).unwrap_or_else(|_| Normal::new(0.0, 0.0).unwrap());
    Mesh {
        vertices: mesh
            .vertices
            .iter()
            .map(|&p| p + Point3::xyz(normal.sample(&mut rng), normal.sample(&mut rng), normal.sample(&mut rng)))
            .collect(),
        faces: mesh.faces.clone(),
    }
}

/// Named band configurations.
pub const PRESETS: &[&str] =
    &["band-40-60", "band-40-60-arc120", "band-30-50-step", "band-45-65-offset", "irregular-35-55", "acetabulum-25"];

pub fn preset(name: &str, seed: u64) -> Result<BandParams, SynthError> {
    let p = match name {
        "band-40-60" => BandParams::new(10.0, 40.0, 60.0, 360.0),
        "band-40-60-arc120" => BandParams::new(10.0, 40.0, 60.0, 120.0),
        "band-30-50-step" => BandParams::new(25.0, 30.0, 50.0, 90.0).with_deviations(0.0, 0.5),
        "band-45-65-offset" => BandParams::new(20.0, 45.0, 65.0, 60.0).with_deviations(-0.3, 0.4),
        "irregular-35-55" => BandParams { irregularity: 2.0, ..BandParams::new(15.0, 35.0, 55.0, 100.0) },
        // adult acetabular scale
        "acetabulum-25" => {
            BandParams { fragment_extent: 30.0, thickness: 4.0, ..BandParams::new(25.0, 40.0, 60.0, 140.0) }
        }
        other => return Err(SynthError::UnknownPreset(other.into())),
    };
    Ok(p.with_seed(seed))
}
