//! Report files: JSON report, per-pair CSV, timing sidecar.

use std::fs;
use std::path::{Path, PathBuf};

use fracmetrics_core::geom::RigidTransform;
use fracmetrics_core::metrics::{self, MetricParams, ReductionReport};
use fracmetrics_core::registration::FragmentRegistration;
use fracmetrics_core::sphere::Sphere;
use serde::Serialize;
use thiserror::Error;

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const TOOL_NAME: &str = "fracmetrics";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const REPORT_FILE: &str = "report.json";
pub const CSV_FILE: &str = "pairs.csv";
pub const SIDECAR_FILE: &str = "run.json";
pub const CSV_HEADER: &str = "case_id,pair_id,gap_3d_mm,step_off_3d_mm,gap_area_mm2";

#[derive(Debug, Error)]
#[error("{}: {source}", path.display())]
pub struct IoError {
    pub path: PathBuf,
    pub source: std::io::Error,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tool {
    pub name: &'static str,
    pub version: &'static str,
}

impl Default for Tool {
    fn default() -> Self {
        Self { name: TOOL_NAME, version: TOOL_VERSION }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedParams {
    pub arc_step_mm: f64,
    pub target_edge_mm: f64,
    pub gap_definition: &'static str,
    pub step_off_mode: &'static str,
    pub unwrap_chart: &'static str,
    pub rbf_kernel: &'static str,
    pub aggregation: &'static str,
}

impl From<&MetricParams> for ResolvedParams {
    fn from(p: &MetricParams) -> Self {
        Self {
            arc_step_mm: p.arc_step,
            target_edge_mm: p.target_edge,
            gap_definition: metrics::GAP_DEFINITION,
            step_off_mode: p.step_off_mode.as_str(),
            unwrap_chart: metrics::UNWRAP_CHART,
            rbf_kernel: metrics::RBF_KERNEL,
            aggregation: metrics::AGGREGATION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SphereFitRecord {
    pub center_mm: [f64; 3],
    pub radius_mm: f64,
    pub rms_mm: f64,
    pub iterations: usize,
    pub landmark_count: usize,
}

impl SphereFitRecord {
    pub fn new(s: &Sphere, iterations: usize, landmark_count: usize) -> Self {
        Self {
            center_mm: [s.center.x, s.center.y, s.center.z],
            radius_mm: s.radius,
            rms_mm: s.rms_residual,
            iterations,
            landmark_count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairRecord {
    pub pair_id: String,
    pub fragment_a_id: String,
    pub fragment_b_id: String,
    pub gap_3d_mm: Option<f64>,
    pub step_off_3d_mm: Option<f64>,
    pub gap_area_mm2: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregates {
    pub gap_3d_mm: Option<f64>,
    pub step_off_3d_mm: Option<f64>,
    pub total_gap_area_mm2: f64,
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FragmentTransformRecord {
    pub fragment_id: String,
    pub matrix: Option<[[f64; 4]; 4]>,
    pub rotation_deg: Option<f64>,
    pub rms_mm: Option<f64>,
    pub inlier_fraction: Option<f64>,
    pub iterations: Option<usize>,
    pub converged: Option<bool>,
    pub error: Option<String>,
}

impl From<&FragmentRegistration> for FragmentTransformRecord {
    fn from(r: &FragmentRegistration) -> Self {
        match &r.result {
            Ok(res) => Self {
                fragment_id: r.fragment_id.clone(),
                matrix: Some(res.transform.to_row_major()),
                rotation_deg: Some(res.transform.rotation_angle().to_degrees()),
                rms_mm: Some(res.rms),
                inlier_fraction: Some(res.inlier_fraction),
                iterations: Some(res.iterations),
                converged: Some(res.converged),
                error: None,
            },
            Err(e) => Self {
                fragment_id: r.fragment_id.clone(),
                matrix: None,
                rotation_deg: None,
                rms_mm: None,
                inlier_fraction: None,
                iterations: None,
                converged: None,
                error: Some(e.clone()),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegistrationRecord {
    /// Direction of the matrices, e.g. "original_to_reduced".
    pub convention: &'static str,
    pub layout: &'static str,
    pub fragments: Vec<FragmentTransformRecord>,
}

impl RegistrationRecord {
    pub fn new(results: &[FragmentRegistration]) -> Self {
        Self {
            convention: "original_to_reduced",
            layout: "row-major 4x4 homogeneous, applied to column vectors",
            fragments: results.iter().map(FragmentTransformRecord::from).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportFile {
    pub schema_version: u32,
    pub tool: Tool,
    pub case_id: String,
    pub side: String,
    pub input_digest: String,
    pub params: ResolvedParams,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sphere_fit: Option<SphereFitRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pairs: Option<Vec<PairRecord>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aggregates: Option<Aggregates>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub registration: Option<RegistrationRecord>,
    pub warnings: Vec<String>,
}

impl ReportFile {
    pub fn new(case_id: &str, side: &str, input_digest: &str, params: &MetricParams) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            tool: Tool::default(),
            case_id: case_id.to_string(),
            side: side.to_string(),
            input_digest: input_digest.to_string(),
            params: params.into(),
            sphere_fit: None,
            pairs: None,
            aggregates: None,
            registration: None,
            warnings: Vec::new(),
        }
    }

    /// Fills sphere, pairs, aggregates and warnings from a metrics run.
    pub fn with_metrics(mut self, r: &ReductionReport, landmark_count: usize, fragments: &[(String, String)]) -> Self {
        self.sphere_fit = Some(SphereFitRecord::new(&r.sphere, r.sphere_iterations, landmark_count));
        self.pairs = Some(
            r.per_pair
                .iter()
                .zip(fragments)
                .map(|(row, (a, b))| PairRecord {
                    pair_id: row.pair_id.clone(),
                    fragment_a_id: a.clone(),
                    fragment_b_id: b.clone(),
                    gap_3d_mm: row.gap_3d,
                    step_off_3d_mm: row.step_off_3d,
                    gap_area_mm2: row.gap_area,
                    error: row.error.clone(),
                })
                .collect(),
        );
        self.aggregates = Some(Aggregates {
            gap_3d_mm: r.gap_3d,
            step_off_3d_mm: r.step_off_3d,
            total_gap_area_mm2: r.total_gap_area,
            complete: r.is_complete(),
        });
        self.warnings.extend(r.warnings.iter().cloned());
        self
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Header plus one row per pair; missing values are empty cells.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        let cell = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
        for p in self.pairs.iter().flatten() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                csv_field(&self.case_id),
                csv_field(&p.pair_id),
                cell(p.gap_3d_mm),
                cell(p.step_off_3d_mm),
                cell(p.gap_area_mm2)
            ));
        }
        out
    }
}

/// Quotes a CSV field when it contains a separator, quote or newline.
pub fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Sidecar {
    pub started_unix_s: f64,
    pub finished_unix_s: f64,
    pub elapsed_s: f64,
}

pub(crate) fn write_file(path: &Path, contents: &[u8]) -> Result<(), IoError> {
    fs::write(path, contents).map_err(|source| IoError { path: path.to_path_buf(), source })
}

/// Writes `report.json` and `pairs.csv` (and `run.json` when timing is given) into `dir`.
pub fn write_report(report: &ReportFile, dir: &Path, timing: Option<&Sidecar>) -> Result<(), IoError> {
    fs::create_dir_all(dir).map_err(|source| IoError { path: dir.to_path_buf(), source })?;
    write_file(&dir.join(REPORT_FILE), report.to_json().as_bytes())?;
    write_file(&dir.join(CSV_FILE), report.to_csv().as_bytes())?;
    if let Some(t) = timing {
        let mut s = serde_json::to_string_pretty(t).expect("sidecar serializes");
        s.push('\n');
        write_file(&dir.join(SIDECAR_FILE), s.as_bytes())?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundTruthFile {
    pub case_id: String,
    pub seed: u64,
    pub sphere_center_mm: [f64; 3],
    pub sphere_radius_mm: f64,
    pub gap_3d_mm: Option<f64>,
    pub step_off_3d_mm: Option<f64>,
    pub total_gap_area_mm2: Option<f64>,
    pub transforms: Vec<GroundTruthTransform>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundTruthTransform {
    pub fragment_id: String,
    pub matrix: [[f64; 4]; 4],
}

impl GroundTruthTransform {
    pub fn new(fragment_id: &str, t: &RigidTransform) -> Self {
        Self { fragment_id: fragment_id.to_string(), matrix: t.to_row_major() }
    }
}
