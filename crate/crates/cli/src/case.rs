//! Case file schema (JSON, `schema_version` 1), loading and validation.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use fracmetrics_core::geom::{Mesh, Point3, Polyline3, RigidTransform};
use fracmetrics_core::metrics::{FractureLinePair, MetricParams, StepOffMode};
use fracmetrics_core::sphere_fit::LandmarkSet;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::mesh_io::{load_mesh, MeshError};

pub const CASE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FragmentEntry {
    pub id: String,
    /// Relative paths resolve against the case file's directory.
    pub mesh_path: String,
    /// 4×4 rigid transform as rows, original → reduced.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_transform: Option<[[f64; 4]; 4]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandmarkEntry {
    pub label: String,
    pub provenance: String,
    pub points: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairEntry {
    pub pair_id: String,
    pub fragment_a_id: String,
    pub line_a: Vec<[f64; 3]>,
    pub fragment_b_id: String,
    pub line_b: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arc_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_edge: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_off_mode: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseFile {
    pub schema_version: u32,
    pub case_id: String,
    pub side: Side,
    pub units: String,
    pub fragments: Vec<FragmentEntry>,
    pub landmark_sets: Vec<LandmarkEntry>,
    #[serde(default)]
    pub fracture_line_pairs: Vec<PairEntry>,
    #[serde(default, skip_serializing_if = "is_default")]
    pub params: ParamOverrides,
}

fn is_default(p: &ParamOverrides) -> bool {
    *p == ParamOverrides::default()
}

#[derive(Debug, Error)]
pub enum CaseError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: schema error at {field}: {message}", path.display())]
    Schema { path: PathBuf, field: String, message: String },
    #[error("{}: units must be \"mm\", found {found:?}", path.display())]
    UnitsMismatch { path: PathBuf, found: String },
    #[error("{}: {field} references unknown fragment {id:?}", path.display())]
    DanglingReference { path: PathBuf, field: String, id: String },
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

#[derive(Debug, Clone)]
pub struct LoadedFragment {
    pub id: String,
    pub mesh: Mesh,
    pub seed_transform: Option<RigidTransform>,
}

/// A validated case with meshes loaded.
#[derive(Debug, Clone)]
pub struct FractureCase {
    pub file: CaseFile,
    pub path: PathBuf,
    pub fragments: Vec<LoadedFragment>,
    /// All landmark sets pooled.
    pub landmarks: LandmarkSet,
    pub pairs: Vec<FractureLinePair>,
    /// Defaults overridden by the case file's `params`.
    pub params: MetricParams,
    /// SHA-256 over the case file and its meshes.
    pub digest: String,
}

fn point(p: &[f64; 3]) -> Point3 {
    Point3::xyz(p[0], p[1], p[2])
}

pub fn parse_step_off_mode(s: &str) -> Option<StepOffMode> {
    s.parse().ok()
}

/// Reads and validates a case file and every mesh it references.
pub fn load_case(path: &Path) -> Result<FractureCase, CaseError> {
    let bytes = fs::read(path).map_err(|source| CaseError::Io { path: path.to_path_buf(), source })?;
    let schema = |field: &str, message: String| CaseError::Schema {
        path: path.to_path_buf(),
        field: field.to_string(),
        message,
    };
    let mut de = serde_json::Deserializer::from_slice(&bytes);
    let file: CaseFile = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let field = e.path().to_string();
        let field = if field == "." { "<root>".to_string() } else { field };
        schema(&field, e.into_inner().to_string())
    })?;
    de.end().map_err(|e| schema("<root>", e.to_string()))?;

    if file.schema_version != CASE_SCHEMA_VERSION {
        return Err(schema(
            "schema_version",
            format!("unsupported version {} (expected {CASE_SCHEMA_VERSION})", file.schema_version),
        ));
    }
    if file.units != "mm" {
        return Err(CaseError::UnitsMismatch { path: path.to_path_buf(), found: file.units.clone() });
    }
    if file.case_id.trim().is_empty() {
        return Err(schema("case_id", "must not be empty".into()));
    }
    if file.fragments.is_empty() {
        return Err(schema("fragments", "at least one fragment is required".into()));
    }
    let mut ids = BTreeSet::new();
    for (i, f) in file.fragments.iter().enumerate() {
        if f.id.is_empty() || !ids.insert(f.id.as_str()) {
            return Err(schema(&format!("fragments[{i}].id"), format!("empty or duplicate id {:?}", f.id)));
        }
    }

    if file.landmark_sets.is_empty() {
        return Err(schema("landmark_sets", "at least one landmark set is required".into()));
    }
    let mut points = Vec::new();
    for (i, set) in file.landmark_sets.iter().enumerate() {
        if let Some(k) = set.points.iter().position(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(schema(&format!("landmark_sets[{i}].points[{k}]"), "non-finite coordinate".into()));
        }
        points.extend(set.points.iter().map(point));
    }
    let label = file.landmark_sets.iter().map(|s| s.label.as_str()).collect::<Vec<_>>().join("+");
    let landmarks = LandmarkSet::new(points, label).map_err(|e| schema("landmark_sets", e.to_string()))?;

    let mut pair_ids = BTreeSet::new();
    let mut pairs = Vec::with_capacity(file.fracture_line_pairs.len());
    for (i, p) in file.fracture_line_pairs.iter().enumerate() {
        let at = |f: &str| format!("fracture_line_pairs[{i}].{f}");
        if !pair_ids.insert(p.pair_id.as_str()) {
            return Err(schema(&at("pair_id"), format!("duplicate pair id {:?}", p.pair_id)));
        }
        for (field, id) in [("fragment_a_id", &p.fragment_a_id), ("fragment_b_id", &p.fragment_b_id)] {
            if !ids.contains(id.as_str()) {
                return Err(CaseError::DanglingReference {
                    path: path.to_path_buf(),
                    field: at(field),
                    id: id.clone(),
                });
            }
        }
        let line = |field: &str, pts: &[[f64; 3]]| {
            Polyline3::new(pts.iter().map(point).collect()).map_err(|e| schema(&at(field), e.to_string()))
        };
        let pair = FractureLinePair::new(
            p.pair_id.clone(),
            p.fragment_a_id.clone(),
            line("line_a", &p.line_a)?,
            p.fragment_b_id.clone(),
            line("line_b", &p.line_b)?,
        )
        .map_err(|e| schema(&at("fragment_b_id"), e.to_string()))?;
        pairs.push(pair);
    }

    let defaults = MetricParams::default();
    let mode = match &file.params.step_off_mode {
        None => defaults.step_off_mode,
        Some(s) => parse_step_off_mode(s)
            .ok_or_else(|| schema("params.step_off_mode", format!("unknown mode {s:?} (absolute or differential)")))?,
    };
    let params = MetricParams {
        arc_step: file.params.arc_step.unwrap_or(defaults.arc_step),
        target_edge: file.params.target_edge.unwrap_or(defaults.target_edge),
        step_off_mode: mode,
    };
    if let Err(e) = params.validate() {
        return Err(schema("params", e.to_string()));
    }

    let dir = path.parent().unwrap_or(Path::new("."));
    let mut hasher = Sha256::new();
    hash_chunk(&mut hasher, &bytes);
    let mut fragments = Vec::with_capacity(file.fragments.len());
    for (i, f) in file.fragments.iter().enumerate() {
        let seed_transform = f
            .seed_transform
            .map(|m| RigidTransform::from_row_major(&m))
            .transpose()
            .map_err(|e| schema(&format!("fragments[{i}].seed_transform"), e.to_string()))?;
        let mesh_path = dir.join(&f.mesh_path);
        let mesh_bytes = fs::read(&mesh_path).map_err(|source| CaseError::Io { path: mesh_path.clone(), source })?;
        hash_chunk(&mut hasher, &mesh_bytes);
        let mesh = load_mesh(&mesh_path)?;
        fragments.push(LoadedFragment { id: f.id.clone(), mesh, seed_transform });
    }
    let digest = format!("sha256:{}", hex(&hasher.finalize()));

    Ok(FractureCase { file, path: path.to_path_buf(), fragments, landmarks, pairs, params, digest })
}

/// Length-prefixed so that moving bytes between files changes the digest.
pub(crate) fn hash_chunk(hasher: &mut Sha256, bytes: &[u8]) {
    hasher.update((bytes.len() as u64).to_le_bytes());
    hasher.update(bytes);
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Serializes a case file as pretty JSON with a trailing newline.
pub fn case_json(file: &CaseFile) -> String {
    let mut s = serde_json::to_string_pretty(file).expect("case file serializes");
    s.push('\n');
    s
}

pub fn write_case(path: &Path, file: &CaseFile) -> Result<(), CaseError> {
    fs::write(path, case_json(file)).map_err(|source| CaseError::Io { path: path.to_path_buf(), source })
}
