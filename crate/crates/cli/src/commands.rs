//! Subcommand implementations, independent of argument parsing.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use fracmetrics_core::chamfer::{chamfer_distance, mesh_vertex_set, Sampling};
use fracmetrics_core::metrics::{case_metrics, MetricParams, Stage, StepOffMode};
use fracmetrics_core::registration::{recover_fragment_transforms, FragmentMatch, RegistrationParams};
use fracmetrics_core::sphere_fit::{fit_sphere, FitError};
use fracmetrics_core::synth::{make_band_case, preset, SyntheticCase};
use sha2::{Digest, Sha256};

use crate::case::{
    hash_chunk, hex, load_case, write_case, CaseError, CaseFile, FractureCase, FragmentEntry, LandmarkEntry, PairEntry,
    ParamOverrides, Side, CASE_SCHEMA_VERSION,
};
use crate::mesh_io::{load_mesh, write_ply, MeshError};
use crate::report::{
    csv_field, write_file, write_report, GroundTruthFile, GroundTruthTransform, RegistrationRecord, ReportFile,
    Sidecar, SphereFitRecord,
};

/// Exit status classes: validation problems are the caller's to fix,
/// computation problems arise while processing valid input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Failure {
    Validation(String),
    Computation(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Computation(_) => 2,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Validation(m) | Failure::Computation(m) => f.write_str(m),
        }
    }
}

impl From<CaseError> for Failure {
    fn from(e: CaseError) -> Self {
        Failure::Validation(e.to_string())
    }
}

impl From<MeshError> for Failure {
    fn from(e: MeshError) -> Self {
        Failure::Validation(e.to_string())
    }
}

/// Parses `vertices` or `area:COUNT[:SEED]`.
pub fn parse_sampling(s: &str) -> Result<Sampling, String> {
    if s == "vertices" {
        return Ok(Sampling::Vertices);
    }
    let mut parts = s.split(':');
    if parts.next() != Some("area") {
        return Err(format!("unknown sampling {s:?} (vertices or area:COUNT[:SEED])"));
    }
    let count = parts
        .next()
        .and_then(|c| c.parse::<usize>().ok())
        .filter(|&c| c > 0)
        .ok_or_else(|| format!("area sampling needs a positive count in {s:?}"))?;
    let seed = match parts.next() {
        None => 0,
        Some(t) => t.parse().map_err(|_| format!("bad seed in {s:?}"))?,
    };
    if parts.next().is_some() {
        return Err(format!("too many fields in {s:?}"));
    }
    Ok(Sampling::AreaWeighted { count, seed })
}

pub fn chamfer(a: &Path, b: &Path, sampling: Sampling) -> Result<f64, Failure> {
    let (ma, mb) = (load_mesh(a)?, load_mesh(b)?);
    let set =
        |m, p: &Path| mesh_vertex_set(m, sampling).map_err(|e| Failure::Validation(format!("{}: {e}", p.display())));
    Ok(chamfer_distance(&set(&ma, a)?, &set(&mb, b)?))
}

pub fn fit_sphere_report(case: &FractureCase) -> Result<SphereFitRecord, Failure> {
    let n = case.landmarks.points().len();
    match fit_sphere(&case.landmarks) {
        Ok(fit) => Ok(SphereFitRecord::new(&fit.sphere, fit.iterations, n)),
        Err(FitError::NonConvergence { best, iterations }) => {
            eprintln!("warning: sphere fit did not converge in {iterations} iterations; using best iterate");
            Ok(SphereFitRecord::new(&best, iterations, n))
        }
        Err(e) => Err(Failure::Computation(format!("{}: sphere fit: {e}", case.path.display()))),
    }
}

/// Command-line parameter overrides; they take precedence over the case file.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ParamFlags {
    pub arc_step: Option<f64>,
    pub target_edge: Option<f64>,
    pub step_off_mode: Option<StepOffMode>,
}

impl ParamFlags {
    pub fn resolve(&self, base: &MetricParams) -> MetricParams {
        MetricParams {
            arc_step: self.arc_step.unwrap_or(base.arc_step),
            target_edge: self.target_edge.unwrap_or(base.target_edge),
            step_off_mode: self.step_off_mode.unwrap_or(base.step_off_mode),
        }
    }
}

fn side_str(side: Side) -> &'static str {
    match side {
        Side::Left => "left",
        Side::Right => "right",
    }
}

pub fn metrics_report(case: &FractureCase, flags: &ParamFlags) -> Result<ReportFile, Failure> {
    let params = flags.resolve(&case.params);
    let report = case_metrics(&case.landmarks, &case.pairs, &params).map_err(|e| {
        let msg = format!("{}: {e}", case.path.display());
        match e.stage {
            Stage::Input => Failure::Validation(msg),
            Stage::SphereFit | Stage::Metrics => Failure::Computation(msg),
        }
    })?;
    let fragments: Vec<(String, String)> =
        case.pairs.iter().map(|p| (p.fragment_a.clone(), p.fragment_b.clone())).collect();
    Ok(ReportFile::new(&case.file.case_id, side_str(case.file.side), &case.digest, &params).with_metrics(
        &report,
        case.landmarks.points().len(),
        &fragments,
    ))
}

/// Registers each fragment of `original` onto the same-id fragment of `reduced`.
/// The boolean is true when every fragment registered.
pub fn register_report(original: &FractureCase, reduced: &FractureCase) -> Result<(ReportFile, bool), Failure> {
    let mut matches = Vec::with_capacity(original.fragments.len());
    for f in &original.fragments {
        let Some(r) = reduced.fragments.iter().find(|r| r.id == f.id) else {
            return Err(Failure::Validation(format!(
                "{}: no fragment {:?} matching {}",
                reduced.path.display(),
                f.id,
                original.path.display()
            )));
        };
        matches.push(FragmentMatch {
            fragment_id: f.id.clone(),
            original: f.mesh.clone(),
            reduced: r.mesh.clone(),
            seed_transform: r.seed_transform.or(f.seed_transform),
        });
    }
    let results = recover_fragment_transforms(&matches, &RegistrationParams::default());
    let mut hasher = Sha256::new();
    hash_chunk(&mut hasher, original.digest.as_bytes());
    hash_chunk(&mut hasher, reduced.digest.as_bytes());
    let digest = format!("sha256:{}", hex(&hasher.finalize()));
    let mut report = ReportFile::new(&original.file.case_id, side_str(original.file.side), &digest, &original.params);
    for r in &results {
        if let Err(e) = &r.result {
            report.warnings.push(format!("fragment {} not registered: {e}", r.fragment_id));
        } else if let Ok(res) = &r.result {
            if !res.converged {
                report.warnings.push(format!(
                    "fragment {} registration stopped after {} iterations without converging",
                    r.fragment_id, res.iterations
                ));
            }
        }
    }
    let ok = results.iter().all(|r| r.result.is_ok());
    report.registration = Some(RegistrationRecord::new(&results));
    Ok((report, ok))
}

fn p3(p: fracmetrics_core::Point3) -> [f64; 3] {
    [p.x, p.y, p.z]
}

/// Writes a synthetic case as `case.json`, one PLY per fragment and `ground_truth.json`.
pub fn write_synthetic_case(case: &SyntheticCase, case_id: &str, dir: &Path) -> Result<PathBuf, Failure> {
    let io = |p: &Path, e: std::io::Error| Failure::Validation(format!("{}: {e}", p.display()));
    fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let mut fragments = Vec::with_capacity(case.fragments.len());
    for f in &case.fragments {
        let name = format!("{}.ply", f.id);
        write_ply(&dir.join(&name), &f.mesh)?;
        fragments.push(FragmentEntry { id: f.id.clone(), mesh_path: name, seed_transform: None });
    }
    let file = CaseFile {
        schema_version: CASE_SCHEMA_VERSION,
        case_id: case_id.to_string(),
        side: Side::Left,
        units: "mm".into(),
        fragments,
        landmark_sets: vec![LandmarkEntry {
            label: case.landmarks.label().to_string(),
            provenance: format!("synthetic, seed {}", case.seed),
            points: case.landmarks.points().iter().map(|&p| p3(p)).collect(),
        }],
        fracture_line_pairs: case
            .pairs
            .iter()
            .map(|p| PairEntry {
                pair_id: p.pair_id.clone(),
                fragment_a_id: p.fragment_a.clone(),
                line_a: p.line_a.points().iter().map(|&q| p3(q)).collect(),
                fragment_b_id: p.fragment_b.clone(),
                line_b: p.line_b.points().iter().map(|&q| p3(q)).collect(),
            })
            .collect(),
        params: ParamOverrides::default(),
    };
    let case_path = dir.join("case.json");
    write_case(&case_path, &file)?;
    let gt = &case.ground_truth;
    let truth = GroundTruthFile {
        case_id: case_id.to_string(),
        seed: case.seed,
        sphere_center_mm: p3(case.sphere.center),
        sphere_radius_mm: case.sphere.radius,
        gap_3d_mm: gt.gap_3d,
        step_off_3d_mm: gt.step_off_3d,
        total_gap_area_mm2: gt.total_gap_area,
        transforms: case
            .fragments
            .iter()
            .zip(&gt.transforms)
            .map(|(f, t)| GroundTruthTransform::new(&f.id, t))
            .collect(),
    };
    let mut json = serde_json::to_string_pretty(&truth).expect("ground truth serializes");
    json.push('\n');
    let truth_path = dir.join("ground_truth.json");
    write_file(&truth_path, json.as_bytes()).map_err(|e| Failure::Validation(e.to_string()))?;
    Ok(case_path)
}

pub fn synth(preset_name: &str, outdir: &Path, seed: u64) -> Result<PathBuf, Failure> {
    let params = preset(preset_name, seed).map_err(|e| Failure::Validation(e.to_string()))?;
    let case = make_band_case(&params).map_err(|e| Failure::Computation(e.to_string()))?;
    write_synthetic_case(&case, preset_name, outdir)
}

/// Outcome of one batch entry, in case-list order.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchEntry {
    pub index: usize,
    pub case: String,
    pub outcome: Result<ReportFile, Failure>,
}

/// Reads a case list: one path per line, relative to the list's directory;
/// blank lines and `#` comments are skipped.
pub fn read_case_list(path: &Path) -> Result<Vec<(String, PathBuf)>, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?;
    let dir = path.parent().unwrap_or(Path::new("."));
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| (l.to_string(), dir.join(l)))
        .collect())
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

/// Directory name for entry `index` (0-based) of a batch.
pub fn batch_dir_name(index: usize, case_id: &str) -> String {
    let safe: String = case_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect();
    format!("{:03}-{safe}", index + 1)
}

fn run_one(index: usize, path: &Path, outdir: &Path) -> Result<ReportFile, Failure> {
    let started = unix_now();
    let clock = Instant::now();
    let case = load_case(path)?;
    let report = metrics_report(&case, &ParamFlags::default())?;
    let timing =
        Sidecar { started_unix_s: started, finished_unix_s: unix_now(), elapsed_s: clock.elapsed().as_secs_f64() };
    write_report(&report, &outdir.join(batch_dir_name(index, &case.file.case_id)), Some(&timing))
        .map_err(|e| Failure::Validation(e.to_string()))?;
    Ok(report)
}

/// Processes every case in the list with up to `jobs` worker threads.
pub fn batch(case_list: &Path, outdir: &Path, jobs: usize) -> Result<Vec<BatchEntry>, Failure> {
    let cases = read_case_list(case_list)?;
    fs::create_dir_all(outdir).map_err(|e| Failure::Validation(format!("{}: {e}", outdir.display())))?;
    let slots: Vec<Mutex<Option<Result<ReportFile, Failure>>>> = cases.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..jobs.clamp(1, cases.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= cases.len() {
                    break;
                }
                let outcome = run_one(i, &cases[i].1, outdir);
                *slots[i].lock().unwrap_or_else(|p| p.into_inner()) = Some(outcome);
            });
        }
    });
    let entries: Vec<BatchEntry> = cases
        .into_iter()
        .zip(slots)
        .enumerate()
        .map(|(index, ((case, _), slot))| BatchEntry {
            index,
            case,
            outcome: slot
                .into_inner()
                .unwrap_or_else(|p| p.into_inner())
                .unwrap_or_else(|| Err(Failure::Computation("worker did not run".into()))),
        })
        .collect();
    write_file(&outdir.join("summary.csv"), batch_summary(&entries).as_bytes())
        .map_err(|e| Failure::Validation(e.to_string()))?;
    Ok(entries)
}

pub const SUMMARY_HEADER: &str = "index,case,status,case_id,gap_3d_mm,step_off_3d_mm,total_gap_area_mm2,message";

pub fn batch_summary(entries: &[BatchEntry]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    let num = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
    for e in entries {
        let row = match &e.outcome {
            Ok(r) => {
                let agg = r.aggregates.as_ref();
                format!(
                    "ok,{},{},{},{},",
                    csv_field(&r.case_id),
                    num(agg.and_then(|a| a.gap_3d_mm)),
                    num(agg.and_then(|a| a.step_off_3d_mm)),
                    num(agg.map(|a| a.total_gap_area_mm2)),
                )
            }
            Err(f) => format!("failed,,,,,{}", csv_field(&f.to_string())),
        };
        out.push_str(&format!("{},{},{row}\n", e.index + 1, csv_field(&e.case)));
    }
    out
}
