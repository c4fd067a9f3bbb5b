//! Quantitative reduction metrics for articular fractures.
//!
//! Given landmarks on the articular surface and pairs of fracture lines, this
//! crate fits a reference sphere and measures gap, step-off and gap area on
//! it. It also provides chamfer distance, rigid registration and synthetic
//! test cases. The crate is `no_std` with `alloc`.

#![no_std]
// `!(x > 0.0)` is used deliberately so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod chamfer;
pub mod geom;
pub mod kdtree;
pub mod metrics;
pub mod rbf;
pub mod registration;
pub mod sphere;
pub mod sphere_fit;
pub mod synth;
pub mod triangulate;

pub use chamfer::{chamfer_distance, directed_mean_nn, ChamferError, PointSet, Sampling};
pub use geom::{GeomError, Mesh, Point3, Polyline3, RigidTransform};
pub use metrics::{case_metrics, FractureLinePair, MetricParams, MetricsError, ReductionReport, StepOffMode};
pub use registration::{icp_rigid, kabsch, IcpParams, RegistrationError, RegistrationResult};
pub use sphere::Sphere;
pub use sphere_fit::{fit_sphere, FitError, LandmarkSet};
