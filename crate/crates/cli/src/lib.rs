//! File formats, reports and command implementations for the `fracmetrics` tool.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod case;
pub mod commands;
pub mod mesh_io;
pub mod report;

pub use case::{load_case, CaseError, CaseFile, FractureCase};
pub use commands::Failure;
pub use mesh_io::{load_mesh, write_ply, MeshError};
pub use report::{write_report, ReportFile};
