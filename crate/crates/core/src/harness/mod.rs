//! Convergence experiments, property suites and report files.

mod config;
mod convergence;
mod report;
mod suites;

use thiserror::Error;

use crate::graph::GraphError;
use crate::io::IoError;
use crate::kernel::KernelError;
use crate::reference::ReferenceError;
use crate::solver::SolverError;

pub use config::{Case, DtRule, EpsMode, ExperimentConfig};
pub use convergence::{build_reference, perturb_potential, row_eps, run_convergence, snapshot_times};
pub use report::{
    emit_report, parse_report, write_report, ConvergenceReport, ConvergenceRow, ReportFormat, Summary, SummaryPoint,
    CSV_HEADER,
};
pub use suites::{
    adjacency_oracle, cfl_guard, comparison, fw_bw_agreement, fw_bw_graph, monotonicity, random_problem, regularity_suite,
    run_property_suite, FwBwStudy, Suite, SuiteReport, FW_BW_EPS, FW_BW_N,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Reference(#[from] ReferenceError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Io(#[from] IoError),
}
