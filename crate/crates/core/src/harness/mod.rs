//! Parallel-run orchestration: a plan of jobs (external processes) with
//! dependencies, a static gate against unordered jobs sharing an output,
//! and record-level comparisons of legacy and modern outputs rolled up into
//! one equivalence report.
//!
//! The output gate covers declared outputs only; files a job writes without
//! declaring them are not policed.

use std::fmt;
use std::io;
use std::path::PathBuf;

use thiserror::Error;

mod plan;
mod report;
mod run;

pub use plan::{validate_plan, ComparisonSpec, JobSpec, Plan, PlanFile, ResolvedComparison, ValidatedPlan, DEFAULT_TIMEOUT_SECS};
pub use report::{
    AssertionEntry, ComparisonResult, ComparisonVerdict, JobResult, JobStatus, JobTiming, ReportBody, ReportHeader, RunReport,
    Verdict, REPORT_FORMAT, REPORT_VERSION,
};
pub use run::{load_report, rerun_failed, run_plan, RunOptions};

/// Version of the plan file format.
pub const PLAN_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("plan does not parse: {0}")]
    Parse(String),
    #[error("unsupported plan version {found} (expected {PLAN_VERSION})")]
    Version { found: u32 },
    #[error("duplicate job id `{0}`")]
    DuplicateJob(String),
    #[error("job `{job}`: {reason}")]
    BadJob { job: String, reason: String },
    #[error("job `{job}` depends on unknown job `{missing}`")]
    DanglingDependency { job: String, missing: String },
    #[error("dependency cycle: {}", path.join(" -> "))]
    CycleDetected { path: Vec<String> },
    #[error("jobs `{a}` and `{b}` can run at the same time and both write {path}")]
    OutputConflict { a: String, b: String, path: String },
    #[error("comparison `{comparison}`: {reason}")]
    BadComparison { comparison: String, reason: String },
    #[error("plan fingerprint {current} differs from the report's {previous}; run the whole plan again")]
    PlanChanged { previous: String, current: String },
    #[error("unusable report: {0}")]
    BadReport(String),
}

/// Every problem found in one validation pass.
#[derive(Debug, Error)]
pub struct PlanErrors(pub Vec<PlanError>);

impl fmt::Display for PlanErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("\n")?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl From<PlanError> for PlanErrors {
    fn from(e: PlanError) -> Self {
        PlanErrors(vec![e])
    }
}
