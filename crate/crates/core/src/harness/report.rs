use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::recio::{Mismatch, MismatchKind};

pub const REPORT_FORMAT: &str = "mfmig-report";
pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    #[serde(rename = "PASS")]
    Pass,
    #[serde(rename = "FAIL")]
    Fail,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JobStatus {
    Succeeded,
    /// Nonzero exit, death by signal, or a missing external output.
    Failed,
    /// Not run because a dependency did not succeed.
    Skipped,
    Timeout,
    LaunchFailure,
}

impl JobStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            JobStatus::Succeeded => "succeeded",
            JobStatus::Failed => "failed",
            JobStatus::Skipped => "skipped",
            JobStatus::Timeout => "timeout",
            JobStatus::LaunchFailure => "launch-failure",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobResult {
    pub id: String,
    pub status: JobStatus,
    pub exit_code: Option<i32>,
    pub detail: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComparisonVerdict {
    Pass,
    Fail,
    /// A producing job did not succeed.
    Skipped,
    /// A file could not be read or framed.
    Error,
}

impl ComparisonVerdict {
    pub fn as_str(self) -> &'static str {
        match self {
            ComparisonVerdict::Pass => "PASS",
            ComparisonVerdict::Fail => "FAIL",
            ComparisonVerdict::Skipped => "SKIPPED",
            ComparisonVerdict::Error => "ERROR",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonResult {
    pub name: String,
    pub legacy: String,
    pub modern: String,
    pub verdict: ComparisonVerdict,
    pub records_legacy: usize,
    pub records_modern: usize,
    pub equal: usize,
    /// Differing fields plus unmatched records.
    pub mismatch_count: usize,
    /// `a` is the legacy side, `b` the modern side.
    pub mismatches: Vec<Mismatch>,
    pub detail: Option<String>,
}

/// Everything that depends only on the plan and the job outputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportBody {
    pub format: String,
    pub version: u32,
    pub plan: String,
    pub fingerprint: String,
    pub verdict: Verdict,
    pub jobs: Vec<JobResult>,
    pub comparisons: Vec<ComparisonResult>,
    /// Job starts that found a running job with an overlapping output.
    pub concurrency_violations: usize,
}

impl ReportBody {
    /// PASS iff every job succeeded and every comparison passed.
    pub fn compute_verdict(&self) -> Verdict {
        let jobs_ok = self.jobs.iter().all(|j| j.status == JobStatus::Succeeded);
        let cmp_ok = self.comparisons.iter().all(|c| c.verdict == ComparisonVerdict::Pass);
        if jobs_ok && cmp_ok && self.concurrency_violations == 0 {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn job(&self, id: &str) -> Option<&JobResult> {
        self.jobs.iter().find(|j| j.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobTiming {
    pub job: String,
    /// Start sequence number within this run.
    pub seq: usize,
    /// Milliseconds since the run started.
    pub start_ms: f64,
    pub end_ms: f64,
}

/// Check made as each job starts: which jobs were running and which
/// declared outputs they shared with it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssertionEntry {
    pub seq: usize,
    pub job: String,
    pub running: Vec<String>,
    pub overlapping_outputs: Vec<String>,
}

/// Run-specific facts: identity, wall-clock times, scheduling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportHeader {
    pub run_id: String,
    pub started_at: String,
    pub finished_at: String,
    pub elapsed_ms: f64,
    pub parallelism: usize,
    pub rerun_of: Option<String>,
    pub executed: Vec<String>,
    pub timings: Vec<JobTiming>,
    pub assertions: Vec<AssertionEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub header: ReportHeader,
    pub body: ReportBody,
}

impl RunReport {
    pub fn verdict(&self) -> Verdict {
        self.body.verdict
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<RunReport, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// The deterministic part alone.
    pub fn body_json(&self) -> String {
        serde_json::to_string_pretty(&self.body).expect("report serializes") + "\n"
    }

    pub fn header_text(&self) -> String {
        let h = &self.header;
        let mut out = format!(
            "run {} started {} finished {} elapsed_ms {:.3} parallel {}\n",
            h.run_id, h.started_at, h.finished_at, h.elapsed_ms, h.parallelism
        );
        if let Some(prev) = &h.rerun_of {
            out.push_str(&format!("rerun of {prev}; executed: {}\n", h.executed.join(" ")));
        }
        for t in &h.timings {
            out.push_str(&format!("  #{} {} {:.3}..{:.3} ms\n", t.seq, t.job, t.start_ms, t.end_ms));
        }
        out
    }

    pub fn body_text(&self) -> String {
        let b = &self.body;
        let mut out = format!("{REPORT_FORMAT} v{}\nplan {} {}\nverdict {}\n", b.version, b.plan, b.fingerprint, b.verdict);
        for j in &b.jobs {
            out.push_str(&format!("job {} {}", j.id, j.status.as_str()));
            if let Some(code) = j.exit_code {
                out.push_str(&format!(" exit={code}"));
            }
            if let Some(d) = &j.detail {
                out.push_str(&format!(" ({d})"));
            }
            out.push('\n');
        }
        for c in &b.comparisons {
            out.push_str(&format!(
                "comparison {} {} legacy={} modern={} records={}/{} equal={} mismatches={}",
                c.name,
                c.verdict.as_str(),
                c.legacy,
                c.modern,
                c.records_legacy,
                c.records_modern,
                c.equal,
                c.mismatch_count
            ));
            if let Some(d) = &c.detail {
                out.push_str(&format!(" ({d})"));
            }
            out.push('\n');
            for m in &c.mismatches {
                out.push_str(&mismatch_text(m));
            }
        }
        out.push_str(&format!("concurrency_violations {}\n", b.concurrency_violations));
        out
    }

    pub fn to_text(&self) -> String {
        format!("{}{}", self.header_text(), self.body_text())
    }

    /// Writes `path` (JSON) and a text rendering next to it with a `.txt`
    /// extension; returns the text path.
    pub fn write(&self, path: &Path) -> std::io::Result<PathBuf> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, self.to_json())?;
        let text = path.with_extension("txt");
        std::fs::write(&text, self.to_text())?;
        Ok(text)
    }
}

fn opt<T: fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "-".to_string(), T::to_string)
}

fn mismatch_text(m: &Mismatch) -> String {
    let kind = match m.kind {
        MismatchKind::FieldMismatch => "differs",
        MismatchKind::OnlyInA => "only-in-legacy",
        MismatchKind::OnlyInB => "only-in-modern",
    };
    let mut out = format!("  {kind} record={}/{} key={}\n", opt(&m.ordinal_a), opt(&m.ordinal_b), opt(&m.key));
    for f in &m.fields {
        out.push_str(&format!(
            "    {} @{}+{} legacy={} [{}] modern={} [{}]\n",
            f.field,
            f.offset,
            f.length,
            f.a_hex,
            opt(&f.a_value),
            f.b_hex,
            opt(&f.b_value)
        ));
    }
    out
}
