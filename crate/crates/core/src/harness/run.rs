use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use chrono::{SecondsFormat, Utc};

use super::plan::{JobSpec, Plan, ValidatedPlan};
use super::report::*;
use super::{PlanError, PlanErrors};
use crate::recio::compare_files;

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Maximum number of jobs running at once (at least 1).
    pub parallelism: usize,
    /// Values for `${NAME}` in job commands; the environment is the fallback.
    pub vars: BTreeMap<String, String>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { parallelism: 1, vars: BTreeMap::new() }
    }
}

fn expand(arg: &str, vars: &BTreeMap<String, String>) -> Result<String, String> {
    let mut out = String::new();
    let mut rest = arg;
    while let Some(at) = rest.find("${") {
        out.push_str(&rest[..at]);
        let end = rest[at..].find('}').ok_or_else(|| format!("unterminated variable in `{arg}`"))? + at;
        let name = &rest[at + 2..end];
        let value = vars
            .get(name)
            .cloned()
            .or_else(|| std::env::var(name).ok())
            .ok_or_else(|| format!("undefined variable `{name}`"))?;
        out.push_str(&value);
        rest = &rest[end + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

struct Outcome {
    status: JobStatus,
    exit_code: Option<i32>,
    detail: Option<String>,
}

impl Outcome {
    fn new(status: JobStatus, exit_code: Option<i32>, detail: Option<String>) -> Outcome {
        Outcome { status, exit_code, detail }
    }
}

fn run_job(plan: &Plan, job: &JobSpec, vars: &BTreeMap<String, String>) -> Outcome {
    if job.external {
        let missing: Vec<&str> = job.outputs.iter().filter(|o| !plan.resolve(o).exists()).map(String::as_str).collect();
        return if missing.is_empty() {
            Outcome::new(JobStatus::Succeeded, None, None)
        } else {
            Outcome::new(JobStatus::Failed, None, Some(format!("missing external output {}", missing.join(", "))))
        };
    }
    let launch_failure = |msg: String| Outcome::new(JobStatus::LaunchFailure, None, Some(msg));
    let args = match job.command.iter().map(|a| expand(a, vars)).collect::<Result<Vec<_>, _>>() {
        Ok(a) => a,
        Err(e) => return launch_failure(e),
    };
    let program = if args[0].contains('/') { plan.resolve(&args[0]) } else { PathBuf::from(&args[0]) };
    for o in &job.outputs {
        if let Some(dir) = plan.resolve(o).parent() {
            if let Err(e) = std::fs::create_dir_all(dir) {
                return launch_failure(format!("cannot create {}: {e}", dir.display()));
            }
        }
    }
    let logs = plan.log_dir();
    let open_log = |ext: &str| -> std::io::Result<File> {
        std::fs::create_dir_all(&logs)?;
        File::create(logs.join(format!("{}.{ext}", job.id)))
    };
    let (out, err) = match (open_log("out"), open_log("err")) {
        (Ok(o), Ok(e)) => (o, e),
        (Err(e), _) | (_, Err(e)) => return launch_failure(format!("cannot create job logs in {}: {e}", logs.display())),
    };
    let spawned = Command::new(&program)
        .args(&args[1..])
        .current_dir(&plan.base_dir)
        .stdin(Stdio::null())
        .stdout(out)
        .stderr(err)
        .spawn();
    let mut child = match spawned {
        Ok(c) => c,
        Err(e) => return launch_failure(format!("cannot launch `{}`: {}", args[0], e.kind())),
    };
    let limit = Duration::from_secs(plan.timeout_secs(job));
    let began = Instant::now();
    let status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break status,
            Ok(None) if began.elapsed() >= limit => {
                let _ = child.kill();
                let _ = child.wait();
                return Outcome::new(JobStatus::Timeout, None, Some(format!("killed after {} s", limit.as_secs())));
            }
            Ok(None) => thread::sleep(Duration::from_millis(2)),
            Err(e) => return Outcome::new(JobStatus::Failed, None, Some(format!("wait failed: {e}"))),
        }
    };
    match status.code() {
        Some(0) => Outcome::new(JobStatus::Succeeded, Some(0), None),
        Some(code) => Outcome::new(JobStatus::Failed, Some(code), None),
        None => {
            use std::os::unix::process::ExitStatusExt;
            let signal = status.signal().unwrap_or(0);
            Outcome::new(JobStatus::Failed, None, Some(format!("terminated by signal {signal}")))
        }
    }
}

fn ms(since: Instant) -> f64 {
    (since.elapsed().as_secs_f64() * 1e6).round() / 1e3
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

struct Execution {
    results: Vec<Option<JobResult>>,
    timings: Vec<JobTiming>,
    assertions: Vec<AssertionEntry>,
}

/// Runs the selected jobs; unselected jobs count as already succeeded.
fn execute(vp: &ValidatedPlan, selected: &[bool], opts: &RunOptions, clock: Instant) -> Execution {
    let jobs = vp.jobs();
    let n = jobs.len();
    let plan = &vp.plan;
    let outputs: Vec<BTreeSet<PathBuf>> = jobs.iter().map(|j| j.outputs.iter().map(|o| plan.resolve(o)).collect()).collect();
    let mut status: Vec<Option<JobStatus>> = (0..n).map(|i| (!selected[i]).then_some(JobStatus::Succeeded)).collect();
    let mut results: Vec<Option<JobResult>> = vec![None; n];
    let mut running: BTreeMap<usize, usize> = BTreeMap::new(); // job -> timing slot
    let mut timings = Vec::new();
    let mut assertions = Vec::new();
    let limit = opts.parallelism.max(1);
    let (tx, rx) = mpsc::channel::<(usize, Outcome)>();

    thread::scope(|scope| loop {
        // Skip anything downstream of a failure, to a fixpoint (order is topological).
        for &i in &vp.order {
            if status[i].is_some() || running.contains_key(&i) {
                continue;
            }
            if let Some(&bad) = vp.deps[i].iter().find(|&&d| status[d].is_some_and(|s| s != JobStatus::Succeeded)) {
                status[i] = Some(JobStatus::Skipped);
                results[i] = Some(JobResult {
                    id: jobs[i].id.clone(),
                    status: JobStatus::Skipped,
                    exit_code: None,
                    detail: Some(format!("dependency `{}` did not succeed", jobs[bad].id)),
                });
            }
        }
        for &i in &vp.order {
            if running.len() >= limit {
                break;
            }
            let ready = status[i].is_none()
                && !running.contains_key(&i)
                && vp.deps[i].iter().all(|&d| status[d] == Some(JobStatus::Succeeded));
            if !ready {
                continue;
            }
            let seq = timings.len();
            let mut overlapping = BTreeSet::new();
            for &r in running.keys() {
                overlapping.extend(outputs[i].intersection(&outputs[r]).map(|p| p.display().to_string()));
            }
            assertions.push(AssertionEntry {
                seq,
                job: jobs[i].id.clone(),
                running: running.keys().map(|&r| jobs[r].id.clone()).collect(),
                overlapping_outputs: overlapping.into_iter().collect(),
            });
            timings.push(JobTiming { job: jobs[i].id.clone(), seq, start_ms: ms(clock), end_ms: 0.0 });
            running.insert(i, seq);
            let tx = tx.clone();
            let job = &jobs[i];
            scope.spawn(move || {
                let outcome = run_job(plan, job, &opts.vars);
                let _ = tx.send((i, outcome));
            });
        }
        if running.is_empty() {
            break;
        }
        let (i, outcome) = rx.recv().expect("a running job always reports");
        let slot = running.remove(&i).expect("reported job was running");
        timings[slot].end_ms = ms(clock);
        log::info!("job {} {}", jobs[i].id, outcome.status.as_str());
        status[i] = Some(outcome.status);
        results[i] = Some(JobResult {
            id: jobs[i].id.clone(),
            status: outcome.status,
            exit_code: outcome.exit_code,
            detail: outcome.detail,
        });
    });
    Execution { results, timings, assertions }
}

fn compare(vp: &ValidatedPlan, index: usize, jobs: &[JobResult]) -> ComparisonResult {
    let c = &vp.plan.file.comparisons[index];
    let resolved = &vp.comparisons[index];
    let mut result = ComparisonResult {
        name: c.name.clone(),
        legacy: c.legacy.clone(),
        modern: c.modern.clone(),
        verdict: ComparisonVerdict::Skipped,
        records_legacy: 0,
        records_modern: 0,
        equal: 0,
        mismatch_count: 0,
        mismatches: Vec::new(),
        detail: None,
    };
    if let Some(&p) = resolved.producers.iter().find(|&&p| jobs[p].status != JobStatus::Succeeded) {
        result.detail = Some(format!("producer `{}` did not succeed", jobs[p].id));
        return result;
    }
    let (legacy, modern) = (vp.plan.resolve(&c.legacy), vp.plan.resolve(&c.modern));
    match compare_files(&legacy, &modern, &resolved.spec, &resolved.options) {
        Ok(r) => {
            result.verdict = if r.is_equal() { ComparisonVerdict::Pass } else { ComparisonVerdict::Fail };
            result.records_legacy = r.records_a;
            result.records_modern = r.records_b;
            result.equal = r.equal;
            result.mismatch_count = r.field_mismatch_count();
            result.mismatches = r.mismatches;
        }
        Err(e) => {
            result.verdict = ComparisonVerdict::Error;
            // Plan-relative names keep the body independent of where it ran.
            let shown = e.to_string().replace(&*legacy.to_string_lossy(), &c.legacy).replace(&*modern.to_string_lossy(), &c.modern);
            result.detail = Some(shown);
        }
    }
    result
}

fn assemble(
    vp: &ValidatedPlan,
    jobs: Vec<JobResult>,
    comparisons: Vec<ComparisonResult>,
    violations: usize,
) -> ReportBody {
    let mut body = ReportBody {
        format: REPORT_FORMAT.into(),
        version: REPORT_VERSION,
        plan: vp.plan.file.name.clone(),
        fingerprint: vp.fingerprint.clone(),
        verdict: Verdict::Fail,
        jobs,
        comparisons,
        concurrency_violations: violations,
    };
    body.verdict = body.compute_verdict();
    body
}

fn header(exec: Execution, opts: &RunOptions, started_at: String, clock: Instant, rerun_of: Option<String>) -> ReportHeader {
    let executed = exec.timings.iter().map(|t| t.job.clone()).collect();
    ReportHeader {
        run_id: uuid::Uuid::new_v4().to_string(),
        started_at,
        finished_at: now(),
        elapsed_ms: ms(clock),
        parallelism: opts.parallelism.max(1),
        rerun_of,
        executed,
        timings: exec.timings,
        assertions: exec.assertions,
    }
}

fn violations(exec: &Execution) -> usize {
    exec.assertions.iter().filter(|a| !a.overlapping_outputs.is_empty()).count()
}

/// Executes every job in dependency order, then every comparison.
pub fn run_plan(vp: &ValidatedPlan, opts: &RunOptions) -> RunReport {
    let started_at = now();
    let clock = Instant::now();
    let exec = execute(vp, &vec![true; vp.jobs().len()], opts, clock);
    let violations = violations(&exec);
    let jobs: Vec<JobResult> = exec.results.iter().map(|r| r.clone().expect("every job has a result")).collect();
    let comparisons = (0..vp.comparisons.len()).map(|i| compare(vp, i, &jobs)).collect();
    let body = assemble(vp, jobs, comparisons, violations);
    let header = header(exec, opts, started_at, clock, None);
    RunReport { header, body }
}

/// Re-executes the jobs that did not succeed last time, then the
/// comparisons fed by them, carrying everything else over.
pub fn rerun_failed(vp: &ValidatedPlan, previous: &RunReport, opts: &RunOptions) -> Result<RunReport, PlanErrors> {
    let prev = &previous.body;
    if prev.fingerprint != vp.fingerprint {
        return Err(PlanErrors(vec![PlanError::PlanChanged { previous: prev.fingerprint.clone(), current: vp.fingerprint.clone() }]));
    }
    let names_match = prev.jobs.len() == vp.jobs().len() && prev.jobs.iter().zip(vp.jobs()).all(|(r, j)| r.id == j.id);
    if !names_match || prev.comparisons.len() != vp.comparisons.len() {
        return Err(PlanErrors(vec![PlanError::BadReport("report does not list this plan's jobs".into())]));
    }
    let selected: Vec<bool> = prev.jobs.iter().map(|j| j.status != JobStatus::Succeeded).collect();
    let started_at = now();
    let clock = Instant::now();
    let exec = execute(vp, &selected, opts, clock);
    let violations = prev.concurrency_violations + violations(&exec);
    let jobs: Vec<JobResult> = exec
        .results
        .iter()
        .zip(&prev.jobs)
        .map(|(new, old)| new.clone().unwrap_or_else(|| old.clone()))
        .collect();
    let comparisons = (0..vp.comparisons.len())
        .map(|i| {
            if vp.comparisons[i].producers.iter().any(|&p| selected[p]) {
                compare(vp, i, &jobs)
            } else {
                prev.comparisons[i].clone()
            }
        })
        .collect();
    let body = assemble(vp, jobs, comparisons, violations);
    let header = header(exec, opts, started_at, clock, Some(previous.header.run_id.clone()));
    Ok(RunReport { header, body })
}

/// Convenience for callers holding a report file.
pub fn load_report(path: &Path) -> Result<RunReport, PlanError> {
    let text = std::fs::read_to_string(path).map_err(|source| PlanError::Io { path: path.to_path_buf(), source })?;
    RunReport::from_json(&text).map_err(|e| PlanError::BadReport(format!("{}: {e}", path.display())))
}
