use std::collections::{BTreeMap, HashMap};
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{PlanError, PlanErrors, PLAN_VERSION};
use crate::codec::Encoding;
use crate::copybook::load_schema;
use crate::recio::{CompareOptions, IgnoreMask, KeySpec, MatchBy, RecordFileSpec, RecordFormat};

/// Default per-job limit in seconds.
pub const DEFAULT_TIMEOUT_SECS: u64 = 600;

/// One job. Either a command run as an external process or an `external`
/// job whose outputs are produced elsewhere and must already exist.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobSpec {
    pub id: String,
    #[serde(default)]
    pub command: Vec<String>,
    #[serde(default)]
    pub external: bool,
    #[serde(default)]
    pub inputs: Vec<String>,
    #[serde(default)]
    pub outputs: Vec<String>,
    #[serde(default)]
    pub depends_on: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timeout_secs: Option<u64>,
}

impl JobSpec {
    pub fn new(id: &str, command: &[&str]) -> JobSpec {
        JobSpec {
            id: id.into(),
            command: command.iter().map(|s| s.to_string()).collect(),
            external: false,
            inputs: Vec::new(),
            outputs: Vec::new(),
            depends_on: Vec::new(),
            timeout_secs: None,
        }
    }
}

fn default_match() -> String {
    "order".into()
}

/// A legacy/modern output pair compared record by record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonSpec {
    pub name: String,
    pub legacy: String,
    pub modern: String,
    /// Copybook path.
    pub schema: String,
    /// Discriminator rule path (TOML) for multi-layout schemas.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discriminator: Option<String>,
    pub format: String,
    pub lrecl: usize,
    pub encoding: String,
    #[serde(default = "default_match")]
    pub match_by: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key: Option<String>,
    #[serde(default)]
    pub ignore: Vec<String>,
}

/// The plan file as written.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanFile {
    pub version: u32,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timeout_secs: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_dir: Option<String>,
    #[serde(default, rename = "job")]
    pub jobs: Vec<JobSpec>,
    #[serde(default, rename = "comparison")]
    pub comparisons: Vec<ComparisonSpec>,
}

/// A plan plus the directory its relative paths resolve against.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Plan {
    pub file: PlanFile,
    pub base_dir: PathBuf,
}

impl Plan {
    pub fn new(name: &str, base_dir: &Path) -> Plan {
        Plan {
            file: PlanFile {
                version: PLAN_VERSION,
                name: name.into(),
                timeout_secs: None,
                log_dir: None,
                jobs: Vec::new(),
                comparisons: Vec::new(),
            },
            base_dir: base_dir.to_path_buf(),
        }
    }

    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Plan, PlanError> {
        let file: PlanFile = toml::from_str(text).map_err(|e| PlanError::Parse(e.to_string()))?;
        Ok(Plan { file, base_dir: base_dir.to_path_buf() })
    }

    pub fn load(path: &Path) -> Result<Plan, PlanError> {
        let text = std::fs::read_to_string(path).map_err(|source| PlanError::Io { path: path.to_path_buf(), source })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Plan::from_toml(&text, if base.as_os_str().is_empty() { Path::new(".") } else { &base })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.file).expect("plan serializes")
    }

    /// Resolves a plan path against the base directory, lexically.
    pub fn resolve(&self, path: &str) -> PathBuf {
        normalize(&self.base_dir.join(path))
    }

    pub fn timeout_secs(&self, job: &JobSpec) -> u64 {
        job.timeout_secs.or(self.file.timeout_secs).unwrap_or(DEFAULT_TIMEOUT_SECS)
    }

    pub fn log_dir(&self) -> PathBuf {
        self.resolve(self.file.log_dir.as_deref().unwrap_or("logs"))
    }
}

fn normalize(path: &Path) -> PathBuf {
    let mut out = PathBuf::new();
    for c in path.components() {
        match c {
            Component::CurDir => {}
            Component::ParentDir => {
                if !out.pop() {
                    out.push("..");
                }
            }
            other => out.push(other),
        }
    }
    out
}

/// A plan that passed every static check, with its derived structure.
#[derive(Debug, Clone)]
pub struct ValidatedPlan {
    pub plan: Plan,
    /// Job indices in a dependency-respecting order (plan order breaks ties).
    pub order: Vec<usize>,
    /// `deps[i]`: indices of the jobs job `i` depends on.
    pub deps: Vec<Vec<usize>>,
    pub comparisons: Vec<ResolvedComparison>,
    pub fingerprint: String,
}

#[derive(Debug, Clone)]
pub struct ResolvedComparison {
    pub spec: RecordFileSpec,
    pub options: CompareOptions,
    /// Jobs writing either compared file.
    pub producers: Vec<usize>,
}

impl ValidatedPlan {
    pub fn jobs(&self) -> &[JobSpec] {
        &self.plan.file.jobs
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.jobs().iter().position(|j| j.id == id)
    }
}

fn find_cycle(deps: &[Vec<usize>]) -> Option<Vec<usize>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Open,
        Done,
    }
    fn visit(i: usize, deps: &[Vec<usize>], mark: &mut [Mark], stack: &mut Vec<usize>) -> Option<Vec<usize>> {
        mark[i] = Mark::Open;
        stack.push(i);
        for &d in &deps[i] {
            match mark[d] {
                Mark::Open => {
                    let from = stack.iter().position(|&s| s == d).expect("open node is on the stack");
                    let mut cycle = stack[from..].to_vec();
                    cycle.push(d);
                    return Some(cycle);
                }
                Mark::New => {
                    if let Some(c) = visit(d, deps, mark, stack) {
                        return Some(c);
                    }
                }
                Mark::Done => {}
            }
        }
        stack.pop();
        mark[i] = Mark::Done;
        None
    }
    let mut mark = vec![Mark::New; deps.len()];
    (0..deps.len()).find_map(|i| if mark[i] == Mark::New { visit(i, deps, &mut mark, &mut Vec::new()) } else { None })
}

/// Kahn's algorithm, always taking the lowest ready index.
fn topological(deps: &[Vec<usize>]) -> Vec<usize> {
    let n = deps.len();
    let mut waiting: Vec<usize> = deps.iter().map(Vec::len).collect();
    let mut users = vec![Vec::new(); n];
    for (i, ds) in deps.iter().enumerate() {
        for &d in ds {
            users[d].push(i);
        }
    }
    let mut ready: std::collections::BTreeSet<usize> = (0..n).filter(|&i| waiting[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(i) = ready.pop_first() {
        order.push(i);
        for &u in &users[i] {
            waiting[u] -= 1;
            if waiting[u] == 0 {
                ready.insert(u);
            }
        }
    }
    order
}

/// `reach[i][j]`: job `j` is a (transitive) dependency of job `i`.
fn ancestors(deps: &[Vec<usize>], order: &[usize]) -> Vec<Vec<bool>> {
    let n = deps.len();
    let mut reach = vec![vec![false; n]; n];
    for &i in order {
        for &d in &deps[i] {
            let inherited = reach[d].clone();
            reach[i][d] = true;
            for (k, r) in inherited.into_iter().enumerate() {
                reach[i][k] |= r;
            }
        }
    }
    reach
}

fn resolve_comparison(plan: &Plan, c: &ComparisonSpec) -> Result<(RecordFileSpec, CompareOptions), String> {
    let format: RecordFormat = c.format.parse()?;
    let encoding: Encoding = c.encoding.parse()?;
    let match_by: MatchBy = c.match_by.parse()?;
    let schema_path = plan.resolve(&c.schema);
    let rule_path = c.discriminator.as_ref().map(|d| plan.resolve(d));
    let schema = load_schema(&schema_path, rule_path.as_deref()).map_err(|e| e.to_string())?;
    let mut spec = RecordFileSpec::new(format, c.lrecl, encoding).with_schema(schema);
    match (&c.key, match_by) {
        (Some(k), _) => spec = spec.with_key(k.parse::<KeySpec>()?),
        (None, MatchBy::Key) => return Err("match_by = \"key\" needs a key".into()),
        (None, MatchBy::Order) => {}
    }
    spec.validate().map_err(|e| e.to_string())?;
    let ignore = c.ignore.iter().map(|m| m.parse::<IgnoreMask>()).collect::<Result<Vec<_>, _>>()?;
    Ok((spec, CompareOptions { match_by, ignore }))
}

/// Hash of the canonical plan plus the schema files it references.
fn fingerprint(plan: &Plan) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(&plan.file).expect("plan serializes"));
    for c in &plan.file.comparisons {
        for path in std::iter::once(&c.schema).chain(&c.discriminator) {
            h.update([0u8]);
            h.update(std::fs::read(plan.resolve(path)).unwrap_or_default());
        }
    }
    hex::encode(h.finalize())
}

/// Static checks run before anything executes: version, ids, dangling
/// dependencies, cycles, outputs shared by jobs that may overlap in time,
/// and comparison references.
pub fn validate_plan(plan: &Plan) -> Result<ValidatedPlan, PlanErrors> {
    let file = &plan.file;
    if file.version != PLAN_VERSION {
        return Err(PlanErrors(vec![PlanError::Version { found: file.version }]));
    }
    let mut errors = Vec::new();
    let mut ids: HashMap<&str, usize> = HashMap::new();
    for (i, j) in file.jobs.iter().enumerate() {
        if ids.insert(&j.id, i).is_some() {
            errors.push(PlanError::DuplicateJob(j.id.clone()));
        }
        let bad = |reason: &str| PlanError::BadJob { job: j.id.clone(), reason: reason.into() };
        if j.id.is_empty() {
            errors.push(bad("empty id"));
        }
        if j.external && !j.command.is_empty() {
            errors.push(bad("an external job has no command"));
        }
        if !j.external && j.command.is_empty() {
            errors.push(bad("no command"));
        }
    }
    let mut deps = vec![Vec::new(); file.jobs.len()];
    for (i, j) in file.jobs.iter().enumerate() {
        for d in &j.depends_on {
            match ids.get(d.as_str()) {
                Some(&k) => deps[i].push(k),
                None => errors.push(PlanError::DanglingDependency { job: j.id.clone(), missing: d.clone() }),
            }
        }
    }
    if !errors.is_empty() {
        return Err(PlanErrors(errors));
    }
    if let Some(cycle) = find_cycle(&deps) {
        let path = cycle.iter().map(|&i| file.jobs[i].id.clone()).collect();
        return Err(PlanErrors(vec![PlanError::CycleDetected { path }]));
    }
    let order = topological(&deps);
    let reach = ancestors(&deps, &order);

    let mut writers: BTreeMap<PathBuf, Vec<(usize, &str)>> = BTreeMap::new();
    let mut inputs: BTreeMap<PathBuf, ()> = BTreeMap::new();
    for (i, j) in file.jobs.iter().enumerate() {
        for o in &j.outputs {
            let ws = writers.entry(plan.resolve(o)).or_default();
            if !ws.iter().any(|&(k, _)| k == i) {
                ws.push((i, o));
            }
        }
        for p in &j.inputs {
            inputs.insert(plan.resolve(p), ());
        }
    }
    for ws in writers.values() {
        for (x, &(a, path)) in ws.iter().enumerate() {
            for &(b, _) in &ws[x + 1..] {
                if !reach[a][b] && !reach[b][a] {
                    errors.push(PlanError::OutputConflict {
                        a: file.jobs[a].id.clone(),
                        b: file.jobs[b].id.clone(),
                        path: path.to_string(),
                    });
                }
            }
        }
    }

    let mut comparisons = Vec::new();
    let mut names = HashMap::new();
    for c in &file.comparisons {
        let bad = |reason: String| PlanError::BadComparison { comparison: c.name.clone(), reason };
        if names.insert(c.name.as_str(), ()).is_some() {
            errors.push(bad("duplicate name".into()));
        }
        let mut producers = Vec::new();
        for path in [&c.legacy, &c.modern] {
            let p = plan.resolve(path);
            match writers.get(&p) {
                Some(ws) => producers.extend(ws.iter().map(|&(i, _)| i)),
                None if inputs.contains_key(&p) => {}
                None => errors.push(bad(format!("{path} is neither a job output nor a declared input"))),
            }
        }
        producers.sort_unstable();
        producers.dedup();
        match resolve_comparison(plan, c) {
            Ok((spec, options)) => comparisons.push(ResolvedComparison { spec, options, producers }),
            Err(reason) => errors.push(bad(reason)),
        }
    }
    if !errors.is_empty() {
        return Err(PlanErrors(errors));
    }
    Ok(ValidatedPlan { plan: plan.clone(), order, deps, comparisons, fingerprint: fingerprint(plan) })
}
