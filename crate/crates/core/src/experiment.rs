//! Method dispatch and the seeded experiment sweep.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::daf::{daf, DafConfig, DafNode, SplitRule};
use crate::data::format::{parse_kv, read_matrix, KvSection, SummaryRow};
use crate::data::synthetic::{generate, SyntheticKind, SyntheticSpec};
use crate::error::{Error, Result};
use crate::flat::{sanitize_grid, sanitize_identity, sanitize_uniform, GridConfig, GridProvider, DEFAULT_CELL_CAP};
use crate::granularity::DEFAULT_C0;
use crate::matrix::FrequencyMatrix;
use crate::mechanism::{NoiseMode, NoiseSource};
use crate::query::{evaluate_with_truth, generate_workload, true_answers, WorkloadKind, WorkloadSpec, DEFAULT_MRE_FLOOR};
use crate::sanitized::SanitizedMatrix;

/// Environment variable holding the sweep worker count.
pub const WORKERS_ENV: &str = "DPFM_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Uniform,
    Identity,
    Eug,
    Ebp,
    DafEntropy,
    DafHomogeneity,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Uniform,
        Method::Identity,
        Method::Eug,
        Method::Ebp,
        Method::DafEntropy,
        Method::DafHomogeneity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Uniform => "uniform",
            Method::Identity => "identity",
            Method::Eug => "eug",
            Method::Ebp => "ebp",
            Method::DafEntropy => "daf-entropy",
            Method::DafHomogeneity => "daf-homogeneity",
        }
    }

    pub fn is_daf(self) -> bool {
        matches!(self, Method::DafEntropy | Method::DafHomogeneity)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        Method::ALL
            .into_iter()
            .find(|m| m.name() == norm)
            .ok_or_else(|| {
                Error::InvalidParameter(format!(
                    "unknown method `{s}`; expected one of {}",
                    Method::ALL.map(Method::name).join(", ")
                ))
            })
    }
}

/// Method-specific knobs shared by every run of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodConfig {
    pub identity_cap: u128,
    pub grid_eps0_fraction: f64,
    pub c0: f64,
    pub r: Option<f64>,
    pub q: f64,
    pub p: usize,
    pub stop_multiplier: f64,
    pub noise_mode: NoiseMode,
}

impl Default for MethodConfig {
    fn default() -> Self {
        Self {
            identity_cap: DEFAULT_CELL_CAP,
            grid_eps0_fraction: 0.01,
            c0: DEFAULT_C0,
            r: None,
            q: 0.3,
            p: 8,
            stop_multiplier: 2.0,
            noise_mode: NoiseMode::Laplace,
        }
    }
}

impl MethodConfig {
    fn grid(&self, provider: GridProvider) -> GridConfig {
        GridConfig {
            provider,
            eps0_fraction: self.grid_eps0_fraction,
            c0: self.c0,
            r: self.r,
        }
    }

    fn daf(&self, eps: f64, seed: u64) -> DafConfig {
        DafConfig {
            q: self.q,
            p: self.p,
            stop_threshold_multiplier: self.stop_multiplier,
            noise_mode: self.noise_mode,
            ..DafConfig::new(eps, seed)
        }
    }
}

/// Output of one sanitizer run; `tree` is set for the DAF methods.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub sanitized: SanitizedMatrix,
    pub tree: Option<DafNode>,
}

/// Runs `method`, records wall-clock runtime in the metadata and refuses
/// to return a result whose ledger audit failed.
pub fn run_method(m: &FrequencyMatrix, method: Method, eps: f64, seed: u64, cfg: &MethodConfig) -> Result<RunOutput> {
    let noise = NoiseSource::with_mode(seed, cfg.noise_mode);
    let start = Instant::now();
    let (mut sanitized, tree) = match method {
        Method::Uniform => (sanitize_uniform(m, eps, noise)?, None),
        Method::Identity => (sanitize_identity(m, eps, noise, cfg.identity_cap)?, None),
        Method::Eug => (sanitize_grid(m, eps, &cfg.grid(GridProvider::Eug), noise)?, None),
        Method::Ebp => (sanitize_grid(m, eps, &cfg.grid(GridProvider::Ebp), noise)?, None),
        Method::DafEntropy | Method::DafHomogeneity => {
            let rule = if method == Method::DafEntropy {
                SplitRule::Entropy
            } else {
                SplitRule::Homogeneity
            };
            let (sm, tree) = daf(m, &cfg.daf(eps, seed), rule)?;
            (sm, Some(tree))
        }
    };
    sanitized.metadata.runtime_ms = Some(start.elapsed().as_secs_f64() * 1e3);
    if cfg.noise_mode == NoiseMode::Disabled {
        sanitized
            .metadata
            .warnings
            .push("noise disabled: output is NOT differentially private".into());
    }
    let l = sanitized.metadata.ledger;
    if !l.within() {
        return Err(Error::AuditFailed {
            spent: l.spent,
            total: l.total,
            dump: sanitized.ledger_dump.clone().unwrap_or_default(),
        });
    }
    Ok(RunOutput { sanitized, tree })
}

/// One dataset axis value of a plan.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    /// Regenerated for every seed with that seed.
    Synthetic { kind: SyntheticKind, d: usize, n_points: u64 },
    /// Loaded once; only the sanitizer and workload seeds vary.
    File { path: PathBuf, label: String },
}

impl DatasetSource {
    pub fn label(&self) -> String {
        match self {
            DatasetSource::Synthetic { kind, d, n_points } => {
                SyntheticSpec { kind: *kind, d: *d, n_points: *n_points, extents: None, seed: 0 }.label()
            }
            DatasetSource::File { label, .. } => label.clone(),
        }
    }

    fn load(&self, seed: u64) -> Result<FrequencyMatrix> {
        match self {
            DatasetSource::Synthetic { kind, d, n_points } => generate(&SyntheticSpec {
                kind: *kind,
                d: *d,
                n_points: *n_points,
                extents: None,
                seed,
            }),
            DatasetSource::File { path, .. } => read_matrix(std::fs::File::open(path)?),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub datasets: Vec<DatasetSource>,
    pub methods: Vec<Method>,
    pub eps: Vec<f64>,
    pub seeds: Vec<u64>,
    pub workload_kind: WorkloadKind,
    pub coverage: Option<f64>,
    pub query_count: usize,
    pub mre_floor: f64,
    pub method_cfg: MethodConfig,
}

impl ExperimentPlan {
    pub fn new(datasets: Vec<DatasetSource>) -> Self {
        Self {
            datasets,
            methods: Method::ALL.to_vec(),
            eps: vec![0.1, 0.3, 0.5],
            seeds: (1..=5).collect(),
            workload_kind: WorkloadKind::RandomShapeSize,
            coverage: None,
            query_count: 1000,
            mre_floor: DEFAULT_MRE_FLOOR,
            method_cfg: MethodConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if self.datasets.is_empty() {
            return bad("plan has no dataset");
        }
        if self.methods.is_empty() {
            return bad("plan has no method");
        }
        if self.seeds.is_empty() {
            return bad("plan has no seed");
        }
        if self.eps.is_empty() || self.eps.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return bad("budgets must be a non-empty list of positive numbers");
        }
        if !(self.mre_floor > 0.0) {
            return bad("mre floor must be positive");
        }
        self.workload(0).validate()
    }

    pub fn workload(&self, seed: u64) -> WorkloadSpec {
        WorkloadSpec {
            kind: self.workload_kind,
            coverage: self.coverage,
            count: self.query_count,
            seed,
        }
    }

    /// The evaluation protocol, recorded in every output file.
    pub fn protocol(&self) -> String {
        let mut s = format!(
            "workload={} count={} mre_floor={} seeds={}",
            self.workload_kind.name(),
            self.query_count,
            self.mre_floor,
            self.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(";")
        );
        if let Some(c) = self.coverage {
            s.push_str(&format!(" coverage={c}"));
        }
        s
    }

    /// Reads a plan from `key = value` text.
    ///
    /// ```text
    /// methods = all
    /// eps = 0.1,0.3,0.5
    /// seeds = 1,2,3,4,5
    ///
    /// [dataset]
    /// kind = gaussian      # or zipf, or file (with path = ...)
    /// d = 2,4
    /// n = 100000
    /// var = 2500           # a = 1.2 for zipf; lists expand the grid
    ///
    /// [workload]
    /// kind = random        # or coverage, with pct = 5
    /// count = 1000
    /// mre_floor = 1
    ///
    /// [method]
    /// identity_cap = 100000000
    /// q = 0.3
    /// p = 8
    /// ```
    pub fn parse(text: &str) -> Result<Self> {
        let sections = parse_kv(text)?;
        let mut plan = ExperimentPlan::new(Vec::new());
        for sec in &sections {
            match sec.name.as_str() {
                "" => parse_top(sec, &mut plan)?,
                "dataset" => plan.datasets.extend(parse_dataset(sec)?),
                "workload" => parse_workload(sec, &mut plan)?,
                "method" => parse_method(sec, &mut plan.method_cfg)?,
                other => {
                    return Err(Error::Parse(crate::ParseError {
                        line: sec.line,
                        offset: 0,
                        message: format!("unknown section [{other}]"),
                    }))
                }
            }
        }
        plan.validate()?;
        Ok(plan)
    }
}

fn known_keys(sec: &KvSection, keys: &[&str]) -> Result<()> {
    match sec.entries.iter().find(|e| !keys.contains(&e.key.as_str())) {
        Some(e) => Err(e.error(format!("unknown key; expected one of {}", keys.join(", ")))),
        None => Ok(()),
    }
}

fn parse_top(sec: &KvSection, plan: &mut ExperimentPlan) -> Result<()> {
    known_keys(sec, &["methods", "eps", "seeds"])?;
    if let Some(e) = sec.get("methods") {
        plan.methods = if e.value.trim() == "all" {
            Method::ALL.to_vec()
        } else {
            e.list::<Method>()?
        };
    }
    if let Some(e) = sec.get("eps") {
        plan.eps = e.list()?;
    }
    if let Some(e) = sec.get("seeds") {
        plan.seeds = e.list()?;
    }
    Ok(())
}

fn parse_dataset(sec: &KvSection) -> Result<Vec<DatasetSource>> {
    known_keys(sec, &["kind", "d", "n", "var", "a", "path", "label"])?;
    let kind = sec
        .get("kind")
        .ok_or_else(|| Error::InvalidParameter(format!("[dataset] at line {} has no kind", sec.line)))?;
    let need = |k: &str| {
        sec.get(k)
            .ok_or_else(|| kind.error(format!("{} datasets need `{k}`", kind.value)))
    };
    match kind.value.as_str() {
        "file" => {
            let path = PathBuf::from(&need("path")?.value);
            let label = match sec.get("label") {
                Some(l) => l.value.clone(),
                None => path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
            };
            Ok(vec![DatasetSource::File { path, label }])
        }
        "gaussian" | "zipf" => {
            let ds: Vec<usize> = need("d")?.list()?;
            let n_points: u64 = match sec.get("n") {
                Some(e) => e.parse()?,
                None => 1_000_000,
            };
            let param = need(if kind.value == "gaussian" { "var" } else { "a" })?;
            let kinds: Vec<SyntheticKind> = param
                .list::<f64>()?
                .into_iter()
                .map(|v| match kind.value.as_str() {
                    "gaussian" => SyntheticKind::Gaussian { variance: v },
                    _ => SyntheticKind::Zipf { a: v },
                })
                .collect();
            let mut out = Vec::new();
            for &k in &kinds {
                for &d in &ds {
                    let spec = SyntheticSpec { kind: k, d, n_points, extents: None, seed: 0 };
                    spec.validate().map_err(|e| param.error(e.to_string()))?;
                    out.push(DatasetSource::Synthetic { kind: k, d, n_points });
                }
            }
            Ok(out)
        }
        other => Err(kind.error(format!("unknown dataset kind `{other}`"))),
    }
}

fn parse_workload(sec: &KvSection, plan: &mut ExperimentPlan) -> Result<()> {
    known_keys(sec, &["kind", "count", "pct", "mre_floor"])?;
    if let Some(e) = sec.get("kind") {
        plan.workload_kind = match e.value.as_str() {
            "random" => WorkloadKind::RandomShapeSize,
            "coverage" => WorkloadKind::FixedCoverage,
            other => return Err(e.error(format!("unknown workload `{other}`"))),
        };
    }
    if let Some(e) = sec.get("pct") {
        plan.coverage = Some(e.parse::<f64>()? / 100.0);
    }
    if let Some(e) = sec.get("count") {
        plan.query_count = e.parse()?;
    }
    if let Some(e) = sec.get("mre_floor") {
        plan.mre_floor = e.parse()?;
    }
    Ok(())
}

fn parse_method(sec: &KvSection, cfg: &mut MethodConfig) -> Result<()> {
    known_keys(sec, &["identity_cap", "eps0_fraction", "c0", "r", "q", "p", "stop_multiplier"])?;
    for e in &sec.entries {
        match e.key.as_str() {
            "identity_cap" => cfg.identity_cap = e.parse::<f64>()? as u128,
            "eps0_fraction" => cfg.grid_eps0_fraction = e.parse()?,
            "c0" => cfg.c0 = e.parse()?,
            "r" => cfg.r = Some(e.parse()?),
            "q" => cfg.q = e.parse()?,
            "p" => cfg.p = e.parse()?,
            "stop_multiplier" => cfg.stop_multiplier = e.parse()?,
            _ => unreachable!(),
        }
    }
    Ok(())
}

/// Result of one (cell, seed) run.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Ok { mean_mre: f64, median_mre: f64, runtime_ms: f64 },
    /// Infeasible for this input (e.g. identity over its cell cap).
    Skipped(String),
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedRow {
    pub dataset: String,
    pub d: usize,
    pub method: Method,
    pub eps: f64,
    pub seed: u64,
    pub outcome: Outcome,
}

/// Seed-averaged statistics of one plan cell.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub dataset: String,
    pub d: usize,
    pub method: Method,
    pub eps: f64,
    pub seeds_ok: usize,
    pub mean_mre: f64,
    pub std_mre: f64,
    pub median_mre: f64,
    pub mean_runtime_ms: f64,
    pub std_runtime_ms: f64,
    /// `ok`, `skipped: ...` or `failed: ...`.
    pub status: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub protocol: String,
    pub rows: Vec<SeedRow>,
    pub aggregate: Vec<AggregateRow>,
}

/// Mean and sample standard deviation (0 for fewer than two values).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn run_dataset_seed(plan: &ExperimentPlan, ds: &DatasetSource, seed: u64) -> Vec<SeedRow> {
    let label = ds.label();
    let cells = plan.methods.iter().flat_map(|&m| plan.eps.iter().map(move |&e| (m, e)));
    let setup = ds.load(seed).and_then(|m| {
        let workload = generate_workload(&plan.workload(seed), m.extents())?;
        let truth = true_answers(&m, &workload)?;
        Ok((m, workload, truth))
    });
    let (m, workload, truth) = match setup {
        Ok(s) => s,
        Err(e) => {
            let d = match ds {
                DatasetSource::Synthetic { d, .. } => *d,
                DatasetSource::File { .. } => 0,
            };
            return cells
                .map(|(method, eps)| SeedRow {
                    dataset: label.clone(),
                    d,
                    method,
                    eps,
                    seed,
                    outcome: Outcome::Failed(format!("dataset: {e}")),
                })
                .collect();
        }
    };
    cells
        .map(|(method, eps)| {
            let outcome = match run_method(&m, method, eps, seed, &plan.method_cfg)
                .and_then(|out| {
                    let s = evaluate_with_truth(&out.sanitized, &workload, &truth, plan.mre_floor)?;
                    Ok((s, out.sanitized.metadata.runtime_ms.unwrap_or(f64::NAN)))
                }) {
                Ok((s, runtime_ms)) => Outcome::Ok {
                    mean_mre: s.mean_mre,
                    median_mre: s.median_mre,
                    runtime_ms,
                },
                Err(Error::Infeasible(msg)) => Outcome::Skipped(msg),
                Err(e) => Outcome::Failed(e.to_string()),
            };
            SeedRow {
                dataset: label.clone(),
                d: m.dims(),
                method,
                eps,
                seed,
                outcome,
            }
        })
        .collect()
}

/// Aggregates per-seed rows into one row per (dataset, d, method, eps),
/// keeping the first-appearance order of the cells.
pub fn aggregate(rows: &[SeedRow]) -> Vec<AggregateRow> {
    let mut keys: Vec<(String, usize, Method, u64)> = Vec::new();
    for r in rows {
        let k = (r.dataset.clone(), r.d, r.method, r.eps.to_bits());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(dataset, d, method, eps_bits)| {
            let cell: Vec<&SeedRow> = rows
                .iter()
                .filter(|r| r.dataset == dataset && r.d == d && r.method == method && r.eps.to_bits() == eps_bits)
                .collect();
            let mut means = Vec::new();
            let mut medians = Vec::new();
            let mut runtimes = Vec::new();
            let mut skipped = None;
            let mut failed = None;
            for r in &cell {
                match &r.outcome {
                    Outcome::Ok { mean_mre, median_mre, runtime_ms } => {
                        means.push(*mean_mre);
                        medians.push(*median_mre);
                        runtimes.push(*runtime_ms);
                    }
                    Outcome::Skipped(m) => skipped = skipped.or(Some(m.clone())),
                    Outcome::Failed(m) => failed = failed.or(Some(format!("seed {}: {m}", r.seed))),
                }
            }
            let status = match (failed, skipped) {
                (Some(f), _) => format!("failed: {f}"),
                (None, Some(s)) => format!("skipped: {s}"),
                _ => "ok".to_string(),
            };
            let (mean_mre, std_mre) = mean_std(&means);
            let (mean_runtime_ms, std_runtime_ms) = mean_std(&runtimes);
            AggregateRow {
                dataset,
                d,
                method,
                eps: f64::from_bits(eps_bits),
                seeds_ok: means.len(),
                mean_mre,
                std_mre,
                median_mre: mean_std(&medians).0,
                mean_runtime_ms,
                std_runtime_ms,
                status,
            }
        })
        .collect()
}

/// Runs every (dataset, seed) pair on a pool of `workers` threads (the
/// global pool when `None`). Results do not depend on the worker count.
pub fn run_sweep(plan: &ExperimentPlan, workers: Option<usize>) -> Result<SweepResult> {
    plan.validate()?;
    let tasks: Vec<(&DatasetSource, u64)> = plan
        .datasets
        .iter()
        .flat_map(|ds| plan.seeds.iter().map(move |&s| (ds, s)))
        .collect();
    let work = || -> Vec<Vec<SeedRow>> {
        tasks
            .par_iter()
            .map(|&(ds, seed)| run_dataset_seed(plan, ds, seed))
            .collect()
    };
    let per_task = match workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::InvalidParameter(format!("cannot start {n} workers: {e}")))?
            .install(work),
        None => work(),
    };
    // Reorder to dataset, method, eps, seed.
    let mut rows: Vec<SeedRow> = Vec::with_capacity(per_task.iter().map(Vec::len).sum());
    let n_seeds = plan.seeds.len();
    for (di, _) in plan.datasets.iter().enumerate() {
        let block = &per_task[di * n_seeds..(di + 1) * n_seeds];
        let per_seed = block.first().map_or(0, Vec::len);
        for c in 0..per_seed {
            for seed_rows in block {
                rows.push(seed_rows[c].clone());
            }
        }
    }
    Ok(SweepResult {
        protocol: plan.protocol(),
        aggregate: aggregate(&rows),
        rows,
    })
}

impl SweepResult {
    /// Per-seed rows in summary form; skipped and failed runs are omitted.
    pub fn summary_rows(&self) -> Vec<SummaryRow> {
        self.rows
            .iter()
            .filter_map(|r| match r.outcome {
                Outcome::Ok { mean_mre, median_mre, .. } => Some(SummaryRow {
                    method: r.method.name().to_string(),
                    eps: r.eps,
                    d: r.d,
                    dataset: r.dataset.clone(),
                    mean_mre,
                    median_mre,
                    seed: r.seed,
                }),
                _ => None,
            })
            .collect()
    }

    /// Aggregate CSV; deterministic for a given plan.
    pub fn aggregate_csv(&self) -> String {
        let mut s = format!(
            "# {}\nmethod,eps,d,dataset,seeds_ok,mean_mre,std_mre,median_mre,status\n",
            self.protocol
        );
        for a in &self.aggregate {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},\"{}\"\n",
                a.method,
                a.eps,
                a.d,
                a.dataset,
                a.seeds_ok,
                a.mean_mre,
                a.std_mre,
                a.median_mre,
                a.status.replace('"', "'")
            ));
        }
        s
    }

    /// Wall-clock runtimes, kept apart from the deterministic aggregate.
    pub fn runtime_csv(&self) -> String {
        let mut s = String::from("method,eps,d,dataset,seeds_ok,mean_runtime_ms,std_runtime_ms\n");
        for a in &self.aggregate {
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                a.method, a.eps, a.d, a.dataset, a.seeds_ok, a.mean_runtime_ms, a.std_runtime_ms
            ));
        }
        s
    }
}
