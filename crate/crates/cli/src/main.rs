use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

use dpfm_core::data::format::{
    parse_kv, read_matrix, read_sanitized, write_matrix, write_query_records, write_sanitized, write_summary,
    SummaryRow,
};
use dpfm_core::data::synthetic::generate;
use dpfm_core::data::trajectory::read_trajectory_csv;
use dpfm_core::experiment::{run_method, run_sweep, ExperimentPlan, Method, MethodConfig, WORKERS_ENV};
use dpfm_core::query::{evaluate, generate_workload, WorkloadSpec, DEFAULT_MRE_FLOOR};
use dpfm_core::{BoundingBox, Error, NoiseMode, SyntheticKind, SyntheticSpec, TrajectorySchema};

// Usage errors exit with 2 through clap.
const EXIT_FAILURE: u8 = 1;
const EXIT_AUDIT: u8 = 3;
const EXIT_INFEASIBLE: u8 = 4;

/// Differentially private publication of multi-dimensional frequency matrices.
///
/// Exit codes: 0 success, 1 error, 2 usage error, 3 budget audit failure,
/// 4 method infeasible for this input.
#[derive(Parser, Debug)]
#[command(name = "dpfm", version, about, long_about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic frequency matrix (sparse COO file).
    Generate(GenerateArgs),
    /// Publish a differentially private version of a matrix.
    Sanitize(SanitizeArgs),
    /// Score a sanitized matrix on a range-query workload.
    Evaluate(EvaluateArgs),
    /// Run an experiment plan and write aggregated results.
    Sweep(SweepArgs),
    /// Build an OD matrix from a trajectory CSV.
    Ingest(IngestArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Kind {
    Gaussian,
    Zipf,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// Spec file with key=value lines (kind, d, n, var, a, seed, extents);
    /// flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    kind: Option<Kind>,
    /// Number of dimensions.
    #[arg(long)]
    d: Option<usize>,
    /// Number of points [default: 1000000].
    #[arg(long)]
    n: Option<u64>,
    /// Gaussian variance.
    #[arg(long)]
    var: Option<f64>,
    /// Zipf skew (> 1).
    #[arg(long)]
    a: Option<f64>,
    /// Comma-separated extents [default: floor(n^(1/d)) per dimension].
    #[arg(long, value_delimiter = ',')]
    extents: Option<Vec<u32>>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output matrix file; the spec is written next to it as <out>.spec.json.
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    Uniform,
    Identity,
    Eug,
    Ebp,
    DafEntropy,
    DafHomogeneity,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::Uniform => Method::Uniform,
            MethodArg::Identity => Method::Identity,
            MethodArg::Eug => Method::Eug,
            MethodArg::Ebp => Method::Ebp,
            MethodArg::DafEntropy => Method::DafEntropy,
            MethodArg::DafHomogeneity => Method::DafHomogeneity,
        }
    }
}

#[derive(Args, Debug)]
struct SanitizeArgs {
    /// Input matrix (COO).
    matrix: PathBuf,
    #[arg(long, value_enum)]
    method: MethodArg,
    /// Total privacy budget.
    #[arg(long)]
    eps: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file [default: <matrix>.<method>.san].
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Ledger dump [default: <out>.ledger].
    #[arg(long)]
    ledger: Option<PathBuf>,
    /// Write the DAF tree (bounds and noisy counts) here.
    #[arg(long)]
    tree: Option<PathBuf>,
    /// Largest domain identity will enumerate.
    #[arg(long, default_value_t = 1e8)]
    identity_cap: f64,
    /// Budget share spent on the noisy total by eug/ebp.
    #[arg(long, default_value_t = 0.01)]
    eps0_fraction: f64,
    /// Error constant of the eug fanout.
    #[arg(long)]
    c0: Option<f64>,
    /// Known query selectivity for the eug fanout.
    #[arg(long)]
    r: Option<f64>,
    /// Share of each DAF level spent on choosing split points.
    #[arg(long, default_value_t = 0.3)]
    q: f64,
    /// Candidate split sets per DAF-homogeneity node.
    #[arg(long, default_value_t = 8)]
    p: usize,
    /// DAF stopping threshold in noise standard deviations (0 disables).
    #[arg(long, default_value_t = 2.0)]
    stop_multiplier: f64,
    /// Debug only: publish exact counts. The output is NOT private.
    #[arg(long)]
    no_noise: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum WorkloadArg {
    Random,
    Coverage,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// True matrix (COO).
    matrix: PathBuf,
    /// Sanitized matrix.
    sanitized: PathBuf,
    #[arg(long, value_enum, default_value = "random")]
    workload: WorkloadArg,
    /// Query side as a percentage of each dimension (coverage workload).
    #[arg(long)]
    pct: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Denominator floor of the relative error.
    #[arg(long, default_value_t = DEFAULT_MRE_FLOOR)]
    mre_floor: f64,
    /// Dataset label for the summary row [default: matrix file stem].
    #[arg(long)]
    dataset: Option<String>,
    /// Per-query CSV [default: <sanitized>.queries.csv].
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Summary CSV [default: <sanitized>.summary.csv].
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Plan file (key=value sections).
    plan: PathBuf,
    /// Aggregate CSV; <out>.runtime.csv and <out>.seeds.csv are written
    /// next to it.
    #[arg(short, long)]
    out: PathBuf,
    /// Worker threads.
    #[arg(long, env = WORKERS_ENV)]
    workers: Option<usize>,
}

#[derive(Args, Debug)]
struct IngestArgs {
    /// Trajectory CSV with header lat1,lon1,...,latS,lonS.
    trajectories: PathBuf,
    /// Points per trajectory.
    #[arg(long, default_value_t = 2)]
    stops: usize,
    /// Grid cells per stop as LAT,LON.
    #[arg(long, value_delimiter = ',', default_values_t = [1000u32, 1000])]
    grid: Vec<u32>,
    /// Bounding box as LAT_MIN,LAT_MAX,LON_MIN,LON_MAX.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
    bbox: Vec<f64>,
    #[arg(short, long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Sanitize(a) => cmd_sanitize(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Ingest(a) => cmd_ingest(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = match e.downcast_ref::<Error>() {
                Some(Error::AuditFailed { dump, .. }) => {
                    eprintln!("{dump}");
                    EXIT_AUDIT
                }
                Some(Error::Infeasible(_)) => EXIT_INFEASIBLE,
                _ => EXIT_FAILURE,
            };
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}

fn usage_error(msg: &str) -> ! {
    Cli::command()
        .error(clap::error::ErrorKind::MissingRequiredArgument, msg)
        .exit()
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
    ))
}

fn open(path: &Path) -> anyhow::Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("cannot open {}", path.display()))?,
    ))
}

fn with_suffix(p: &Path, suffix: &str) -> PathBuf {
    let mut s = p.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn cmd_generate(a: GenerateArgs) -> anyhow::Result<()> {
    let mut kind = a.kind;
    let (mut d, mut n, mut var, mut skew, mut seed, mut extents) = (a.d, a.n, a.var, a.a, a.seed, a.extents);
    if let Some(path) = &a.config {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        let secs = parse_kv(&text)?;
        for e in secs.iter().flat_map(|s| &s.entries) {
            match e.key.as_str() {
                "kind" => {
                    kind = kind.or(Some(match e.value.as_str() {
                        "gaussian" => Kind::Gaussian,
                        "zipf" => Kind::Zipf,
                        other => return Err(e.error(format!("unknown kind `{other}`")).into()),
                    }))
                }
                "d" => d = d.or(Some(e.parse()?)),
                "n" => n = n.or(Some(e.parse()?)),
                "var" => var = var.or(Some(e.parse()?)),
                "a" => skew = skew.or(Some(e.parse()?)),
                "seed" => seed = seed.or(Some(e.parse()?)),
                "extents" => extents = extents.or(Some(e.list()?)),
                _ => return Err(e.error("unknown key").into()),
            }
        }
    }
    let Some(kind) = kind else { usage_error("--kind is required") };
    let Some(d) = d else { usage_error("--d is required") };
    let kind = match kind {
        Kind::Gaussian => SyntheticKind::Gaussian {
            variance: var.unwrap_or_else(|| usage_error("--var is required for gaussian data")),
        },
        Kind::Zipf => SyntheticKind::Zipf {
            a: skew.unwrap_or_else(|| usage_error("--a is required for zipf data")),
        },
    };
    let spec = SyntheticSpec {
        kind,
        d,
        n_points: n.unwrap_or(1_000_000),
        extents,
        seed: seed.unwrap_or(0),
    };
    let m = generate(&spec)?;
    let mut w = create(&a.out)?;
    write_matrix(&mut w, &m)?;
    w.flush()?;

    let (k, param) = match spec.kind {
        SyntheticKind::Gaussian { variance } => ("gaussian", format!("\"var\": {variance}")),
        SyntheticKind::Zipf { a } => ("zipf", format!("\"a\": {a}")),
    };
    let side = with_suffix(&a.out, ".spec.json");
    fs::write(
        &side,
        format!(
            "{{\"kind\": \"{k}\", \"d\": {}, \"n_points\": {}, {param}, \"extents\": [{}], \"seed\": {}}}\n",
            spec.d,
            spec.n_points,
            spec.resolved_extents().iter().map(u32::to_string).collect::<Vec<_>>().join(", "),
            spec.seed
        ),
    )?;
    eprintln!(
        "wrote {} ({} points, {} non-zero cells, extents {:?})",
        a.out.display(),
        m.total(),
        m.nnz(),
        m.extents()
    );
    Ok(())
}

fn cmd_sanitize(a: SanitizeArgs) -> anyhow::Result<()> {
    let m = read_matrix(open(&a.matrix)?).with_context(|| format!("reading {}", a.matrix.display()))?;
    let method: Method = a.method.into();
    let cfg = MethodConfig {
        identity_cap: a.identity_cap as u128,
        grid_eps0_fraction: a.eps0_fraction,
        c0: a.c0.unwrap_or(MethodConfig::default().c0),
        r: a.r,
        q: a.q,
        p: a.p,
        stop_multiplier: a.stop_multiplier,
        noise_mode: if a.no_noise { NoiseMode::Disabled } else { NoiseMode::Laplace },
    };
    if a.no_noise {
        eprintln!("warning: --no-noise set; the output is NOT differentially private");
    }
    let out = match run_method(&m, method, a.eps, a.seed, &cfg) {
        Ok(o) => o,
        Err(Error::Infeasible(msg)) => {
            eprintln!("skipping {method}: {msg}");
            return Err(Error::Infeasible(msg).into());
        }
        Err(e) => return Err(e.into()),
    };
    let sm = &out.sanitized;
    let path = a
        .out
        .unwrap_or_else(|| a.matrix.with_extension(format!("{}.san", method.name())));
    let mut w = create(&path)?;
    write_sanitized(&mut w, sm)?;
    w.flush()?;
    let ledger_path = a.ledger.unwrap_or_else(|| with_suffix(&path, ".ledger"));
    fs::write(&ledger_path, sm.ledger_dump.as_deref().unwrap_or_default())?;
    if let (Some(tp), Some(tree)) = (&a.tree, &out.tree) {
        fs::write(tp, tree.dump(true))?;
    }
    for warning in &sm.metadata.warnings {
        eprintln!("warning: {warning}");
    }
    eprintln!(
        "{method}: {} partitions, eps {} spent {}, {:.1} ms -> {}",
        sm.len(),
        sm.metadata.ledger.total,
        sm.metadata.ledger.spent,
        sm.metadata.runtime_ms.unwrap_or(0.0),
        path.display()
    );
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs) -> anyhow::Result<()> {
    let m = read_matrix(open(&a.matrix)?).with_context(|| format!("reading {}", a.matrix.display()))?;
    let sm = read_sanitized(open(&a.sanitized)?).with_context(|| format!("reading {}", a.sanitized.display()))?;
    let spec = match a.workload {
        WorkloadArg::Random => WorkloadSpec::random(a.count, a.seed),
        WorkloadArg::Coverage => {
            let Some(pct) = a.pct else { usage_error("--pct is required for the coverage workload") };
            WorkloadSpec::coverage(pct / 100.0, a.count, a.seed)
        }
    };
    let workload = generate_workload(&spec, m.extents())?;
    let summary = evaluate(&sm, &m, &workload, a.mre_floor)?;
    let protocol = format!("{} mre_floor={}", spec.describe(), a.mre_floor);

    let out = a.out.unwrap_or_else(|| with_suffix(&a.sanitized, ".queries.csv"));
    let mut w = create(&out)?;
    write_query_records(&mut w, &protocol, &summary.records)?;
    w.flush()?;

    let row = SummaryRow {
        method: sm.metadata.method.clone(),
        eps: sm.metadata.epsilon,
        d: m.dims(),
        dataset: a.dataset.unwrap_or_else(|| {
            a.matrix
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default()
        }),
        mean_mre: summary.mean_mre,
        median_mre: summary.median_mre,
        seed: sm.metadata.seed,
    };
    let summary_path = a.summary.unwrap_or_else(|| with_suffix(&a.sanitized, ".summary.csv"));
    let mut w = create(&summary_path)?;
    write_summary(&mut w, &protocol, std::slice::from_ref(&row))?;
    w.flush()?;
    println!(
        "{},{},{},{},{},{},{}",
        row.method, row.eps, row.d, row.dataset, row.mean_mre, row.median_mre, row.seed
    );
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> anyhow::Result<()> {
    let text = fs::read_to_string(&a.plan).with_context(|| format!("cannot read {}", a.plan.display()))?;
    let plan = ExperimentPlan::parse(&text).with_context(|| format!("in plan {}", a.plan.display()))?;
    if a.workers == Some(0) {
        bail!("--workers must be at least 1");
    }
    let res = run_sweep(&plan, a.workers)?;
    fs::write(&a.out, res.aggregate_csv())?;
    fs::write(with_suffix(&a.out, ".runtime.csv"), res.runtime_csv())?;
    let mut w = create(&with_suffix(&a.out, ".seeds.csv"))?;
    write_summary(&mut w, &res.protocol, &res.summary_rows())?;
    w.flush()?;
    let failed = res.aggregate.iter().filter(|r| r.status.starts_with("failed")).count();
    let skipped = res.aggregate.iter().filter(|r| r.status.starts_with("skipped")).count();
    eprintln!(
        "{} cells ({} skipped, {} failed) -> {}",
        res.aggregate.len(),
        skipped,
        failed,
        a.out.display()
    );
    Ok(())
}

fn cmd_ingest(a: IngestArgs) -> anyhow::Result<()> {
    let [lat_min, lat_max, lon_min, lon_max] = a.bbox[..] else {
        return Err(anyhow!("--bbox takes four numbers"));
    };
    let [lat, lon] = a.grid[..] else {
        return Err(anyhow!("--grid takes two numbers"));
    };
    let schema = TrajectorySchema {
        stops: a.stops,
        grid: (lat, lon),
        bbox: BoundingBox {
            lat_min,
            lat_max,
            lon_min,
            lon_max,
        },
    };
    let (m, report) = read_trajectory_csv(open(&a.trajectories)?, &schema)?;
    let mut w = create(&a.out)?;
    write_matrix(&mut w, &m)?;
    w.flush()?;
    eprintln!(
        "{} trajectories accepted, {} outside the bounding box, {} malformed; {}-dimensional matrix -> {}",
        report.accepted,
        report.skipped_out_of_bbox,
        report.skipped_malformed,
        m.dims(),
        a.out.display()
    );
    Ok(())
}
