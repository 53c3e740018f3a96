//! `fanns`: build indexes, generate workloads, run recall/QPS sweeps, tune
//! parameters and extract Pareto frontiers.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use fanns::harness::{
    build_timed, load_csv, pareto_frontier, run_workload, save_csv, BuildRecord, RunConfig, RunPoint,
    DEFAULT_THREADS,
};
use fanns::tuner::{tune, ParamSpace, TuneConfig};
use fanns::workload::{
    attach_ground_truth, hold_out, load_labels, random_sample, read_fvecs, stratify_by_length,
    stratify_by_selectivity, synthetic_fixed_length, write_fvecs, write_labels, FixedLengthSpec,
    GenerateParams, DEFAULT_K_MAX, DEFAULT_PERCENTILES,
};
use fanns::{Algorithm, Dataset, DistanceMetric, FannsError, FannsIndex, FilterConstraint, Params, Workload};

#[derive(Parser, Debug)]
#[command(name = "fanns", version, about = "Filtered ANN search benchmark harness")]
struct Cli {
    /// Search worker threads.
    #[arg(long, global = true, env = "FANNS_THREADS", default_value_t = DEFAULT_THREADS)]
    threads: usize,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// l2 or ip.
    #[arg(long, global = true, default_value = "l2")]
    metric: DistanceMetric,
    /// Precompute filter bitmaps outside the timed region.
    #[arg(long, global = true)]
    exclude_filter_time: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build an index file from a base dataset.
    Build(BuildArgs),
    /// Recompute a workload's ground truth against a base dataset.
    Gt(GtArgs),
    /// Generate a workload (and, for synthetic data, its base dataset).
    Gen(GenArgs),
    /// Sweep the search knob over a workload and write results CSV.
    Search(SearchArgs),
    /// Run the parameter search and write a JSON report.
    Tune(TuneArgs),
    /// Keep the non-dominated rows of one or more results CSVs.
    Pareto(ParetoArgs),
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Base embeddings (fvecs).
    #[arg(long)]
    base: PathBuf,
    /// Base label sets, one comma-separated line per record.
    #[arg(long)]
    labels: PathBuf,
    /// Raw-to-dense label mapping ("dense,raw" lines); raw labels are
    /// remapped when given.
    #[arg(long)]
    label_map: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BuildArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    algorithm: Algorithm,
    /// key=value pairs separated by `;`.
    #[arg(long, default_value = "")]
    params: Params,
    #[arg(long)]
    out: PathBuf,
    /// Build log CSV to append to.
    #[arg(long)]
    build_log: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GtArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    workload: PathBuf,
    /// Truth depth; defaults to the workload's.
    #[arg(long)]
    k_max: Option<usize>,
    /// Write the updated workload here instead of in place.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GenArgs {
    /// Synthetic fixed-length data, LENGTHxVALUES (e.g. 4x3).
    #[arg(long, conflicts_with_all = ["base", "labels"])]
    synthetic_fixed: Option<String>,
    /// Synthetic base size.
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    /// Synthetic dimension.
    #[arg(long, default_value_t = 32)]
    dim: usize,
    #[arg(long, requires = "labels")]
    base: Option<PathBuf>,
    #[arg(long, requires = "base")]
    labels: Option<PathBuf>,
    #[arg(long)]
    label_map: Option<PathBuf>,
    #[arg(long, default_value = "containment")]
    scenario: FilterConstraint,
    /// random, length or selectivity.
    #[arg(long, default_value = "random")]
    strata: String,
    /// Records held out as the query candidate pool.
    #[arg(long, default_value_t = 1000)]
    pool: usize,
    /// Queries per stratum (total for random and synthetic).
    #[arg(long, default_value_t = 200)]
    per_group: usize,
    /// Length groups.
    #[arg(long, default_value_t = 3)]
    groups: usize,
    #[arg(long, value_delimiter = ',')]
    percentiles: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = DEFAULT_K_MAX)]
    k_max: usize,
    /// Keep queries with at least k (rather than k_max) matches.
    #[arg(long)]
    no_guarantee: bool,
    /// Output directory: base.fvecs, base.labels and the workload files.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SearchArgs {
    /// Prebuilt index; otherwise one is built from --base/--labels.
    #[arg(long, conflicts_with_all = ["base", "algorithm"])]
    index: Option<PathBuf>,
    #[arg(long, requires_all = ["labels", "algorithm"])]
    base: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    label_map: Option<PathBuf>,
    #[arg(long)]
    algorithm: Option<Algorithm>,
    #[arg(long, default_value = "")]
    params: Params,
    #[arg(long)]
    workload: PathBuf,
    /// Search knob values.
    #[arg(long, value_delimiter = ',', default_values_t = [10, 20, 40, 80, 160, 320])]
    knobs: Vec<usize>,
    /// Evaluate at this k instead of the workload's.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value = "dataset")]
    dataset: String,
    #[arg(long, default_value = "p0")]
    param_id: String,
    #[arg(long)]
    out: PathBuf,
    /// Build log CSV to append to when the index is built here.
    #[arg(long)]
    build_log: Option<PathBuf>,
    #[arg(long, default_value_t = fanns::harness::WARMUP_QUERIES)]
    warmup: usize,
}

#[derive(Args, Debug)]
struct TuneArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    algorithm: Algorithm,
    #[arg(long, value_delimiter = ',', default_value = "containment,overlap,equality")]
    scenarios: Vec<FilterConstraint>,
    /// Grids as `name=v1,v2;name=v1`; defaults scale with the data.
    #[arg(long)]
    space: Option<String>,
    #[arg(long, value_delimiter = ',')]
    knobs: Vec<usize>,
    #[arg(long)]
    n_sub: Option<usize>,
    #[arg(long, default_value_t = 0.1)]
    sample_fraction: f64,
    #[arg(long, default_value_t = 5000)]
    sample_floor: usize,
    #[arg(long, default_value_t = 100)]
    queries: usize,
    #[arg(long, value_delimiter = ',')]
    targets: Vec<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ParetoArgs {
    #[arg(long = "input", required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

/// Bad invocation or a missing input: exit status 2.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn require(path: &Path) -> anyhow::Result<()> {
    if !path.exists() {
        return Err(usage(format!("no such file or directory: {}", path.display())));
    }
    Ok(())
}

fn exit_code(e: &anyhow::Error) -> u8 {
    let missing = e.chain().any(|c| {
        c.is::<UsageError>()
            || matches!(c.downcast_ref::<FannsError>(), Some(FannsError::Io { source, .. }) if source.kind() == std::io::ErrorKind::NotFound)
    });
    if missing {
        2
    } else {
        1
    }
}

fn load_dataset(base: &Path, labels: &Path, label_map: Option<&Path>) -> anyhow::Result<Dataset> {
    require(base)?;
    require(labels)?;
    let vectors = read_fvecs(base)?;
    let (labels, _) = load_labels(labels, label_map)?;
    Ok(Dataset::new(vectors, labels)?)
}

fn append_build_log(path: &Path, record: BuildRecord) -> anyhow::Result<()> {
    let mut rows: Vec<BuildRecord> = if path.exists() { load_csv(path)? } else { Vec::new() };
    rows.push(record);
    save_csv(path, &rows)?;
    Ok(())
}

fn cmd_build(cli: &Cli, a: &BuildArgs) -> anyhow::Result<()> {
    let ds = load_dataset(&a.data.base, &a.data.labels, a.data.label_map.as_deref())?;
    let (index, record) = build_timed(ds, a.algorithm, &a.params, cli.metric, cli.seed, "p0")?;
    index.save(&a.out)?;
    log::info!("built {} in {:.2}s, {} bytes", a.algorithm, record.build_seconds, record.index_bytes);
    if let Some(log_path) = &a.build_log {
        append_build_log(log_path, record)?;
    }
    Ok(())
}

fn cmd_gt(cli: &Cli, a: &GtArgs) -> anyhow::Result<()> {
    require(&a.workload)?;
    let ds = load_dataset(&a.data.base, &a.data.labels, a.data.label_map.as_deref())?;
    let old = Workload::load(&a.workload)?;
    let k_max = a.k_max.unwrap_or(old.k_max);
    let queries = old.queries.iter().map(|q| (q.query.clone(), q.stratum.clone())).collect();
    let mut w = attach_ground_truth(queries, &ds, old.scenario, k_max, old.guarantee, cli.metric)?;
    w.k = old.k;
    w.scheme = old.scheme.clone();
    w.strata = old.strata.clone();
    for s in &mut w.strata {
        s.kept = w.queries.iter().filter(|q| q.stratum == s.name).count();
    }
    w.save(a.out.as_ref().unwrap_or(&a.workload))?;
    Ok(())
}

fn parse_fixed(spec: &str) -> anyhow::Result<(usize, usize)> {
    let (l, v) = spec
        .split_once(['x', 'X'])
        .ok_or_else(|| usage(format!("--synthetic-fixed expects LENGTHxVALUES, got `{spec}`")))?;
    let parse = |s: &str| s.trim().parse::<usize>().map_err(|_| usage(format!("bad number `{s}` in `{spec}`")));
    Ok((parse(l)?, parse(v)?))
}

fn cmd_gen(cli: &Cli, a: &GenArgs) -> anyhow::Result<()> {
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let (base, workload) = if let Some(spec) = &a.synthetic_fixed {
        let (length, values) = parse_fixed(spec)?;
        let fs = FixedLengthSpec {
            n: a.n,
            dim: a.dim,
            length,
            values,
            n_queries: a.per_group,
            k: a.k,
            k_max: a.k_max,
        };
        synthetic_fixed_length(&fs, cli.metric, cli.seed)?
    } else {
        let (Some(base), Some(labels)) = (&a.base, &a.labels) else {
            return Err(usage("gen needs --synthetic-fixed or --base and --labels"));
        };
        let all = load_dataset(base, labels, a.label_map.as_deref())?;
        let (base, pool) = hold_out(&all, a.pool, cli.seed)?;
        let strata = match a.strata.as_str() {
            "random" => random_sample(&pool.labels, a.per_group, cli.seed),
            "length" => stratify_by_length(&pool.labels, a.groups, a.per_group, cli.seed)?,
            "selectivity" => {
                let pct = if a.percentiles.is_empty() { DEFAULT_PERCENTILES.to_vec() } else { a.percentiles.clone() };
                stratify_by_selectivity(&pool.labels, &base.labels, a.scenario, &pct, a.per_group, cli.seed)?
            }
            other => return Err(usage(format!("unknown strata scheme `{other}` (random, length, selectivity)"))),
        };
        for w in &strata.warnings {
            log::warn!("{w}");
        }
        let gp = GenerateParams {
            scenario: a.scenario,
            k: a.k,
            k_max: a.k_max,
            guarantee: !a.no_guarantee,
            metric: cli.metric,
        };
        let w = fanns::workload::generate(&base, &pool, &strata, &gp)?;
        (base, w)
    };
    write_fvecs(a.out.join("base.fvecs"), &base.vectors)?;
    write_labels(a.out.join("base.labels"), &base.labels)?;
    workload.save(&a.out)?;
    log::info!("{} queries, {} base records in {}", workload.len(), base.len(), a.out.display());
    Ok(())
}

fn cmd_search(cli: &Cli, a: &SearchArgs) -> anyhow::Result<()> {
    require(&a.workload)?;
    let index = match (&a.index, &a.base, &a.labels, a.algorithm) {
        (Some(path), ..) => {
            require(path)?;
            FannsIndex::load(path)?
        }
        (None, Some(base), Some(labels), Some(alg)) => {
            let ds = load_dataset(base, labels, a.label_map.as_deref())?;
            let (index, record) = build_timed(ds, alg, &a.params, cli.metric, cli.seed, &a.param_id)?;
            if let Some(log_path) = &a.build_log {
                append_build_log(log_path, record)?;
            }
            index
        }
        _ => return Err(usage("search needs --index or --base, --labels and --algorithm")),
    };
    let mut workload = Workload::load(&a.workload)?;
    if let Some(k) = a.k {
        workload = workload.with_k(k)?;
    }
    let cfg = RunConfig {
        dataset: a.dataset.clone(),
        param_id: a.param_id.clone(),
        knobs: a.knobs.clone(),
        threads: cli.threads,
        warmup: a.warmup,
        exclude_filter_time: cli.exclude_filter_time,
    };
    let points = run_workload(&index, &workload, &cfg)?;
    for p in &points {
        log::info!("{} knob={} recall={:.4} qps={:.1}", p.algorithm, p.knob, p.recall, p.qps);
    }
    save_csv(&a.out, &points)?;
    Ok(())
}

fn parse_space(text: &str, knobs: Vec<usize>) -> anyhow::Result<ParamSpace> {
    let mut build = Vec::new();
    for part in text.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let (name, grid) = part
            .split_once('=')
            .ok_or_else(|| usage(format!("expected name=v1,v2 in --space, got `{part}`")))?;
        let values = grid
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| usage(format!("bad grid value `{v}` for `{name}`"))))
            .collect::<anyhow::Result<Vec<_>>>()?;
        build.push((name.trim().to_string(), values));
    }
    Ok(ParamSpace::new(build, knobs)?)
}

fn cmd_tune(cli: &Cli, a: &TuneArgs) -> anyhow::Result<()> {
    let ds = load_dataset(&a.data.base, &a.data.labels, a.data.label_map.as_deref())?;
    let default = ParamSpace::default_for(a.algorithm, ds.len(), ds.dim());
    let knobs = if a.knobs.is_empty() { default.knobs.clone() } else { a.knobs.clone() };
    let space = match &a.space {
        Some(text) => parse_space(text, knobs)?,
        None => ParamSpace::new(default.build, knobs)?,
    };
    let mut cfg = TuneConfig {
        n_sub: a.n_sub,
        sample_fraction: a.sample_fraction,
        sample_floor: a.sample_floor,
        queries_per_scenario: a.queries,
        threads: cli.threads,
        metric: cli.metric,
        seed: cli.seed,
        ..TuneConfig::default()
    };
    if !a.targets.is_empty() {
        cfg.targets = a.targets.clone();
    }
    let report = tune(&ds, a.algorithm, &space, &a.scenarios, &cfg)?;
    for (i, p) in report.selected().iter().enumerate() {
        log::info!("selected {i}: {p}");
    }
    let json = serde_json::to_string_pretty(&report)?;
    std::fs::write(&a.out, json).with_context(|| format!("writing {}", a.out.display()))?;
    Ok(())
}

fn cmd_pareto(a: &ParetoArgs) -> anyhow::Result<()> {
    let mut groups: BTreeMap<(String, String, String, usize), Vec<RunPoint>> = BTreeMap::new();
    for path in &a.inputs {
        require(path)?;
        for p in load_csv::<RunPoint>(path)? {
            groups
                .entry((p.dataset.clone(), p.scenario.clone(), p.algorithm.clone(), p.k))
                .or_default()
                .push(p);
        }
    }
    let frontier: Vec<RunPoint> = groups.values().flat_map(|pts| pareto_frontier(pts)).collect();
    save_csv(&a.out, &frontier)?;
    Ok(())
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    if cli.threads == 0 {
        bail!(usage("--threads must be at least 1"));
    }
    match &cli.command {
        Command::Build(a) => cmd_build(cli, a),
        Command::Gt(a) => cmd_gt(cli, a),
        Command::Gen(a) => cmd_gen(cli, a),
        Command::Search(a) => cmd_search(cli, a),
        Command::Tune(a) => cmd_tune(cli, a),
        Command::Pareto(a) => cmd_pareto(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
