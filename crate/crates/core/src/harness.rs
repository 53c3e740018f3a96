//! Recall/QPS measurement, CSV records and Pareto frontiers.

use std::io::{Read, Write};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, FannsError, Result};
use crate::filter::FilterBitmap;
use crate::model::{recall_at_k, Dataset, DistanceMetric};
use crate::strategy::{Algorithm, FannsIndex, Params};
use crate::workload::Workload;

pub const DEFAULT_THREADS: usize = 16;
pub const WARMUP_QUERIES: usize = 100;

/// One row of the results CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunPoint {
    pub dataset: String,
    pub algorithm: String,
    pub scenario: String,
    pub param_id: String,
    pub params: String,
    pub knob: usize,
    pub k: usize,
    pub threads: usize,
    pub recall: f64,
    pub qps: f64,
}

pub const RUN_POINT_HEADER: &str = "dataset,algorithm,scenario,param_id,params,knob,k,threads,recall,qps";

/// One row of the build log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildRecord {
    pub algorithm: String,
    pub param_id: String,
    pub params: String,
    pub build_seconds: f64,
    pub index_bytes: u64,
}

pub const BUILD_LOG_HEADER: &str = "algorithm,param_id,params,build_seconds,index_bytes";

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: String,
    pub param_id: String,
    pub knobs: Vec<usize>,
    pub threads: usize,
    pub warmup: usize,
    /// Precompute filter bitmaps outside the timed region.
    pub exclude_filter_time: bool,
}

impl RunConfig {
    pub fn new(knobs: Vec<usize>) -> Self {
        RunConfig {
            dataset: "dataset".into(),
            param_id: "p0".into(),
            knobs,
            threads: DEFAULT_THREADS,
            warmup: WARMUP_QUERIES,
            exclude_filter_time: false,
        }
    }
}

/// Builds an index and records its wall-clock build time and strategy size.
pub fn build_timed(
    dataset: Dataset,
    algorithm: Algorithm,
    params: &Params,
    metric: DistanceMetric,
    seed: u64,
    param_id: &str,
) -> Result<(FannsIndex, BuildRecord)> {
    let start = Instant::now();
    let index = FannsIndex::build(dataset, algorithm, params, metric, seed)?;
    let build_seconds = start.elapsed().as_secs_f64();
    let record = BuildRecord {
        algorithm: algorithm.name().into(),
        param_id: param_id.into(),
        params: index.params().to_string(),
        build_seconds,
        index_bytes: index.index_bytes()?,
    };
    Ok((index, record))
}

fn thread_pool(threads: usize) -> Result<rayon::ThreadPool> {
    if threads == 0 {
        return Err(param("threads must be at least 1"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| param(format!("thread pool: {e}")))
}

/// Runs every workload query at every knob on exactly `threads` workers.
///
/// qps = queries / wall-clock seconds of the batch; recall is the mean
/// Recall@k over queries.
pub fn run_workload(index: &FannsIndex, workload: &Workload, cfg: &RunConfig) -> Result<Vec<RunPoint>> {
    if workload.is_empty() {
        return Err(FannsError::EmptyWorkload("workload has no queries".into()));
    }
    if !index.algorithm().supports(workload.scenario) {
        return Err(FannsError::UnsupportedScenario {
            algorithm: index.algorithm().name().into(),
            constraint: workload.scenario,
        });
    }
    if workload.dim() != index.dataset().dim() {
        return Err(FannsError::DimensionMismatch { expected: index.dataset().dim(), actual: workload.dim() });
    }
    if workload.metric != index.metric() {
        return Err(FannsError::Mismatch(format!(
            "workload truth uses {} but the index uses {}",
            workload.metric.name(),
            index.metric().name()
        )));
    }
    if cfg.knobs.is_empty() {
        return Err(param("need at least one knob value"));
    }
    let pool = thread_pool(cfg.threads)?;
    let queries = &workload.queries;
    let bitmaps: Option<Vec<FilterBitmap>> = if cfg.exclude_filter_time && index.algorithm().uses_bitmap() {
        Some(pool.install(|| queries.par_iter().map(|q| index.filter_map(&q.query)).collect::<Result<_>>())?)
    } else {
        None
    };
    let search = |i: usize, knob: usize| {
        let bm = bitmaps.as_ref().map(|b| &b[i]);
        index.search_with(&queries[i].query, knob, bm)
    };

    let warm = cfg.warmup.min(queries.len());
    pool.install(|| (0..warm).into_par_iter().try_for_each(|i| search(i, cfg.knobs[0]).map(|_| ())))?;

    let mut out = Vec::with_capacity(cfg.knobs.len());
    for &knob in &cfg.knobs {
        let start = Instant::now();
        let results: Vec<Vec<u32>> =
            pool.install(|| (0..queries.len()).into_par_iter().map(|i| search(i, knob).map(|o| o.ids())).collect::<Result<_>>())?;
        let elapsed = start.elapsed().as_secs_f64().max(1e-9);
        let mut total = 0.0;
        for (ids, q) in results.iter().zip(queries) {
            total += recall_at_k(ids, &q.truth, q.query.k)?;
        }
        out.push(RunPoint {
            dataset: cfg.dataset.clone(),
            algorithm: index.algorithm().name().into(),
            scenario: workload.scenario.name().into(),
            param_id: cfg.param_id.clone(),
            params: index.params().to_string(),
            knob,
            k: workload.k,
            threads: cfg.threads,
            recall: total / queries.len() as f64,
            qps: queries.len() as f64 / elapsed,
        });
    }
    Ok(out)
}

pub fn write_csv<T: Serialize>(writer: impl Write, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| FannsError::Csv(e.into()))
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(reader: impl Read) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_reader(reader);
    r.deserialize().map(|row| row.map_err(FannsError::from)).collect()
}

pub fn save_csv<T: Serialize>(path: impl AsRef<Path>, rows: &[T]) -> Result<()> {
    let path = path.as_ref();
    let f = std::fs::File::create(path).map_err(|e| FannsError::io(path, e))?;
    write_csv(f, rows)
}

pub fn load_csv<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| FannsError::io(path, e))?;
    read_csv(f)
}

/// `a` dominates `b`: at least as good on both axes and strictly better on one.
pub fn dominates(a: (f64, f64), b: (f64, f64)) -> bool {
    (a.0 >= b.0 && a.1 > b.1) || (a.0 > b.0 && a.1 >= b.1)
}

/// Indexes of the non-dominated (recall, qps) points, by recall ascending
/// (input order on ties). Duplicates survive together.
pub fn pareto_indices(points: &[(f64, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    // recall descending so each point only looks at the already seen prefix
    order.sort_by(|&a, &b| points[b].0.total_cmp(&points[a].0).then(a.cmp(&b)));
    let mut keep = Vec::new();
    let mut best_higher = f64::NEG_INFINITY; // max qps among strictly higher recall
    let mut i = 0;
    while i < order.len() {
        let r = points[order[i]].0;
        let mut j = i;
        while j < order.len() && points[order[j]].0 == r {
            j += 1;
        }
        let group = &order[i..j];
        let group_max = group.iter().map(|&g| points[g].1).fold(f64::NEG_INFINITY, f64::max);
        for &g in group {
            let q = points[g].1;
            if !(q < group_max || q <= best_higher) {
                keep.push(g);
            }
        }
        best_higher = best_higher.max(group_max);
        i = j;
    }
    keep.sort_by(|&a, &b| points[a].0.total_cmp(&points[b].0).then(a.cmp(&b)));
    keep
}

pub fn pareto_frontier(points: &[RunPoint]) -> Vec<RunPoint> {
    let pairs: Vec<(f64, f64)> = points.iter().map(|p| (p.recall, p.qps)).collect();
    pareto_indices(&pairs).into_iter().map(|i| points[i].clone()).collect()
}
