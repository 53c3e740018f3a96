//! Subspace-partitioned grid search for representative build parameters.
//!
//! The build-parameter grid is cut into contiguous blocks. Every config of a
//! block is built on a random sample of the dataset and swept over the search
//! knob in each scenario. The per-scenario curves are averaged, QPS is read
//! off at fixed recall targets, and the config with the lowest rank sum
//! represents the block.

use std::cmp::Ordering;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param, FannsError, Result};
use crate::harness::{run_workload, RunConfig, DEFAULT_THREADS};
use crate::model::{Dataset, DistanceMetric, FilterConstraint};
use crate::strategy::{Algorithm, FannsIndex, Params};
use crate::workload::{generate, hold_out, random_sample, GenerateParams, Workload};

pub const DEFAULT_TARGETS: [f64; 3] = [0.8, 0.9, 0.95];
pub const MAX_DEFAULT_SUBSPACES: usize = 8;

/// Discrete grids per build parameter plus the search-knob sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpace {
    pub build: Vec<(String, Vec<f64>)>,
    pub knobs: Vec<usize>,
}

impl ParamSpace {
    pub fn new(build: Vec<(String, Vec<f64>)>, knobs: Vec<usize>) -> Result<Self> {
        if let Some((name, _)) = build.iter().find(|(_, g)| g.is_empty()) {
            return Err(param(format!("grid for `{name}` is empty")));
        }
        if knobs.is_empty() {
            return Err(param("knob sweep is empty"));
        }
        Ok(ParamSpace { build, knobs })
    }

    /// Number of build-parameter combinations.
    pub fn combinations(&self) -> usize {
        self.build.iter().map(|(_, g)| g.len()).product()
    }

    /// Build configs times knob values.
    pub fn cartesian_size(&self) -> usize {
        self.combinations() * self.knobs.len()
    }

    /// Build configs in row-major order (last axis fastest).
    pub fn configs(&self) -> Vec<Params> {
        let mut out = vec![Params::new()];
        for (name, grid) in &self.build {
            out = out
                .into_iter()
                .flat_map(|p| grid.iter().map(move |&v| p.clone().with(name, v)))
                .collect();
        }
        out
    }

    pub fn contains(&self, p: &Params) -> bool {
        p.iter().count() == self.build.len()
            && self
                .build
                .iter()
                .all(|(name, grid)| p.get(name).is_some_and(|v| grid.contains(&v)))
    }

    /// Default grids scaled to a dataset of `n` records in `dim` dimensions.
    pub fn default_for(algorithm: Algorithm, n: usize, dim: usize) -> ParamSpace {
        let root = (n as f64).sqrt().round().max(1.0);
        let f = |v: &[f64]| v.to_vec();
        let graph_knobs = vec![10, 20, 40, 80, 160, 320];
        let (build, knobs): (Vec<(&str, Vec<f64>)>, Vec<usize>) = match algorithm {
            Algorithm::BruteForce => (vec![], vec![1]),
            Algorithm::AcornGamma => (
                vec![("m", f(&[16.0, 32.0])), ("gamma", f(&[2.0, 4.0, 8.0])), ("ef_construction", f(&[64.0, 128.0]))],
                graph_knobs,
            ),
            Algorithm::Acorn1 => (vec![("m", f(&[16.0, 32.0, 64.0])), ("ef_construction", f(&[64.0, 128.0]))], graph_knobs),
            Algorithm::PostHnsw => (
                vec![("m", f(&[8.0, 16.0, 32.0])), ("ef_construction", f(&[64.0, 128.0]))],
                graph_knobs,
            ),
            Algorithm::PostIvfPq => {
                let m = if dim % 4 == 0 { (dim / 4) as f64 } else { dim as f64 };
                let mut pq = vec![m];
                if dim % 2 == 0 && dim / 2 != dim / 4 {
                    pq.push((dim / 2) as f64);
                }
                (
                    vec![("nlist", f(&[(root / 2.0).max(1.0), root, (root * 2.0).min(n as f64)])), ("pq_m", pq)],
                    vec![1, 2, 4, 8, 16, 32, 64],
                )
            }
            Algorithm::Ung => (
                vec![("r", f(&[16.0, 32.0])), ("l_build", f(&[64.0, 128.0])), ("alpha", f(&[1.0, 1.2]))],
                graph_knobs,
            ),
            Algorithm::FilteredVamana => (
                vec![("r", f(&[16.0, 32.0, 64.0])), ("l_build", f(&[64.0, 128.0])), ("alpha", f(&[1.0, 1.2]))],
                graph_knobs,
            ),
            Algorithm::StitchedVamana => (
                vec![("r_small", f(&[16.0, 32.0])), ("r_stitched", f(&[32.0, 64.0])), ("alpha", f(&[1.0, 1.2]))],
                graph_knobs,
            ),
            Algorithm::Nhq => (vec![("k", f(&[16.0, 24.0, 32.0])), ("diversify", f(&[4.0, 8.0]))], graph_knobs),
            Algorithm::Caps => (
                vec![("k_c", f(&[(root / 4.0).max(1.0), (root / 2.0).max(1.0), root])), ("h", f(&[4.0, 8.0, 16.0]))],
                vec![1, 2, 4, 8, 16, 32],
            ),
        };
        ParamSpace {
            build: build.into_iter().map(|(k, mut g)| {
                g.dedup();
                (k.to_string(), g)
            }).collect(),
            knobs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subspace {
    pub index: usize,
    pub configs: Vec<Params>,
    pub knobs: Vec<usize>,
}

/// Splits the build configs into `n_sub` contiguous blocks of near-equal
/// size; every block keeps the full knob sweep.
pub fn partition_space(space: &ParamSpace, n_sub: usize) -> Result<Vec<Subspace>> {
    if n_sub == 0 {
        return Err(param("n_sub must be at least 1"));
    }
    let configs = space.configs();
    let n = configs.len();
    let parts = if n_sub > n {
        log::warn!("n_sub {n_sub} exceeds the {n} build configurations; using {n}");
        n
    } else {
        n_sub
    };
    Ok((0..parts)
        .map(|i| Subspace {
            index: i,
            configs: configs[i * n / parts..(i + 1) * n / parts].to_vec(),
            knobs: space.knobs.clone(),
        })
        .collect())
}

/// Points sorted by recall ascending.
pub type Curve = Vec<(f64, f64)>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEvaluation {
    pub params: Params,
    /// Per scenario, one (recall, qps) point per knob value.
    pub curves: Vec<(FilterConstraint, Curve)>,
    pub averaged: Curve,
    pub qps_at: Vec<f64>,
    pub valid: bool,
    pub error: Option<String>,
    pub rank: Option<usize>,
}

impl ConfigEvaluation {
    pub fn invalid(params: Params, error: String) -> Self {
        ConfigEvaluation {
            params,
            curves: Vec::new(),
            averaged: Vec::new(),
            qps_at: Vec::new(),
            valid: false,
            error: Some(error),
            rank: None,
        }
    }
}

fn sort_curve(mut c: Curve) -> Curve {
    c.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
    c
}

/// Pointwise mean over curves measured at the same knob values.
pub fn average_curves(curves: &[Curve]) -> Result<Curve> {
    let len = curves.first().map(Vec::len).ok_or_else(|| param("no curves to average"))?;
    if curves.iter().any(|c| c.len() != len) {
        return Err(param("curves have different knob counts"));
    }
    let m = curves.len() as f64;
    Ok(sort_curve(
        (0..len)
            .map(|i| {
                let r = curves.iter().map(|c| c[i].0).sum::<f64>() / m;
                let q = curves.iter().map(|c| c[i].1).sum::<f64>() / m;
                (r, q)
            })
            .collect(),
    ))
}

/// QPS at each recall target, linearly interpolated between the bracketing
/// points. Unreachable targets read 0; targets below the curve clamp to the
/// lowest-recall point.
pub fn interpolate_qps(curve: &[(f64, f64)], targets: &[f64]) -> Result<Vec<f64>> {
    if curve.is_empty() {
        return Err(param("cannot interpolate an empty curve"));
    }
    let c = sort_curve(curve.to_vec());
    let (min_r, max_r) = (c[0].0, c[c.len() - 1].0);
    Ok(targets
        .iter()
        .map(|&t| {
            if t > max_r {
                return 0.0;
            }
            if t <= min_r {
                return c[0].1;
            }
            // first point at or above the target; c[hi - 1] lies below it
            let hi = c.iter().position(|p| p.0 >= t).expect("t <= max recall");
            let (b, a) = (c[hi], c[hi - 1]);
            if b.0 == t {
                return b.1;
            }
            a.1 + (b.1 - a.1) * (t - a.0) / (b.0 - a.0)
        })
        .collect())
}

fn cmp_params(a: &Params, b: &Params) -> Ordering {
    let mut ai = a.iter();
    let mut bi = b.iter();
    loop {
        match (ai.next(), bi.next()) {
            (None, None) => return Ordering::Equal,
            (None, Some(_)) => return Ordering::Less,
            (Some(_), None) => return Ordering::Greater,
            (Some((ka, va)), Some((kb, vb))) => {
                let o = ka.cmp(kb).then(va.total_cmp(&vb));
                if o != Ordering::Equal {
                    return o;
                }
            }
        }
    }
}

/// Ranks valid evaluations per target (1 = highest QPS, equal QPS share a
/// rank), stores the rank sum in `rank`, and returns the index of the
/// config with the lowest sum. Ties go to higher QPS at the last target,
/// then to the lexicographically smaller params.
pub fn rank_and_select(evals: &mut [ConfigEvaluation]) -> Option<usize> {
    let valid: Vec<usize> = (0..evals.len()).filter(|&i| evals[i].valid).collect();
    if valid.is_empty() {
        return None;
    }
    let targets = valid.iter().map(|&i| evals[i].qps_at.len()).max().unwrap_or(0);
    for &i in &valid {
        let mut sum = 0;
        for t in 0..targets {
            let q = evals[i].qps_at.get(t).copied().unwrap_or(0.0);
            let better = valid
                .iter()
                .filter(|&&j| evals[j].qps_at.get(t).copied().unwrap_or(0.0) > q)
                .count();
            sum += better + 1;
        }
        evals[i].rank = Some(sum);
    }
    for e in evals.iter_mut().filter(|e| !e.valid) {
        e.rank = None;
    }
    let last = |e: &ConfigEvaluation| e.qps_at.last().copied().unwrap_or(0.0);
    valid.into_iter().min_by(|&a, &b| {
        let (ea, eb) = (&evals[a], &evals[b]);
        ea.rank
            .cmp(&eb.rank)
            .then(last(eb).total_cmp(&last(ea)))
            .then(cmp_params(&ea.params, &eb.params))
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneConfig {
    pub n_sub: Option<usize>,
    pub sample_fraction: f64,
    pub sample_floor: usize,
    pub queries_per_scenario: usize,
    pub k: usize,
    pub targets: Vec<f64>,
    pub threads: usize,
    pub metric: DistanceMetric,
    pub seed: u64,
}

impl Default for TuneConfig {
    fn default() -> Self {
        TuneConfig {
            n_sub: None,
            sample_fraction: 0.1,
            sample_floor: 5_000,
            queries_per_scenario: 100,
            k: 10,
            targets: DEFAULT_TARGETS.to_vec(),
            threads: DEFAULT_THREADS,
            metric: DistanceMetric::SquaredEuclidean,
            seed: 0,
        }
    }
}

/// Uniform random sample of `max(fraction * n, floor)` records (all of them
/// when that exceeds n), in original order.
pub fn sample_dataset(dataset: &Dataset, fraction: f64, floor: usize, seed: u64) -> Dataset {
    let n = dataset.len();
    let size = ((n as f64 * fraction).round() as usize).max(floor);
    if size >= n {
        return dataset.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids: Vec<u32> = sample(&mut rng, n, size).into_iter().map(|i| i as u32).collect();
    ids.sort_unstable();
    dataset.subset(&ids)
}

/// Builds `params` on `base` and sweeps the knobs over every workload.
pub fn evaluate_config(
    algorithm: Algorithm,
    params: &Params,
    base: &Dataset,
    workloads: &[Workload],
    knobs: &[usize],
    cfg: &TuneConfig,
) -> ConfigEvaluation {
    let index = match FannsIndex::build(base.clone(), algorithm, params, cfg.metric, cfg.seed) {
        Ok(i) => i,
        Err(e) => return ConfigEvaluation::invalid(params.clone(), e.to_string()),
    };
    let mut run = RunConfig::new(knobs.to_vec());
    run.threads = cfg.threads;
    run.warmup = 0;
    let mut curves = Vec::new();
    for w in workloads {
        match run_workload(&index, w, &run) {
            Ok(points) => curves.push((w.scenario, points.iter().map(|p| (p.recall, p.qps)).collect::<Curve>())),
            Err(e) => return ConfigEvaluation::invalid(params.clone(), e.to_string()),
        }
    }
    let raw: Vec<Curve> = curves.iter().map(|(_, c)| c.clone()).collect();
    let averaged = match average_curves(&raw) {
        Ok(c) => c,
        Err(e) => return ConfigEvaluation::invalid(params.clone(), e.to_string()),
    };
    let qps_at = interpolate_qps(&averaged, &cfg.targets).expect("non-empty curve");
    ConfigEvaluation {
        params: params.clone(),
        curves: curves.into_iter().map(|(s, c)| (s, sort_curve(c))).collect(),
        averaged,
        qps_at,
        valid: true,
        error: None,
        rank: None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspaceReport {
    pub index: usize,
    pub evaluations: Vec<ConfigEvaluation>,
    pub selected: Option<Params>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningReport {
    pub algorithm: Algorithm,
    pub sample_size: usize,
    pub scenarios: Vec<FilterConstraint>,
    pub targets: Vec<f64>,
    pub knobs: Vec<usize>,
    pub subspaces: Vec<SubspaceReport>,
    pub warnings: Vec<String>,
}

impl TuningReport {
    /// One representative config per subspace that had a valid one.
    pub fn selected(&self) -> Vec<Params> {
        self.subspaces.iter().filter_map(|s| s.selected.clone()).collect()
    }
}

/// Runs the full search: sample, per-scenario workloads, partition, evaluate,
/// select.
pub fn tune(
    dataset: &Dataset,
    algorithm: Algorithm,
    space: &ParamSpace,
    scenarios: &[FilterConstraint],
    cfg: &TuneConfig,
) -> Result<TuningReport> {
    let mut warnings = Vec::new();
    let mut warn = |m: String| {
        log::warn!("{m}");
        warnings.push(m);
    };
    let sampled = sample_dataset(dataset, cfg.sample_fraction, cfg.sample_floor, cfg.seed);
    let queries = cfg.queries_per_scenario.min(sampled.len() / 2);
    if queries == 0 {
        return Err(param("dataset too small to hold out tuning queries"));
    }
    let (base, pool) = hold_out(&sampled, queries, cfg.seed ^ 0x7a)?;
    let mut workloads = Vec::new();
    for &s in scenarios {
        if !algorithm.supports(s) {
            warn(format!("{algorithm} does not support {s}; scenario skipped"));
            continue;
        }
        let strata = random_sample(&pool.labels, queries, cfg.seed);
        let gp = GenerateParams { scenario: s, k: cfg.k, k_max: cfg.k, guarantee: true, metric: cfg.metric };
        match generate(&base, &pool, &strata, &gp) {
            Ok(w) => workloads.push(w),
            Err(FannsError::EmptyWorkload(m)) => warn(format!("{s}: {m}; scenario skipped")),
            Err(e) => return Err(e),
        }
    }
    if workloads.is_empty() {
        return Err(FannsError::EmptyWorkload("no scenario produced tuning queries".into()));
    }
    let n_sub = cfg.n_sub.unwrap_or_else(|| space.combinations().min(MAX_DEFAULT_SUBSPACES));
    let mut subspaces = Vec::new();
    for sub in partition_space(space, n_sub)? {
        let mut evals: Vec<ConfigEvaluation> = sub
            .configs
            .iter()
            .map(|p| {
                log::info!("tuning {algorithm} subspace {} config {p}", sub.index);
                evaluate_config(algorithm, p, &base, &workloads, &sub.knobs, cfg)
            })
            .collect();
        let selected = rank_and_select(&mut evals).map(|i| evals[i].params.clone());
        if selected.is_none() {
            warn(format!("subspace {} has no valid configuration; skipped", sub.index));
        }
        subspaces.push(SubspaceReport { index: sub.index, evaluations: evals, selected });
    }
    Ok(TuningReport {
        algorithm,
        sample_size: sampled.len(),
        scenarios: workloads.iter().map(|w| w.scenario).collect(),
        targets: cfg.targets.clone(),
        knobs: space.knobs.clone(),
        subspaces,
        warnings,
    })
}
