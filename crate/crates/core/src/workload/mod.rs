//! Query workloads: held-out queries, strata and exact ground truth.
//!
//! A workload directory holds four files:
//!
//! ```text
//! manifest.json     scenario, k, k_max, metric, strata, per-query stratum and match count
//! queries.fvecs     query embeddings (fvecs, see io::read_fvecs)
//! queries.labels    query label sets, one comma-separated line per query
//! groundtruth.bin   per query: i32 count, then count x (i32 id, f32 distance)
//! ```
//!
//! All binary values are little-endian.

pub mod io;
pub mod stratify;
pub mod synth;

use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, FannsError, Result};
use crate::filter::InvertedLabelIndex;
use crate::model::{
    Dataset, DistanceMetric, Embedding, FilterConstraint, FilteredQuery, GroundTruth, LabelSet,
};
use crate::oracle::scan_bitmap;

pub use io::{
    load_labels, read_fvecs, read_ground_truth, read_labels, remap_labels, write_fvecs,
    write_ground_truth, write_labels, LabelMapping,
};
pub use stratify::{
    random_sample, stratify_by_length, stratify_by_selectivity, Stratification, Stratum,
    DEFAULT_PERCENTILES,
};
pub use synth::{gaussian_mixture, gen_fixed_length_labels, selectivity_labels, SelectivityLayout};

pub const DEFAULT_K_MAX: usize = 100;

const MANIFEST: &str = "manifest.json";
const QUERIES: &str = "queries.fvecs";
const QUERY_LABELS: &str = "queries.labels";
const GROUND_TRUTH: &str = "groundtruth.bin";

#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadQuery {
    pub query: FilteredQuery,
    pub stratum: String,
    /// Base records passing the filter.
    pub satisfied_count: usize,
    pub truth: GroundTruth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumInfo {
    pub name: String,
    pub detail: String,
    pub requested: usize,
    pub kept: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Workload {
    pub scenario: FilterConstraint,
    pub k: usize,
    pub k_max: usize,
    pub guarantee: bool,
    pub metric: DistanceMetric,
    pub scheme: String,
    pub strata: Vec<StratumInfo>,
    pub queries: Vec<WorkloadQuery>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    scenario: FilterConstraint,
    k: usize,
    k_max: usize,
    guarantee: bool,
    metric: DistanceMetric,
    scheme: String,
    dim: usize,
    strata: Vec<StratumInfo>,
    queries: Vec<QueryMeta>,
}

#[derive(Serialize, Deserialize)]
struct QueryMeta {
    stratum: String,
    satisfied_count: usize,
}

/// Randomly moves `count` records out of `dataset`: (indexed base, query pool).
pub fn hold_out(dataset: &Dataset, count: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    if count >= dataset.len() {
        return Err(param(format!(
            "cannot hold out {count} of {} records",
            dataset.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut held = vec![false; dataset.len()];
    for i in sample(&mut rng, dataset.len(), count) {
        held[i] = true;
    }
    let (pool, base): (Vec<u32>, Vec<u32>) = (0..dataset.len() as u32).partition(|&i| held[i as usize]);
    Ok((dataset.subset(&base), dataset.subset(&pool)))
}

/// Turns the strata of a candidate pool into filtered queries.
pub fn queries_from_strata(
    pool: &Dataset,
    strata: &Stratification,
    scenario: FilterConstraint,
    k: usize,
) -> Result<Vec<(FilteredQuery, String)>> {
    let mut out = Vec::with_capacity(strata.total());
    for s in &strata.strata {
        for &m in &s.members {
            let rec = pool.record(m);
            out.push((FilteredQuery::new(rec.embedding, rec.labels, k, scenario)?, s.name.clone()));
        }
    }
    Ok(out)
}

/// Computes `k_max`-deep exact truth for every query. Under `guarantee`,
/// queries with fewer than `k_max` matches are dropped; otherwise those with
/// fewer than their own k are.
pub fn attach_ground_truth(
    queries: Vec<(FilteredQuery, String)>,
    dataset: &Dataset,
    scenario: FilterConstraint,
    k_max: usize,
    guarantee: bool,
    metric: DistanceMetric,
) -> Result<Workload> {
    if k_max == 0 {
        return Err(param("k_max must be at least 1"));
    }
    let k = queries.first().map(|(q, _)| q.k).unwrap_or(10);
    if let Some((q, _)) = queries.iter().find(|(q, _)| q.k > k_max || q.constraint != scenario) {
        return Err(param(format!(
            "query (k={}, {}) does not fit a {scenario} workload with k_max={k_max}",
            q.k, q.constraint
        )));
    }
    if let Some((q, _)) = queries.iter().find(|(q, _)| q.embedding.dim() != dataset.dim()) {
        return Err(FannsError::DimensionMismatch { expected: dataset.dim(), actual: q.embedding.dim() });
    }
    let index = InvertedLabelIndex::build(&dataset.labels);
    let requested = queries.len();
    let computed: Vec<Option<WorkloadQuery>> = queries
        .into_par_iter()
        .map(|(query, stratum)| {
            let bitmap = index.filter_map(&query.labels, scenario, &dataset.labels)?;
            let res = scan_bitmap(dataset, &bitmap, query.vector(), k_max, metric);
            let need = if guarantee { k_max } else { query.k };
            Ok((res.satisfied_count >= need).then(|| WorkloadQuery {
                truth: GroundTruth::from_neighbors(&res.neighbors),
                satisfied_count: res.satisfied_count,
                query,
                stratum,
            }))
        })
        .collect::<Result<_>>()?;
    let kept: Vec<WorkloadQuery> = computed.into_iter().flatten().collect();
    if kept.is_empty() {
        return Err(FannsError::EmptyWorkload(format!(
            "all {requested} queries have too few matches for k_max={k_max}"
        )));
    }
    if kept.len() < requested {
        log::info!("dropped {} of {requested} queries with too few matches", requested - kept.len());
    }
    Ok(Workload {
        scenario,
        k,
        k_max,
        guarantee,
        metric,
        scheme: "custom".into(),
        strata: Vec::new(),
        queries: kept,
    })
}

/// Parameters for [`generate`].
#[derive(Debug, Clone, PartialEq)]
pub struct GenerateParams {
    pub scenario: FilterConstraint,
    pub k: usize,
    pub k_max: usize,
    pub guarantee: bool,
    pub metric: DistanceMetric,
}

impl Default for GenerateParams {
    fn default() -> Self {
        GenerateParams {
            scenario: FilterConstraint::Containment,
            k: 10,
            k_max: DEFAULT_K_MAX,
            guarantee: true,
            metric: DistanceMetric::SquaredEuclidean,
        }
    }
}

/// Queries from `strata` over `pool`, with truth against `base`.
pub fn generate(base: &Dataset, pool: &Dataset, strata: &Stratification, params: &GenerateParams) -> Result<Workload> {
    let queries = queries_from_strata(pool, strata, params.scenario, params.k)?;
    let mut w = attach_ground_truth(queries, base, params.scenario, params.k_max, params.guarantee, params.metric)?;
    w.k = params.k;
    w.scheme = strata.scheme.clone();
    w.strata = strata
        .strata
        .iter()
        .map(|s| StratumInfo {
            name: s.name.clone(),
            detail: s.detail.clone(),
            requested: s.requested,
            kept: w.queries.iter().filter(|q| q.stratum == s.name).count(),
        })
        .collect();
    Ok(w)
}

/// Synthetic fixed-length dataset plus its equality workload: Gaussian-mixture
/// embeddings, i.i.d. offset-encoded label vectors, and `n_queries` held-out
/// records as queries.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedLengthSpec {
    pub n: usize,
    pub dim: usize,
    pub length: usize,
    pub values: usize,
    pub n_queries: usize,
    pub k: usize,
    pub k_max: usize,
}

pub fn synthetic_fixed_length(spec: &FixedLengthSpec, metric: DistanceMetric, seed: u64) -> Result<(Dataset, Workload)> {
    let total = spec.n + spec.n_queries;
    let vectors = gaussian_mixture(total, spec.dim, 64, 0.6, seed)?;
    let labels = gen_fixed_length_labels(total, spec.length, spec.values, seed ^ 0xf1)?;
    let all = Dataset::new(vectors, labels)?;
    let (base, pool) = hold_out(&all, spec.n_queries, seed ^ 0x9e)?;
    let strata = random_sample(&pool.labels, spec.n_queries, seed);
    let params = GenerateParams {
        scenario: FilterConstraint::FixedLengthEquality,
        k: spec.k,
        k_max: spec.k_max,
        guarantee: true,
        metric,
    };
    let mut w = generate(&base, &pool, &strata, &params)?;
    w.scheme = format!("fixed-length-{}x{}", spec.length, spec.values);
    Ok((base, w))
}

impl Workload {
    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.queries.first().map_or(0, |q| q.query.embedding.dim())
    }

    pub fn truths(&self) -> Vec<GroundTruth> {
        self.queries.iter().map(|q| q.truth.clone()).collect()
    }

    /// The same queries asking for a different k (at most `k_max`).
    pub fn with_k(&self, k: usize) -> Result<Workload> {
        if k == 0 || k > self.k_max {
            return Err(param(format!("k must be in 1..={}, got {k}", self.k_max)));
        }
        let mut w = self.clone();
        w.k = k;
        for q in &mut w.queries {
            q.query.k = k;
        }
        Ok(w)
    }

    /// Restricts the workload to one stratum.
    pub fn stratum(&self, name: &str) -> Workload {
        let mut w = self.clone();
        w.queries.retain(|q| q.stratum == name);
        w.strata.retain(|s| s.name == name);
        w
    }

    /// Recomputes the truth of a `fraction` sample of queries with a fresh
    /// oracle run and compares ids.
    pub fn validate(&self, dataset: &Dataset, fraction: f64, seed: u64) -> Result<()> {
        let n = self.queries.len();
        let count = ((n as f64 * fraction).ceil() as usize).clamp(n.min(1), n);
        let index = InvertedLabelIndex::build(&dataset.labels);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in sample(&mut rng, n, count) {
            let q = &self.queries[i];
            let bitmap = index.filter_map(&q.query.labels, self.scenario, &dataset.labels)?;
            let fresh = scan_bitmap(dataset, &bitmap, q.query.vector(), self.k_max, self.metric);
            if GroundTruth::from_neighbors(&fresh.neighbors).ids != q.truth.ids {
                return Err(FannsError::Mismatch(format!("ground truth of query {i} is stale")));
            }
        }
        Ok(())
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| FannsError::io(dir, e))?;
        let manifest = Manifest {
            scenario: self.scenario,
            k: self.k,
            k_max: self.k_max,
            guarantee: self.guarantee,
            metric: self.metric,
            scheme: self.scheme.clone(),
            dim: self.dim(),
            strata: self.strata.clone(),
            queries: self
                .queries
                .iter()
                .map(|q| QueryMeta { stratum: q.stratum.clone(), satisfied_count: q.satisfied_count })
                .collect(),
        };
        let path = dir.join(MANIFEST);
        fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| FannsError::io(&path, e))?;
        let mut vectors = crate::model::Vectors::empty(self.dim());
        for q in &self.queries {
            vectors.push(q.query.vector())?;
        }
        write_fvecs(dir.join(QUERIES), &vectors)?;
        let labels: Vec<LabelSet> = self.queries.iter().map(|q| q.query.labels.clone()).collect();
        write_labels(dir.join(QUERY_LABELS), &labels)?;
        write_ground_truth(dir.join(GROUND_TRUTH), &self.truths())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Workload> {
        let dir = dir.as_ref();
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| FannsError::io(&path, e))?;
        let m: Manifest = serde_json::from_str(&text)?;
        let vectors = read_fvecs(dir.join(QUERIES))?;
        let labels = read_labels(dir.join(QUERY_LABELS))?;
        let truths = read_ground_truth(dir.join(GROUND_TRUTH))?;
        let n = m.queries.len();
        if vectors.len() != n || labels.len() != n || truths.len() != n {
            return Err(FannsError::Format {
                path: dir.to_path_buf(),
                location: "workload files".into(),
                message: format!(
                    "manifest lists {n} queries; found {} vectors, {} label lines, {} truths",
                    vectors.len(),
                    labels.len(),
                    truths.len()
                ),
            });
        }
        let queries = m
            .queries
            .into_iter()
            .zip(vectors.iter())
            .zip(labels)
            .zip(truths)
            .map(|(((meta, v), l), truth)| {
                Ok(WorkloadQuery {
                    query: FilteredQuery::new(Embedding::new(v.to_vec())?, l, m.k, m.scenario)?,
                    stratum: meta.stratum,
                    satisfied_count: meta.satisfied_count,
                    truth,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Workload {
            scenario: m.scenario,
            k: m.k,
            k_max: m.k_max,
            guarantee: m.guarantee,
            metric: m.metric,
            scheme: m.scheme,
            strata: m.strata,
            queries,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Vectors;

    fn small(n: usize, seed: u64) -> Dataset {
        let v = gaussian_mixture(n, 8, 4, 0.2, seed).unwrap();
        let (labels, _) = selectivity_labels(n, 3, &[0.2], seed).unwrap();
        Dataset::new(v, labels).unwrap()
    }

    #[test]
    fn guarantee_flag_drops_thin_queries() {
        let base = Dataset::new(
            Vectors::new(1, (0..60).map(|i| i as f32).collect()).unwrap(),
            (0..60).map(|i| LabelSet::new([if i < 50 { 1 } else { 2 }])).collect(),
        )
        .unwrap();
        let q = |l: u32| {
            (
                FilteredQuery::new(Embedding::new(vec![0.0]).unwrap(), LabelSet::new([l]), 1, FilterConstraint::Containment).unwrap(),
                "s".to_string(),
            )
        };
        let w = attach_ground_truth(vec![q(1), q(2)], &base, FilterConstraint::Containment, 100, true, DistanceMetric::SquaredEuclidean);
        assert!(matches!(w, Err(FannsError::EmptyWorkload(_))));
        let w = attach_ground_truth(vec![q(1), q(2)], &base, FilterConstraint::Containment, 20, true, DistanceMetric::SquaredEuclidean).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w.queries[0].satisfied_count, 50);
        let w = attach_ground_truth(vec![q(1), q(2), q(3)], &base, FilterConstraint::Containment, 1, true, DistanceMetric::SquaredEuclidean).unwrap();
        assert_eq!(w.len(), 2);
    }

    #[test]
    fn generated_workload_round_trips() {
        let all = small(2000, 3);
        let (base, pool) = hold_out(&all, 200, 1).unwrap();
        assert_eq!(base.len() + pool.len(), 2000);
        let strata = stratify_by_length(&pool.labels, 2, 40, 2).unwrap();
        let w = generate(&base, &pool, &strata, &GenerateParams::default()).unwrap();
        assert!(w.queries.iter().all(|q| q.truth.len() == DEFAULT_K_MAX));
        w.validate(&base, 0.05, 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        w.save(dir.path()).unwrap();
        assert_eq!(Workload::load(dir.path()).unwrap(), w);
        assert_eq!(w.with_k(5).unwrap().queries[0].query.k, 5);
        assert!(w.with_k(101).is_err());
    }

    #[test]
    fn fixed_length_workload_covers_the_grid() {
        let spec = FixedLengthSpec { n: 20_000, dim: 8, length: 4, values: 3, n_queries: 400, k: 10, k_max: 100 };
        let (base, w) = synthetic_fixed_length(&spec, DistanceMetric::SquaredEuclidean, 11).unwrap();
        let cells: std::collections::BTreeSet<&LabelSet> = w.queries.iter().map(|q| &q.query.labels).collect();
        assert_eq!(cells.len(), 81);
        assert_eq!(base.len(), 20_000);
        assert!(w.queries.iter().all(|q| q.query.constraint == FilterConstraint::FixedLengthEquality));
    }
}
