//! The ten filtered-search strategies behind one build/search interface.

pub mod acorn;
pub mod diskann;
pub mod fixedlen;
mod params;
pub mod postfilter;
pub mod ung;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{param, FannsError, Result};
use crate::filter::{FilterBitmap, InvertedLabelIndex};
use crate::graph::{build_layered_graph, LayeredParams, NeighborSelection, ProximityGraph, PruneParams};
use crate::model::{
    check_constraint, uniform_label_length, Dataset, DistanceMetric, FilterConstraint, FilteredQuery,
    Neighbor,
};
use crate::oracle::scan_bitmap;
use crate::quant::{IvfPqIndex, IvfPqParams};

pub use diskann::{LabelGraphIndex, LabelSubgraph, StitchedParams};
pub use fixedlen::{CapsIndex, FusedMetric, NhqIndex, NhqParams, SubCluster};
pub use params::Params;
pub use postfilter::{PostFilterOutcome, PostFilterParams, Rerank};
pub use ung::{group_by_label_set, LabelNavGraph, UngIndex, UngParams, UngTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    BruteForce,
    AcornGamma,
    Acorn1,
    Ung,
    PostHnsw,
    PostIvfPq,
    FilteredVamana,
    StitchedVamana,
    Nhq,
    Caps,
}

impl Algorithm {
    pub const ALL: [Algorithm; 10] = [
        Algorithm::BruteForce,
        Algorithm::AcornGamma,
        Algorithm::Acorn1,
        Algorithm::Ung,
        Algorithm::PostHnsw,
        Algorithm::PostIvfPq,
        Algorithm::FilteredVamana,
        Algorithm::StitchedVamana,
        Algorithm::Nhq,
        Algorithm::Caps,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::BruteForce => "brute-force",
            Algorithm::AcornGamma => "acorn-gamma",
            Algorithm::Acorn1 => "acorn-1",
            Algorithm::Ung => "ung",
            Algorithm::PostHnsw => "post-hnsw",
            Algorithm::PostIvfPq => "post-ivfpq",
            Algorithm::FilteredVamana => "filtered-vamana",
            Algorithm::StitchedVamana => "stitched-vamana",
            Algorithm::Nhq => "nhq",
            Algorithm::Caps => "caps",
        }
    }

    pub fn supports(self, constraint: FilterConstraint) -> bool {
        match self {
            Algorithm::Nhq | Algorithm::Caps => constraint == FilterConstraint::FixedLengthEquality,
            _ => true,
        }
    }

    /// Build parameters the algorithm accepts.
    pub fn param_keys(self) -> &'static [&'static str] {
        match self {
            Algorithm::BruteForce => &[],
            Algorithm::AcornGamma => &["m", "gamma", "ef_construction"],
            Algorithm::Acorn1 => &["m", "ef_construction"],
            Algorithm::PostHnsw => &["m", "ef_construction", "growth", "l_max"],
            Algorithm::PostIvfPq => &["nlist", "pq_m", "growth", "nprobe_max", "rerank", "full_rerank", "train_size"],
            Algorithm::Ung => &["r", "l_build", "alpha", "cross"],
            Algorithm::FilteredVamana => &["r", "l_build", "alpha"],
            Algorithm::StitchedVamana => &["r_small", "l_small", "r_stitched", "alpha"],
            Algorithm::Nhq => &["k", "iterations", "diversify", "lambda"],
            Algorithm::Caps => &["k_c", "h"],
        }
    }

    /// What the search-time knob controls.
    pub fn knob_name(self) -> &'static str {
        match self {
            Algorithm::BruteForce => "none",
            Algorithm::PostIvfPq => "nprobe",
            Algorithm::Caps => "nprobe_clusters",
            _ => "l",
        }
    }

    /// Strategies whose query path consumes a filter bitmap.
    pub fn uses_bitmap(self) -> bool {
        matches!(
            self,
            Algorithm::BruteForce
                | Algorithm::AcornGamma
                | Algorithm::Acorn1
                | Algorithm::PostHnsw
                | Algorithm::PostIvfPq
        )
    }

    /// Whether building reads record labels.
    pub fn needs_labels(self) -> bool {
        !matches!(
            self,
            Algorithm::AcornGamma | Algorithm::Acorn1 | Algorithm::PostHnsw | Algorithm::PostIvfPq
        )
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = FannsError;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == key)
            .or(match key.as_str() {
                "acorn-γ" | "acorngamma" => Some(Algorithm::AcornGamma),
                "acorn1" => Some(Algorithm::Acorn1),
                "hnsw" => Some(Algorithm::PostHnsw),
                "ivfpq" | "ivf-pq" | "post-ivf-pq" => Some(Algorithm::PostIvfPq),
                "bf" | "prefilter" => Some(Algorithm::BruteForce),
                _ => None,
            })
            .ok_or_else(|| {
                param(format!(
                    "unknown algorithm `{s}` (expected one of: {})",
                    Algorithm::ALL.map(Algorithm::name).join(", ")
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) enum StrategyIndex {
    BruteForce,
    Acorn {
        graph: ProximityGraph,
        two_hop: bool,
        /// ACORN-γ scans the bitmap exactly when fewer than n/γ records pass.
        scan_gamma: Option<usize>,
    },
    PostHnsw {
        graph: ProximityGraph,
        growth: f64,
        l_max: usize,
    },
    PostIvfPq {
        ivf: IvfPqIndex,
        growth: f64,
        nprobe_max: usize,
        rerank: Rerank,
    },
    Ung(UngIndex),
    FilteredVamana(LabelGraphIndex),
    StitchedVamana(LabelGraphIndex),
    Nhq(NhqIndex),
    Caps(CapsIndex),
}

/// Results of one query.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SearchOutput {
    /// Ascending by exact distance.
    pub neighbors: Vec<Neighbor>,
    /// Post-filter expansion rounds; 1 for single-pass strategies.
    pub rounds: usize,
}

impl SearchOutput {
    pub fn ids(&self) -> Vec<u32> {
        self.neighbors.iter().map(|n| n.id).collect()
    }
}

/// A built index together with the dataset it serves.
#[derive(Debug, Clone)]
pub struct FannsIndex {
    pub(crate) algorithm: Algorithm,
    pub(crate) params: Params,
    pub(crate) metric: DistanceMetric,
    pub(crate) seed: u64,
    pub(crate) dataset: Dataset,
    pub(crate) strategy: StrategyIndex,
    pub(crate) inverted: InvertedLabelIndex,
    pub(crate) uniform_length: Option<usize>,
}

fn default_ivf_m(dim: usize) -> usize {
    // four dimensions per code byte when that divides evenly
    if dim % 4 == 0 {
        dim / 4
    } else {
        dim
    }
}

impl FannsIndex {
    pub fn build(
        dataset: Dataset,
        algorithm: Algorithm,
        params: &Params,
        metric: DistanceMetric,
        seed: u64,
    ) -> Result<Self> {
        params.check_keys(algorithm.param_keys())?;
        let n = dataset.len();
        if n == 0 {
            return Err(param("cannot index an empty dataset"));
        }
        let vectors = &dataset.vectors;
        let labels = &dataset.labels;
        let p = params;
        let strategy = match algorithm {
            Algorithm::BruteForce => StrategyIndex::BruteForce,
            Algorithm::AcornGamma => {
                let gamma = p.usize_or("gamma", 4)?;
                StrategyIndex::Acorn {
                    graph: acorn::build_acorn_gamma(
                        vectors,
                        metric,
                        p.usize_or("m", 16)?,
                        gamma,
                        p.usize_or("ef_construction", 100)?,
                        seed,
                    )?,
                    two_hop: false,
                    scan_gamma: Some(gamma),
                }
            }
            Algorithm::Acorn1 => StrategyIndex::Acorn {
                graph: acorn::build_acorn_one(
                    vectors,
                    metric,
                    p.usize_or("m", 16)?,
                    p.usize_or("ef_construction", 100)?,
                    seed,
                )?,
                two_hop: true,
                scan_gamma: None,
            },
            Algorithm::PostHnsw => {
                let lp = LayeredParams::new(
                    p.usize_or("m", 16)?,
                    p.usize_or("ef_construction", 100)?,
                    NeighborSelection::Heuristic,
                    seed,
                );
                StrategyIndex::PostHnsw {
                    graph: build_layered_graph(vectors, metric, &lp)?,
                    growth: p.get("growth").unwrap_or(2.0),
                    l_max: match p.usize_or("l_max", 0)? {
                        0 => n,
                        l => l,
                    },
                }
            }
            Algorithm::PostIvfPq => {
                let default_nlist = ((n as f64).sqrt().round() as usize).clamp(1, n);
                let nlist = p.usize_or("nlist", default_nlist)?;
                let mut ip = IvfPqParams::new(nlist, p.usize_or("pq_m", default_ivf_m(dataset.dim()))?, seed);
                ip.train_size = p.usize_or("train_size", ip.train_size)?;
                let rerank = if p.usize_or("full_rerank", 0)? > 0 {
                    Rerank::All
                } else {
                    Rerank::Factor(p.usize_or("rerank", 4)?.max(1))
                };
                StrategyIndex::PostIvfPq {
                    ivf: IvfPqIndex::build(vectors, &ip)?,
                    growth: p.get("growth").unwrap_or(2.0),
                    nprobe_max: match p.usize_or("nprobe_max", 0)? {
                        0 => nlist,
                        m => m.min(nlist),
                    },
                    rerank,
                }
            }
            Algorithm::Ung => StrategyIndex::Ung(UngIndex::build(
                vectors,
                labels,
                metric,
                &UngParams {
                    prune: PruneParams::new(
                        p.f32_or("alpha", 1.2)?,
                        p.usize_or("r", 32)?,
                        p.usize_or("l_build", 64)?,
                    )?,
                    cross: p.usize_or("cross", 3)?,
                },
                seed,
            )?),
            Algorithm::FilteredVamana => StrategyIndex::FilteredVamana(LabelGraphIndex::build_filtered(
                vectors,
                labels,
                metric,
                &PruneParams::new(p.f32_or("alpha", 1.2)?, p.usize_or("r", 32)?, p.usize_or("l_build", 64)?)?,
                seed,
            )?),
            Algorithm::StitchedVamana => StrategyIndex::StitchedVamana(LabelGraphIndex::build_stitched(
                vectors,
                labels,
                metric,
                &StitchedParams {
                    alpha: p.f32_or("alpha", 1.2)?,
                    r_small: p.usize_or("r_small", 32)?,
                    l_small: p.usize_or("l_small", 64)?,
                    r_stitched: p.usize_or("r_stitched", 48)?,
                },
                seed,
            )?),
            Algorithm::Nhq => StrategyIndex::Nhq(NhqIndex::build(
                vectors,
                labels,
                metric,
                &NhqParams {
                    k: p.usize_or("k", 24)?,
                    iterations: p.usize_or("iterations", 10)?,
                    diversify: p.usize_or("diversify", 8)?,
                    lambda: p.get("lambda").filter(|&l| l >= 0.0).map(|l| l as f32),
                },
                seed,
            )?),
            Algorithm::Caps => {
                let default_kc = ((n as f64).sqrt().round() as usize / 2).clamp(1, n);
                StrategyIndex::Caps(CapsIndex::build(
                    vectors,
                    labels,
                    p.usize_or("k_c", default_kc)?.min(n),
                    p.usize_or("h", 8)?,
                    seed,
                )?)
            }
        };
        if let StrategyIndex::PostHnsw { growth, .. } | StrategyIndex::PostIvfPq { growth, .. } = &strategy {
            if !(*growth > 1.0) {
                return Err(param(format!("growth factor must exceed 1, got {growth}")));
            }
        }
        Ok(Self::assemble(algorithm, params.clone(), metric, seed, dataset, strategy))
    }

    pub(crate) fn assemble(
        algorithm: Algorithm,
        params: Params,
        metric: DistanceMetric,
        seed: u64,
        dataset: Dataset,
        strategy: StrategyIndex,
    ) -> Self {
        let inverted = InvertedLabelIndex::build(&dataset.labels);
        let uniform_length = uniform_label_length(&dataset.labels);
        FannsIndex {
            algorithm,
            params,
            metric,
            seed,
            dataset,
            strategy,
            inverted,
            uniform_length,
        }
    }

    pub fn algorithm(&self) -> Algorithm {
        self.algorithm
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn metric(&self) -> DistanceMetric {
        self.metric
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn inverted_index(&self) -> &InvertedLabelIndex {
        &self.inverted
    }

    pub fn len(&self) -> usize {
        self.dataset.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dataset.is_empty()
    }

    /// The query's filter bitmap over this index's records.
    pub fn filter_map(&self, query: &FilteredQuery) -> Result<FilterBitmap> {
        self.inverted
            .filter_map(&query.labels, query.constraint, &self.dataset.labels)
    }

    pub fn check_query(&self, query: &FilteredQuery) -> Result<()> {
        if query.embedding.dim() != self.dataset.dim() {
            return Err(FannsError::DimensionMismatch {
                expected: self.dataset.dim(),
                actual: query.embedding.dim(),
            });
        }
        if !self.algorithm.supports(query.constraint) {
            return Err(FannsError::UnsupportedScenario {
                algorithm: self.algorithm.name().to_string(),
                constraint: query.constraint,
            });
        }
        if query.constraint == FilterConstraint::FixedLengthEquality && self.uniform_length.is_none() {
            check_constraint(&self.dataset.labels, query.constraint)?;
        }
        Ok(())
    }

    pub fn search(&self, query: &FilteredQuery, knob: usize) -> Result<SearchOutput> {
        self.search_with(query, knob, None)
    }

    /// Like [`FannsIndex::search`], reusing a precomputed bitmap for
    /// strategies that need one.
    pub fn search_with(
        &self,
        query: &FilteredQuery,
        knob: usize,
        bitmap: Option<&FilterBitmap>,
    ) -> Result<SearchOutput> {
        self.check_query(query)?;
        let owned;
        let bitmap = match bitmap {
            Some(b) => b,
            None if self.algorithm.uses_bitmap() => {
                owned = self.filter_map(query)?;
                &owned
            }
            None => {
                owned = FilterBitmap::zeros(0);
                &owned
            }
        };
        let ds = &self.dataset;
        let (q, k, m) = (query.vector(), query.k, self.metric);
        let knob = knob.max(1);
        let single = |neighbors: Vec<Neighbor>| SearchOutput { neighbors, rounds: 1 };
        Ok(match &self.strategy {
            StrategyIndex::BruteForce => single(scan_bitmap(ds, bitmap, q, k, m).neighbors),
            StrategyIndex::Acorn { graph, two_hop, scan_gamma } => {
                if scan_gamma.is_some_and(|g| bitmap.count() * g < ds.len()) {
                    single(scan_bitmap(ds, bitmap, q, k, m).neighbors)
                } else {
                    single(acorn::acorn_search(graph, &ds.vectors, m, q, bitmap, k, knob, *two_hop))
                }
            }
            StrategyIndex::PostHnsw { graph, growth, l_max } => {
                let pp = PostFilterParams::new(knob.max(k), *growth, *l_max)?;
                let out = postfilter::hnsw_postfilter(graph, &ds.vectors, m, q, bitmap, k, &pp);
                SearchOutput { neighbors: out.neighbors, rounds: out.rounds }
            }
            StrategyIndex::PostIvfPq { ivf, growth, nprobe_max, rerank } => {
                let pp = PostFilterParams::new(knob.min(*nprobe_max), *growth, *nprobe_max)?;
                let out = postfilter::ivf_postfilter(ivf, &ds.vectors, m, q, bitmap, k, *rerank, &pp);
                SearchOutput { neighbors: out.neighbors, rounds: out.rounds }
            }
            StrategyIndex::Ung(u) => {
                single(u.search(&ds.vectors, m, q, &query.labels, query.constraint, k, knob, None))
            }
            StrategyIndex::FilteredVamana(g) | StrategyIndex::StitchedVamana(g) => single(g.search(
                &ds.vectors,
                &ds.labels,
                m,
                q,
                &query.labels,
                query.constraint,
                k,
                knob,
            )),
            StrategyIndex::Nhq(nhq) => single(nhq.search(&ds.vectors, &ds.labels, q, &query.labels, k, knob)),
            StrategyIndex::Caps(caps) => {
                single(caps.search(&ds.vectors, &ds.labels, m, q, &query.labels, k, knob))
            }
        })
    }

    /// Post-filter scope cap, if this is a post-filter index.
    pub fn postfilter_params(&self, knob: usize, k: usize) -> Option<PostFilterParams> {
        match &self.strategy {
            StrategyIndex::PostHnsw { growth, l_max, .. } => PostFilterParams::new(knob.max(1).max(k), *growth, *l_max).ok(),
            StrategyIndex::PostIvfPq { growth, nprobe_max, .. } => {
                PostFilterParams::new(knob.max(1).min(*nprobe_max), *growth, *nprobe_max).ok()
            }
            _ => None,
        }
    }

    pub fn ung(&self) -> Option<&UngIndex> {
        match &self.strategy {
            StrategyIndex::Ung(u) => Some(u),
            _ => None,
        }
    }

    pub fn label_graph(&self) -> Option<&LabelGraphIndex> {
        match &self.strategy {
            StrategyIndex::FilteredVamana(g) | StrategyIndex::StitchedVamana(g) => Some(g),
            _ => None,
        }
    }

    pub fn ivf(&self) -> Option<&IvfPqIndex> {
        match &self.strategy {
            StrategyIndex::PostIvfPq { ivf, .. } => Some(ivf),
            _ => None,
        }
    }

    pub fn caps(&self) -> Option<&CapsIndex> {
        match &self.strategy {
            StrategyIndex::Caps(c) => Some(c),
            _ => None,
        }
    }

    pub fn nhq(&self) -> Option<&NhqIndex> {
        match &self.strategy {
            StrategyIndex::Nhq(n) => Some(n),
            _ => None,
        }
    }

    /// The layered graph of the ACORN and post-filter HNSW strategies.
    pub fn layered_graph(&self) -> Option<&ProximityGraph> {
        match &self.strategy {
            StrategyIndex::Acorn { graph, .. } | StrategyIndex::PostHnsw { graph, .. } => Some(graph),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Embedding, LabelSet};

    #[test]
    fn algorithm_names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        assert_eq!("ACORN_1".parse::<Algorithm>().unwrap(), Algorithm::Acorn1);
        assert!("nope".parse::<Algorithm>().is_err());
    }

    #[test]
    fn unknown_param_rejected() {
        let ds = crate::fixtures::seven_records();
        let p = Params::new().with("bogus", 1.0);
        assert!(FannsIndex::build(ds, Algorithm::Acorn1, &p, DistanceMetric::SquaredEuclidean, 0).is_err());
    }

    #[test]
    fn acorn_gamma_scans_below_one_over_gamma() {
        use crate::workload::gaussian_mixture;
        let n = 400;
        let vectors = gaussian_mixture(n, 8, 4, 0.5, 1).unwrap();
        // label 1 on 1 record in 20: below 1/8, so the search is an exact scan
        let labels = (0..n).map(|i| LabelSet::new(if i % 20 == 0 { vec![0, 1] } else { vec![0] })).collect();
        let ds = Dataset::new(vectors, labels).unwrap();
        let m = DistanceMetric::SquaredEuclidean;
        let idx = FannsIndex::build(ds.clone(), Algorithm::AcornGamma, &Params::new().with("gamma", 8.0), m, 0).unwrap();
        let oracle = crate::filter::InvertedLabelIndex::build(&ds.labels);
        for i in 0..20 {
            let q = FilteredQuery::new(
                Embedding::new(ds.vectors.get(i * 7).to_vec()).unwrap(),
                LabelSet::new([1]),
                5,
                FilterConstraint::Containment,
            )
            .unwrap();
            let want = crate::oracle::exact_filtered_knn(&ds, &oracle, &q, m).unwrap().neighbors;
            assert_eq!(idx.search(&q, 1).unwrap().neighbors, want);
        }
    }
}
