//! Search-then-filter: unconstrained search, then verification, widening the
//! scope until k valid results turn up or the cap is reached.

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::filter::FilterBitmap;
use crate::graph::{BeamParams, ProximityGraph};
use crate::model::{Neighbor, Vectors, DistanceMetric};
use crate::oracle::top_k;
use crate::quant::IvfPqIndex;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PostFilterParams {
    pub initial: usize,
    pub growth: f64,
    pub max: usize,
}

impl PostFilterParams {
    pub fn new(initial: usize, growth: f64, max: usize) -> Result<Self> {
        if initial == 0 {
            return Err(param("initial scope must be positive"));
        }
        if !(growth > 1.0) {
            return Err(param(format!("growth factor must exceed 1, got {growth}")));
        }
        Ok(PostFilterParams {
            initial,
            growth,
            max: max.max(initial),
        })
    }

    /// Upper bound on rounds: ⌈log_g(max / initial)⌉ + 1.
    pub fn round_bound(&self) -> usize {
        let ratio = self.max as f64 / self.initial as f64;
        (ratio.ln() / self.growth.ln()).ceil().max(0.0) as usize + 1
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PostFilterOutcome {
    pub neighbors: Vec<Neighbor>,
    pub rounds: usize,
    pub scope: usize,
}

/// Restart loop. `search(scope)` returns the valid candidates found at that
/// scope, ascending by distance.
pub fn postfilter_loop<F>(k: usize, params: &PostFilterParams, mut search: F) -> PostFilterOutcome
where
    F: FnMut(usize) -> Vec<Neighbor>,
{
    let mut scope = params.initial.min(params.max);
    let mut rounds = 0;
    loop {
        rounds += 1;
        let mut valid = search(scope);
        if valid.len() >= k || scope >= params.max {
            valid.truncate(k);
            return PostFilterOutcome { neighbors: valid, rounds, scope };
        }
        let grown = (scope as f64 * params.growth).ceil() as usize;
        scope = grown.max(scope + 1).min(params.max);
    }
}

/// Post-filter over the layered graph; the scope is the beam width.
pub fn hnsw_postfilter(
    graph: &ProximityGraph,
    vectors: &Vectors,
    metric: DistanceMetric,
    query: &[f32],
    bitmap: &FilterBitmap,
    k: usize,
    params: &PostFilterParams,
) -> PostFilterOutcome {
    let dist = |i: u32| metric.eval(query, vectors.get(i as usize));
    postfilter_loop(k, params, |scope| {
        graph
            .layered_search(dist, &BeamParams::unfiltered(scope.max(k)))
            .results
            .into_iter()
            .filter(|n| bitmap.contains(n.id))
            .collect()
    })
}

/// How many valid ADC candidates get exact distances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rerank {
    /// `factor * k` best by ADC.
    Factor(usize),
    All,
}

/// Post-filter over IVF-PQ; the scope is nprobe. Valid members of the probed
/// lists are ordered by ADC and the best few reranked exactly.
#[allow(clippy::too_many_arguments)]
pub fn ivf_postfilter(
    ivf: &IvfPqIndex,
    vectors: &Vectors,
    metric: DistanceMetric,
    query: &[f32],
    bitmap: &FilterBitmap,
    k: usize,
    rerank: Rerank,
    params: &PostFilterParams,
) -> PostFilterOutcome {
    postfilter_loop(k, params, |nprobe| {
        let valid = ivf
            .probe(query, nprobe, metric)
            .into_iter()
            .filter(|n| bitmap.contains(n.id));
        let shortlist = match rerank {
            Rerank::All => valid.collect(),
            Rerank::Factor(f) => top_k(valid, f.max(1) * k),
        };
        let mut exact: Vec<Neighbor> = shortlist
            .into_iter()
            .map(|n| Neighbor::new(n.id, metric.eval(query, vectors.get(n.id as usize))))
            .collect();
        exact.sort();
        exact
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_bound_formula() {
        let p = PostFilterParams::new(10, 2.0, 1000).unwrap();
        assert_eq!(p.round_bound(), 8);
        let p = PostFilterParams::new(10, 2.0, 10).unwrap();
        assert_eq!(p.round_bound(), 1);
        assert!(PostFilterParams::new(10, 1.0, 100).is_err());
    }

    #[test]
    fn loop_stops_at_cap_and_counts_rounds() {
        let p = PostFilterParams::new(3, 2.0, 100).unwrap();
        let mut scopes = Vec::new();
        let out = postfilter_loop(10, &p, |s| {
            scopes.push(s);
            vec![]
        });
        assert_eq!(scopes, [3, 6, 12, 24, 48, 96, 100]);
        assert_eq!(out.rounds, 7);
        assert!(out.rounds <= p.round_bound());
        assert_eq!(out.scope, 100);
    }

    #[test]
    fn loop_stops_once_k_found() {
        let p = PostFilterParams::new(4, 2.0, 1000).unwrap();
        let out = postfilter_loop(2, &p, |s| {
            (0..(s / 8) as u32).map(|i| Neighbor::new(i, i as f32)).collect()
        });
        assert_eq!(out.scope, 16);
        assert_eq!(out.neighbors.len(), 2);
    }
}
