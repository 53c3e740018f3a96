//! Filter-then-search over predicate-agnostic layered graphs. The builders see
//! embeddings only; the query bitmap gates both traversal and results.

use crate::error::Result;
use crate::filter::FilterBitmap;
use crate::graph::{
    build_layered_graph, BeamParams, HopMode, LayeredParams, NeighborSelection, ProximityGraph,
};
use crate::model::{DistanceMetric, Neighbor, Vectors};

/// Dense graph: up to γ·M neighbors per node and layer.
pub fn build_acorn_gamma(
    vectors: &Vectors,
    metric: DistanceMetric,
    m: usize,
    gamma: usize,
    ef_construction: usize,
    seed: u64,
) -> Result<ProximityGraph> {
    let params = LayeredParams::new(m, ef_construction, NeighborSelection::Dense { gamma }, seed);
    build_layered_graph(vectors, metric, &params)
}

/// Un-pruned graph: the nearest M candidates per node and layer.
pub fn build_acorn_one(
    vectors: &Vectors,
    metric: DistanceMetric,
    m: usize,
    ef_construction: usize,
    seed: u64,
) -> Result<ProximityGraph> {
    let params = LayeredParams::new(m, ef_construction, NeighborSelection::Nearest, seed);
    build_layered_graph(vectors, metric, &params)
}

/// Top-`k` bitmap members found by a beam of width `l`.
#[allow(clippy::too_many_arguments)]
pub fn acorn_search(
    graph: &ProximityGraph,
    vectors: &Vectors,
    metric: DistanceMetric,
    query: &[f32],
    bitmap: &FilterBitmap,
    k: usize,
    l: usize,
    two_hop: bool,
) -> Vec<Neighbor> {
    if bitmap.count() == 0 {
        return Vec::new();
    }
    let pred = |v: u32| bitmap.contains(v);
    let hop = if two_hop { HopMode::TwoHop } else { HopMode::OneHop };
    let params = BeamParams::filtered(l.max(k), hop, &pred);
    let mut out = graph
        .layered_search(|i| metric.eval(query, vectors.get(i as usize)), &params)
        .results;
    out.truncate(k);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{seven_records, seven_records_query, seven_records_query_labels};
    use crate::filter::InvertedLabelIndex;
    use crate::model::FilterConstraint;

    #[test]
    fn seven_records_containment() {
        let toy = seven_records();
        let idx = InvertedLabelIndex::build(&toy.labels);
        let bm = idx
            .filter_map(&seven_records_query_labels(), FilterConstraint::Containment, &toy.labels)
            .unwrap();
        let m = DistanceMetric::SquaredEuclidean;
        for two_hop in [false, true] {
            let g = if two_hop {
                build_acorn_one(&toy.vectors, m, 4, 10, 1).unwrap()
            } else {
                build_acorn_gamma(&toy.vectors, m, 2, 2, 10, 1).unwrap()
            };
            let r = acorn_search(&g, &toy.vectors, m, &seven_records_query(), &bm, 1, 7, two_hop);
            assert_eq!(r.iter().map(|n| n.id).collect::<Vec<_>>(), [2]);
        }
    }

    #[test]
    fn empty_bitmap_empty_result() {
        let toy = seven_records();
        let m = DistanceMetric::SquaredEuclidean;
        let g = build_acorn_one(&toy.vectors, m, 4, 10, 1).unwrap();
        let r = acorn_search(&g, &toy.vectors, m, &[0.0, 0.0], &FilterBitmap::zeros(7), 3, 10, true);
        assert!(r.is_empty());
    }

    #[test]
    fn one_is_the_unpruned_layered_graph() {
        let toy = seven_records();
        let m = DistanceMetric::SquaredEuclidean;
        let a = build_acorn_one(&toy.vectors, m, 3, 8, 5).unwrap();
        let b = build_layered_graph(
            &toy.vectors,
            m,
            &LayeredParams::new(3, 8, NeighborSelection::Nearest, 5),
        )
        .unwrap();
        assert_eq!(a, b);
    }
}
