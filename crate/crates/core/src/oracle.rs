//! Exact filtered k-NN: a full-precision scan over the filter map survivors.
//!
//! This is both the pre-filter brute-force strategy and the ground-truth
//! generator.

use std::collections::BinaryHeap;

use crate::error::Result;
use crate::filter::{FilterBitmap, InvertedLabelIndex};
use crate::model::{Dataset, DistanceMetric, FilteredQuery, Neighbor};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OracleResult {
    /// Ascending by distance, ties by ascending id.
    pub neighbors: Vec<Neighbor>,
    /// Number of records passing the filter.
    pub satisfied_count: usize,
}

impl OracleResult {
    pub fn ids(&self) -> Vec<u32> {
        self.neighbors.iter().map(|n| n.id).collect()
    }
}

pub fn exact_filtered_knn(
    dataset: &Dataset,
    index: &InvertedLabelIndex,
    query: &FilteredQuery,
    metric: DistanceMetric,
) -> Result<OracleResult> {
    let bitmap = index.filter_map(&query.labels, query.constraint, &dataset.labels)?;
    Ok(scan_bitmap(dataset, &bitmap, query.vector(), query.k, metric))
}

/// Top-`k` exact neighbors among the bitmap's set bits.
pub fn scan_bitmap(
    dataset: &Dataset,
    bitmap: &FilterBitmap,
    query: &[f32],
    k: usize,
    metric: DistanceMetric,
) -> OracleResult {
    let neighbors = top_k(
        bitmap
            .iter()
            .map(|i| Neighbor::new(i, metric.eval(query, dataset.vectors.get(i as usize)))),
        k,
    );
    OracleResult {
        neighbors,
        satisfied_count: bitmap.count(),
    }
}

/// The `k` smallest neighbors under the (distance, id) order, sorted.
pub fn top_k(items: impl IntoIterator<Item = Neighbor>, k: usize) -> Vec<Neighbor> {
    if k == 0 {
        return Vec::new();
    }
    let mut heap: BinaryHeap<Neighbor> = BinaryHeap::with_capacity(k + 1);
    for n in items {
        if heap.len() < k {
            heap.push(n);
        } else if n < *heap.peek().expect("non-empty") {
            heap.pop();
            heap.push(n);
        }
    }
    heap.into_sorted_vec()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{seven_records, seven_records_query, seven_records_query_labels};
    use crate::model::{Embedding, FilterConstraint, LabelSet, Vectors};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fig_query(c: FilterConstraint, k: usize) -> FilteredQuery {
        FilteredQuery::new(
            Embedding::new(seven_records_query()).unwrap(),
            seven_records_query_labels(),
            k,
            c,
        )
        .unwrap()
    }

    #[test]
    fn seven_records_nearest() {
        let toy = seven_records();
        let idx = InvertedLabelIndex::build(&toy.labels);
        let m = DistanceMetric::SquaredEuclidean;
        let cont = exact_filtered_knn(&toy, &idx, &fig_query(FilterConstraint::Containment, 1), m).unwrap();
        assert_eq!(cont.ids(), [2]);
        assert_eq!(cont.satisfied_count, 4);
        let over = exact_filtered_knn(&toy, &idx, &fig_query(FilterConstraint::Overlap, 1), m).unwrap();
        assert_eq!(over.ids(), [4]);
        let eq = exact_filtered_knn(&toy, &idx, &fig_query(FilterConstraint::Equality, 1), m).unwrap();
        assert_eq!(eq.ids(), [2]);
    }

    #[test]
    fn zero_survivors_is_empty_not_error() {
        let toy = seven_records();
        let idx = InvertedLabelIndex::build(&toy.labels);
        let mut q = fig_query(FilterConstraint::Containment, 3);
        q.labels = LabelSet::new([3, 4]);
        let r = exact_filtered_knn(&toy, &idx, &q, DistanceMetric::SquaredEuclidean).unwrap();
        assert!(r.neighbors.is_empty());
        assert_eq!(r.satisfied_count, 0);
    }

    fn random_dataset(n: usize, d: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let labels = (0..n)
            .map(|_| LabelSet::new((0..3).filter(|_| rng.gen_bool(0.4))))
            .collect();
        Dataset::new(Vectors::new(d, data).unwrap(), labels).unwrap()
    }

    #[test]
    fn k_beyond_survivors_returns_sorted_survivors() {
        let ds = random_dataset(200, 4, 3);
        let idx = InvertedLabelIndex::build(&ds.labels);
        let q = FilteredQuery::new(
            Embedding::new(vec![0.1, 0.2, -0.3, 0.0]).unwrap(),
            LabelSet::new([0, 1, 2]),
            500,
            FilterConstraint::Containment,
        )
        .unwrap();
        let m = DistanceMetric::SquaredEuclidean;
        let r = exact_filtered_knn(&ds, &idx, &q, m).unwrap();
        // independent route: filter by predicate, full sort
        let mut expect: Vec<Neighbor> = (0..ds.len() as u32)
            .filter(|&i| crate::model::satisfies(&ds.labels[i as usize], &q.labels, q.constraint))
            .map(|i| Neighbor::new(i, m.eval(q.vector(), ds.vectors.get(i as usize))))
            .collect();
        expect.sort();
        assert_eq!(r.neighbors, expect);
        assert_eq!(r.satisfied_count, expect.len());
    }

    #[test]
    fn all_pass_filter_equals_unfiltered_scan() {
        let ds = random_dataset(300, 6, 9);
        let q: Vec<f32> = vec![0.0; 6];
        let m = DistanceMetric::SquaredEuclidean;
        let r = scan_bitmap(&ds, &FilterBitmap::ones(ds.len()), &q, 15, m);
        let mut all: Vec<Neighbor> = ds
            .vectors
            .iter()
            .enumerate()
            .map(|(i, v)| Neighbor::new(i as u32, m.eval(&q, v)))
            .collect();
        all.sort();
        all.truncate(15);
        assert_eq!(r.neighbors, all);
    }

    #[test]
    fn ties_broken_by_ascending_id() {
        let ds = Dataset::new(
            Vectors::new(1, vec![1.0, -1.0, 1.0, -1.0, 0.5]).unwrap(),
            vec![LabelSet::empty(); 5],
        )
        .unwrap();
        let r = scan_bitmap(&ds, &FilterBitmap::ones(5), &[0.0], 4, DistanceMetric::SquaredEuclidean);
        assert_eq!(r.ids(), [4, 0, 1, 2]);
    }
}
