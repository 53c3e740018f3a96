//! Domain types shared by every strategy: embeddings, label sets, filter
//! constraints, queries, ground truth, and the recall/selectivity metrics.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{FannsError, Result};

/// A dense embedding. All values are finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding(Vec<f32>);

impl Embedding {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(FannsError::param(format!(
                "embedding value at position {pos} is not finite"
            )));
        }
        Ok(Embedding(values))
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f32> {
        self.0
    }
}

/// Strictly ascending set of dense label ids.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LabelSet(Vec<u32>);

impl LabelSet {
    pub fn new(labels: impl IntoIterator<Item = u32>) -> Self {
        let mut v: Vec<u32> = labels.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        LabelSet(v)
    }

    pub fn empty() -> Self {
        LabelSet(Vec::new())
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, label: u32) -> bool {
        self.0.binary_search(&label).is_ok()
    }

    /// `self ⊆ other`, by a merge walk over both sorted lists.
    pub fn is_subset_of(&self, other: &LabelSet) -> bool {
        if self.0.len() > other.0.len() {
            return false;
        }
        let mut it = other.0.iter();
        'outer: for &a in &self.0 {
            for &b in it.by_ref() {
                match b.cmp(&a) {
                    Ordering::Less => continue,
                    Ordering::Equal => continue 'outer,
                    Ordering::Greater => return false,
                }
            }
            return false;
        }
        true
    }

    pub fn intersects(&self, other: &LabelSet) -> bool {
        let (mut i, mut j) = (0, 0);
        while i < self.0.len() && j < other.0.len() {
            match self.0[i].cmp(&other.0[j]) {
                Ordering::Less => i += 1,
                Ordering::Greater => j += 1,
                Ordering::Equal => return true,
            }
        }
        false
    }

    pub fn intersection_len(&self, other: &LabelSet) -> usize {
        let (mut i, mut j, mut n) = (0, 0, 0);
        while i < self.0.len() && j < other.0.len() {
            match self.0[i].cmp(&other.0[j]) {
                Ordering::Less => i += 1,
                Ordering::Greater => j += 1,
                Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        n
    }

    pub fn iter(&self) -> impl Iterator<Item = u32> + '_ {
        self.0.iter().copied()
    }
}

impl fmt::Display for LabelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, l) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{l}")?;
        }
        write!(f, "}}")
    }
}

impl FromIterator<u32> for LabelSet {
    fn from_iter<T: IntoIterator<Item = u32>>(iter: T) -> Self {
        LabelSet::new(iter)
    }
}

/// The four predicate semantics binding a query label set to base label sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FilterConstraint {
    Containment,
    Overlap,
    Equality,
    FixedLengthEquality,
}

impl FilterConstraint {
    pub const ALL: [FilterConstraint; 4] = [
        FilterConstraint::Containment,
        FilterConstraint::Overlap,
        FilterConstraint::Equality,
        FilterConstraint::FixedLengthEquality,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FilterConstraint::Containment => "containment",
            FilterConstraint::Overlap => "overlap",
            FilterConstraint::Equality => "equality",
            FilterConstraint::FixedLengthEquality => "fixed-length-equality",
        }
    }
}

impl fmt::Display for FilterConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FilterConstraint {
    type Err = FannsError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "containment" | "cont" => Ok(FilterConstraint::Containment),
            "overlap" | "over" => Ok(FilterConstraint::Overlap),
            "equality" | "eq" => Ok(FilterConstraint::Equality),
            "fixed-length-equality" | "fixed" | "fixed-eq" => {
                Ok(FilterConstraint::FixedLengthEquality)
            }
            other => Err(FannsError::param(format!("unknown scenario '{other}'"))),
        }
    }
}

/// Evaluates `base |_S query`.
pub fn satisfies(base: &LabelSet, query: &LabelSet, constraint: FilterConstraint) -> bool {
    match constraint {
        FilterConstraint::Containment => query.is_subset_of(base),
        FilterConstraint::Overlap => query.intersects(base),
        FilterConstraint::Equality | FilterConstraint::FixedLengthEquality => base == query,
    }
}

/// The common label-set length of a dataset, if every record shares one.
pub fn uniform_label_length(labels: &[LabelSet]) -> Option<usize> {
    let first = labels.first()?.len();
    labels.iter().all(|l| l.len() == first).then_some(first)
}

/// Rejects `FixedLengthEquality` on datasets whose label sets differ in length.
pub fn check_constraint(labels: &[LabelSet], constraint: FilterConstraint) -> Result<()> {
    if constraint == FilterConstraint::FixedLengthEquality
        && !labels.is_empty()
        && uniform_label_length(labels).is_none()
    {
        return Err(FannsError::ConstraintViolation(
            "fixed-length equality requires every record to carry the same number of labels"
                .into(),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum DistanceMetric {
    #[default]
    SquaredEuclidean,
    /// Negated inner product, so smaller is closer.
    InnerProductDistance,
}

impl DistanceMetric {
    /// Unchecked hot-path distance; callers guarantee equal lengths.
    #[inline]
    pub fn eval(self, a: &[f32], b: &[f32]) -> f32 {
        debug_assert_eq!(a.len(), b.len());
        match self {
            DistanceMetric::SquaredEuclidean => squared_l2(a, b),
            DistanceMetric::InnerProductDistance => -dot(a, b),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DistanceMetric::SquaredEuclidean => "l2",
            DistanceMetric::InnerProductDistance => "ip",
        }
    }
}

impl FromStr for DistanceMetric {
    type Err = FannsError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l2" | "euclidean" | "squared-euclidean" => Ok(DistanceMetric::SquaredEuclidean),
            "ip" | "inner-product" => Ok(DistanceMetric::InnerProductDistance),
            other => Err(FannsError::param(format!("unknown metric '{other}'"))),
        }
    }
}

#[inline]
pub(crate) fn squared_l2(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0.0f32; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            let d = x[i] - y[i];
            acc[i] += d * d;
        }
    }
    let mut sum: f32 = acc.iter().sum();
    for (x, y) in ra.iter().zip(rb) {
        let d = x - y;
        sum += d * d;
    }
    sum
}

#[inline]
pub(crate) fn dot(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0.0f32; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    let mut sum: f32 = acc.iter().sum();
    for (x, y) in ra.iter().zip(rb) {
        sum += x * y;
    }
    sum
}

/// Checked distance between two embeddings.
pub fn distance(metric: DistanceMetric, a: &[f32], b: &[f32]) -> Result<f32> {
    if a.len() != b.len() {
        return Err(FannsError::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(metric.eval(a, b))
}

/// Row-major matrix of `len` vectors of dimension `dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vectors {
    dim: usize,
    data: Vec<f32>,
}

impl Vectors {
    pub fn new(dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 && !data.is_empty() {
            return Err(FannsError::param("dimension must be positive"));
        }
        if dim > 0 && data.len() % dim != 0 {
            return Err(FannsError::DimensionMismatch {
                expected: dim,
                actual: data.len() % dim,
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(FannsError::param("vectors contain non-finite values"));
        }
        Ok(Vectors { dim, data })
    }

    pub fn from_rows(dim: usize, rows: &[Vec<f32>]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(FannsError::DimensionMismatch {
                    expected: dim,
                    actual: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Vectors::new(dim, data)
    }

    pub fn empty(dim: usize) -> Self {
        Vectors { dim, data: Vec::new() }
    }

    #[inline]
    pub fn get(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_flat(&self) -> &[f32] {
        &self.data
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim.max(1))
    }

    pub fn push(&mut self, v: &[f32]) -> Result<()> {
        if v.len() != self.dim {
            return Err(FannsError::DimensionMismatch {
                expected: self.dim,
                actual: v.len(),
            });
        }
        self.data.extend_from_slice(v);
        Ok(())
    }

    /// Copies the listed rows into a new matrix, in the given order.
    pub fn select(&self, ids: &[u32]) -> Vectors {
        let mut data = Vec::with_capacity(ids.len() * self.dim);
        for &i in ids {
            data.extend_from_slice(self.get(i as usize));
        }
        Vectors { dim: self.dim, data }
    }
}

/// One base record: an embedding plus its label set.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub id: u32,
    pub embedding: Embedding,
    pub labels: LabelSet,
}

/// A base dataset. Record ids are the dense row positions `0..n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub vectors: Vectors,
    pub labels: Vec<LabelSet>,
}

impl Dataset {
    pub fn new(vectors: Vectors, labels: Vec<LabelSet>) -> Result<Self> {
        if vectors.len() != labels.len() {
            return Err(FannsError::Mismatch(format!(
                "{} vectors but {} label sets",
                vectors.len(),
                labels.len()
            )));
        }
        Ok(Dataset { vectors, labels })
    }

    pub fn from_records(dim: usize, records: Vec<DatasetRecord>) -> Result<Self> {
        let mut vectors = Vectors::empty(dim);
        let mut labels = Vec::with_capacity(records.len());
        for (pos, r) in records.into_iter().enumerate() {
            if r.id as usize != pos {
                return Err(FannsError::param(format!(
                    "record ids must be dense: position {pos} holds id {}",
                    r.id
                )));
            }
            vectors.push(r.embedding.as_slice())?;
            labels.push(r.labels);
        }
        Dataset::new(vectors, labels)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.dim()
    }

    pub fn record(&self, id: u32) -> DatasetRecord {
        DatasetRecord {
            id,
            embedding: Embedding(self.vectors.get(id as usize).to_vec()),
            labels: self.labels[id as usize].clone(),
        }
    }

    /// One past the largest label id in use.
    pub fn label_universe(&self) -> usize {
        self.labels
            .iter()
            .filter_map(|l| l.as_slice().last())
            .map(|&m| m as usize + 1)
            .max()
            .unwrap_or(0)
    }

    /// Subset with ids remapped densely in the order given.
    pub fn subset(&self, ids: &[u32]) -> Dataset {
        Dataset {
            vectors: self.vectors.select(ids),
            labels: ids.iter().map(|&i| self.labels[i as usize].clone()).collect(),
        }
    }
}

/// A filtered top-k request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilteredQuery {
    pub embedding: Embedding,
    pub labels: LabelSet,
    pub k: usize,
    pub constraint: FilterConstraint,
}

impl FilteredQuery {
    pub fn new(
        embedding: Embedding,
        labels: LabelSet,
        k: usize,
        constraint: FilterConstraint,
    ) -> Result<Self> {
        if k == 0 {
            return Err(FannsError::param("k must be at least 1"));
        }
        Ok(FilteredQuery {
            embedding,
            labels,
            k,
            constraint,
        })
    }

    pub fn vector(&self) -> &[f32] {
        self.embedding.as_slice()
    }
}

/// A record id paired with its distance to a query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub id: u32,
    pub distance: f32,
}

impl Neighbor {
    pub fn new(id: u32, distance: f32) -> Self {
        Neighbor { id, distance }
    }
}

impl Eq for Neighbor {}

/// Total order: distance ascending, then id ascending.
impl Ord for Neighbor {
    fn cmp(&self, other: &Self) -> Ordering {
        self.distance
            .total_cmp(&other.distance)
            .then(self.id.cmp(&other.id))
    }
}

impl PartialOrd for Neighbor {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Exact filtered neighbors, ascending by distance.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GroundTruth {
    pub ids: Vec<u32>,
    pub distances: Vec<f32>,
}

impl GroundTruth {
    pub fn from_neighbors(neighbors: &[Neighbor]) -> Self {
        GroundTruth {
            ids: neighbors.iter().map(|n| n.id).collect(),
            distances: neighbors.iter().map(|n| n.distance).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Recall@k of `result` against `truth`.
///
/// The denominator is `min(k, |truth|)`. Every truth entry whose distance
/// equals the k-th truth distance counts as a correct answer, so distance
/// ties at the cut-off cannot lower recall.
pub fn recall_at_k(result: &[u32], truth: &GroundTruth, k: usize) -> Result<f64> {
    if truth.is_empty() {
        return Err(FannsError::EmptyTruth);
    }
    if k == 0 {
        return Err(FannsError::param("k must be at least 1"));
    }
    let depth = k.min(truth.len());
    let cutoff = truth.distances[depth - 1];
    let accepted: HashSet<u32> = truth
        .ids
        .iter()
        .zip(&truth.distances)
        .enumerate()
        .take_while(|(pos, (_, &d))| *pos < depth || d <= cutoff)
        .map(|(_, (&id, _))| id)
        .collect();
    let mut seen = HashSet::with_capacity(k);
    let hits = result
        .iter()
        .take(k)
        .filter(|id| seen.insert(**id) && accepted.contains(id))
        .count();
    Ok(hits.min(depth) as f64 / depth as f64)
}

/// Fraction of `labels` satisfying `query` under `constraint`.
pub fn selectivity(labels: &[LabelSet], query: &LabelSet, constraint: FilterConstraint) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = labels
        .iter()
        .filter(|b| satisfies(b, query, constraint))
        .count();
    hits as f64 / labels.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::seven_records;
    use proptest::prelude::*;

    fn ls(v: &[u32]) -> LabelSet {
        LabelSet::new(v.iter().copied())
    }

    #[test]
    fn satisfies_examples() {
        assert!(satisfies(&ls(&[1, 2]), &ls(&[1, 2]), FilterConstraint::Containment));
        assert!(!satisfies(&ls(&[3]), &ls(&[1, 2]), FilterConstraint::Overlap));
        assert!(satisfies(&ls(&[]), &ls(&[]), FilterConstraint::Containment));
        assert!(satisfies(&ls(&[5, 9]), &ls(&[]), FilterConstraint::Containment));
        assert!(!satisfies(&ls(&[5, 9]), &ls(&[]), FilterConstraint::Overlap));
    }

    #[test]
    fn fixed_length_rejected_on_mixed_lengths() {
        let labels = vec![ls(&[1]), ls(&[1, 2])];
        assert!(matches!(
            check_constraint(&labels, FilterConstraint::FixedLengthEquality),
            Err(FannsError::ConstraintViolation(_))
        ));
        assert!(check_constraint(&labels, FilterConstraint::Equality).is_ok());
        let fixed = vec![ls(&[1, 4]), ls(&[1, 2])];
        assert!(check_constraint(&fixed, FilterConstraint::FixedLengthEquality).is_ok());
    }

    #[test]
    fn distance_examples() {
        let m = DistanceMetric::SquaredEuclidean;
        assert_eq!(distance(m, &[0.0, 0.0], &[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(distance(m, &[1.0, 0.0], &[0.0, 1.0]).unwrap(), 2.0);
        assert_eq!(distance(m, &[3.0, 4.0], &[0.0, 0.0]).unwrap(), 25.0);
        assert_eq!(
            distance(DistanceMetric::InnerProductDistance, &[1.0, 2.0], &[3.0, 4.0]).unwrap(),
            -11.0
        );
        assert!(matches!(
            distance(m, &[1.0], &[1.0, 2.0]),
            Err(FannsError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn squared_l2_matches_naive_on_long_vectors() {
        let a: Vec<f32> = (0..37).map(|i| i as f32 * 0.5).collect();
        let b: Vec<f32> = (0..37).map(|i| (37 - i) as f32 * 0.25).collect();
        let naive: f32 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum();
        assert!((squared_l2(&a, &b) - naive).abs() <= naive * 1e-6);
    }

    fn truth(ids: &[u32]) -> GroundTruth {
        GroundTruth {
            ids: ids.to_vec(),
            distances: (0..ids.len()).map(|i| i as f32).collect(),
        }
    }

    #[test]
    fn recall_examples() {
        let t = truth(&(0..10).collect::<Vec<_>>());
        let eight: Vec<u32> = vec![0, 1, 2, 3, 4, 5, 6, 7, 50, 51];
        assert_eq!(recall_at_k(&eight, &t, 10).unwrap(), 0.8);
        assert_eq!(recall_at_k(&t.ids, &t, 10).unwrap(), 1.0);
        let disjoint: Vec<u32> = (100..110).collect();
        assert_eq!(recall_at_k(&disjoint, &t, 10).unwrap(), 0.0);
        assert!(matches!(
            recall_at_k(&[1], &GroundTruth::default(), 10),
            Err(FannsError::EmptyTruth)
        ));
    }

    #[test]
    fn recall_accepts_ties_at_cutoff_and_short_truth() {
        // truth distances: 0, 1, 1, 1 → with k = 2 the ids at distance 1 are all acceptable
        let t = GroundTruth {
            ids: vec![10, 11, 12, 13],
            distances: vec![0.0, 1.0, 1.0, 1.0],
        };
        assert_eq!(recall_at_k(&[10, 13], &t, 2).unwrap(), 1.0);
        assert_eq!(recall_at_k(&[12, 13], &t, 2).unwrap(), 1.0);
        // duplicates never count twice
        assert_eq!(recall_at_k(&[11, 11], &t, 2).unwrap(), 0.5);
        let short = truth(&[4, 5]);
        assert_eq!(recall_at_k(&[4, 5, 6], &short, 10).unwrap(), 1.0);
    }

    #[test]
    fn selectivity_examples() {
        let toy = seven_records();
        let q = ls(&[1, 2]);
        assert_eq!(selectivity(&toy.labels, &q, FilterConstraint::Equality), 2.0 / 7.0);
        assert_eq!(selectivity(&toy.labels, &ls(&[]), FilterConstraint::Containment), 1.0);
        assert_eq!(selectivity(&toy.labels, &q, FilterConstraint::Containment), 4.0 / 7.0);
        assert_eq!(selectivity(&toy.labels, &q, FilterConstraint::Overlap), 6.0 / 7.0);
    }

    fn arb_set(universe: u32) -> impl Strategy<Value = LabelSet> {
        proptest::collection::vec(0..universe, 0..6).prop_map(LabelSet::new)
    }

    proptest! {
        #[test]
        fn label_set_ops_match_hashset(a in arb_set(8), b in arb_set(8)) {
            let ha: HashSet<u32> = a.iter().collect();
            let hb: HashSet<u32> = b.iter().collect();
            prop_assert_eq!(a.is_subset_of(&b), ha.is_subset(&hb));
            prop_assert_eq!(a.intersects(&b), !ha.is_disjoint(&hb));
            prop_assert_eq!(a.intersection_len(&b), ha.intersection(&hb).count());
        }

        #[test]
        fn containment_is_monotone(base in arb_set(8), q in arb_set(8), mask in any::<u8>()) {
            let sub = LabelSet::new(q.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, l)| l));
            if satisfies(&base, &q, FilterConstraint::Containment) {
                prop_assert!(satisfies(&base, &sub, FilterConstraint::Containment));
            }
        }

        #[test]
        fn equality_implies_containment_and_overlap(base in arb_set(8), q in arb_set(8)) {
            if satisfies(&base, &q, FilterConstraint::Equality) {
                prop_assert!(satisfies(&base, &q, FilterConstraint::Containment));
                if !q.is_empty() {
                    prop_assert!(satisfies(&base, &q, FilterConstraint::Overlap));
                }
            }
        }

        #[test]
        fn selectivity_ordering(labels in proptest::collection::vec(arb_set(8), 1..60), q in arb_set(8)) {
            prop_assume!(!q.is_empty());
            let o = selectivity(&labels, &q, FilterConstraint::Overlap);
            let c = selectivity(&labels, &q, FilterConstraint::Containment);
            let e = selectivity(&labels, &q, FilterConstraint::Equality);
            prop_assert!(o >= c && c >= e);
        }

        #[test]
        fn truth_prefix_has_full_recall(len in 1usize..40, k in 1usize..40) {
            let t = truth(&(0..len as u32).collect::<Vec<_>>());
            let prefix: Vec<u32> = t.ids.iter().copied().take(k).collect();
            prop_assert_eq!(recall_at_k(&prefix, &t, k).unwrap(), 1.0);
        }
    }
}
