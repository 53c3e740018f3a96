//! Proximity-graph primitives shared by the graph strategies: best-first beam
//! search with pluggable admission predicates, α-pruning, and three builders.

mod knn;
mod layered;
mod vamana;

use std::cell::RefCell;
use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::model::{Neighbor, Vectors};

pub use knn::build_knn_graph;
pub use layered::{build_layered_graph, LayeredParams, NeighborSelection};
pub use vamana::{build_vamana, medoid, PruneParams, VamanaRules};

/// A directed proximity graph. Layer 0 covers every node; layered graphs also
/// keep sparse upper layers for greedy descent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProximityGraph {
    base: Vec<Vec<u32>>,
    /// `upper[v][l - 1]` holds v's neighbors on layer `l >= 1`.
    upper: Vec<Vec<Vec<u32>>>,
    entry_points: Vec<u32>,
    max_degree: usize,
}

impl ProximityGraph {
    pub fn from_adjacency(base: Vec<Vec<u32>>, entry_points: Vec<u32>, max_degree: usize) -> Self {
        let n = base.len();
        ProximityGraph {
            base,
            upper: vec![Vec::new(); n],
            entry_points,
            max_degree,
        }
    }

    pub fn len(&self) -> usize {
        self.base.len()
    }

    pub fn is_empty(&self) -> bool {
        self.base.is_empty()
    }

    /// Layer-0 neighbors.
    #[inline]
    pub fn neighbors(&self, node: u32) -> &[u32] {
        &self.base[node as usize]
    }

    pub fn neighbors_at(&self, node: u32, layer: usize) -> &[u32] {
        if layer == 0 {
            &self.base[node as usize]
        } else {
            self.upper[node as usize]
                .get(layer - 1)
                .map_or(&[], Vec::as_slice)
        }
    }

    /// Top layer the node appears on.
    pub fn level(&self, node: u32) -> usize {
        self.upper[node as usize].len()
    }

    pub fn max_level(&self) -> usize {
        self.upper.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn entry_points(&self) -> &[u32] {
        &self.entry_points
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn adjacency(&self) -> &[Vec<u32>] {
        &self.base
    }

    pub fn into_adjacency(self) -> Vec<Vec<u32>> {
        self.base
    }

    /// Every layer-0 edge as `(from, to)`.
    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.base
            .iter()
            .enumerate()
            .flat_map(|(v, ns)| ns.iter().map(move |&u| (v as u32, u)))
    }

    pub fn edge_count(&self) -> usize {
        self.base.iter().map(Vec::len).sum()
    }

    /// Largest neighbor list on `layer`.
    pub fn max_degree_at(&self, layer: usize) -> usize {
        (0..self.len() as u32)
            .map(|v| self.neighbors_at(v, layer).len())
            .max()
            .unwrap_or(0)
    }

    /// Greedy descent through the upper layers, then a layer-0 beam search.
    pub fn layered_search<D>(&self, dist: D, params: &BeamParams<'_>) -> SearchOutcome
    where
        D: Fn(u32) -> f32,
    {
        let Some(&entry) = self.entry_points.first() else {
            return SearchOutcome::default();
        };
        let mut cur = entry;
        let mut cur_d = dist(cur);
        let mut evals = 1;
        for layer in (1..=self.level(entry)).rev() {
            loop {
                let mut moved = false;
                for &nb in self.neighbors_at(cur, layer) {
                    let d = dist(nb);
                    evals += 1;
                    if d < cur_d {
                        cur = nb;
                        cur_d = d;
                        moved = true;
                    }
                }
                if !moved {
                    break;
                }
            }
        }
        let mut out = beam_search(&self.base[..], &[cur], dist, params);
        out.distance_evals += evals;
        out
    }
}

/// Read-only neighbor lookup used by [`beam_search`].
pub trait Adjacency {
    fn neighbors_of(&self, node: u32) -> &[u32];
    fn node_count(&self) -> usize;
}

impl Adjacency for [Vec<u32>] {
    #[inline]
    fn neighbors_of(&self, node: u32) -> &[u32] {
        &self[node as usize]
    }

    fn node_count(&self) -> usize {
        self.len()
    }
}

impl Adjacency for ProximityGraph {
    #[inline]
    fn neighbors_of(&self, node: u32) -> &[u32] {
        &self.base[node as usize]
    }

    fn node_count(&self) -> usize {
        self.base.len()
    }
}

/// How far a visited node's expansion frontier reaches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HopMode {
    OneHop,
    /// Neighbors plus neighbors' neighbors.
    TwoHop,
}

fn always(_: u32) -> bool {
    true
}

/// Beam search configuration.
///
/// `traverse` gates entry into the candidate queue; `accept` gates entry into
/// the result list. Entry points are always expanded.
pub struct BeamParams<'a> {
    pub beam_width: usize,
    pub hop_mode: HopMode,
    pub accept: &'a dyn Fn(u32) -> bool,
    pub traverse: &'a dyn Fn(u32) -> bool,
    /// Keep the expanded nodes, in expansion order (used by builders).
    pub record_expanded: bool,
}

impl<'a> BeamParams<'a> {
    pub fn unfiltered(beam_width: usize) -> BeamParams<'static> {
        BeamParams {
            beam_width,
            hop_mode: HopMode::OneHop,
            accept: &always,
            traverse: &always,
            record_expanded: false,
        }
    }

    /// Both admission gates set to `pred`.
    pub fn filtered(beam_width: usize, hop_mode: HopMode, pred: &'a dyn Fn(u32) -> bool) -> Self {
        BeamParams {
            beam_width,
            hop_mode,
            accept: pred,
            traverse: pred,
            record_expanded: false,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct SearchOutcome {
    /// Accepted nodes, ascending by (distance, id); at most `beam_width`.
    pub results: Vec<Neighbor>,
    pub expanded: Vec<Neighbor>,
    pub distance_evals: usize,
}

struct VisitedSet {
    marks: Vec<u32>,
    epoch: u32,
}

impl VisitedSet {
    fn reset(&mut self, n: usize) {
        if self.marks.len() < n {
            self.marks.resize(n, 0);
        }
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.marks.iter_mut().for_each(|m| *m = 0);
            self.epoch = 1;
        }
    }

    #[inline]
    fn insert(&mut self, v: u32) -> bool {
        let slot = &mut self.marks[v as usize];
        if *slot == self.epoch {
            false
        } else {
            *slot = self.epoch;
            true
        }
    }
}

thread_local! {
    static VISITED: RefCell<VisitedSet> = const { RefCell::new(VisitedSet { marks: Vec::new(), epoch: 0 }) };
}

/// Best-first search from `entries`.
///
/// Traversable nodes join the candidate queue while the accepted list holds
/// fewer than `beam_width` nodes or they beat its worst entry. The search
/// stops when the closest unexpanded candidate is farther than the worst of a
/// full accepted list.
pub fn beam_search<A, D>(
    graph: &A,
    entries: &[u32],
    dist: D,
    params: &BeamParams<'_>,
) -> SearchOutcome
where
    A: Adjacency + ?Sized,
    D: Fn(u32) -> f32,
{
    let l = params.beam_width.max(1);
    VISITED.with(|cell| {
        let mut visited = cell.borrow_mut();
        visited.reset(graph.node_count());
        let mut out = SearchOutcome::default();
        let mut candidates: BinaryHeap<Reverse<Neighbor>> = BinaryHeap::new();
        let mut results: BinaryHeap<Neighbor> = BinaryHeap::with_capacity(l + 1);

        let full_and_beats = |n: &Neighbor, results: &BinaryHeap<Neighbor>| {
            results.len() >= l && *n > *results.peek().expect("full list")
        };

        for &e in entries {
            if !visited.insert(e) {
                continue;
            }
            let n = Neighbor::new(e, dist(e));
            out.distance_evals += 1;
            candidates.push(Reverse(n));
            if (params.accept)(e) {
                results.push(n);
                if results.len() > l {
                    results.pop();
                }
            }
        }

        let consider = |u: u32,
                        candidates: &mut BinaryHeap<Reverse<Neighbor>>,
                        results: &mut BinaryHeap<Neighbor>,
                        evals: &mut usize| {
            if !(params.traverse)(u) {
                return;
            }
            let n = Neighbor::new(u, dist(u));
            *evals += 1;
            if full_and_beats(&n, results) {
                return;
            }
            candidates.push(Reverse(n));
            if (params.accept)(u) {
                results.push(n);
                if results.len() > l {
                    results.pop();
                }
            }
        };

        while let Some(Reverse(c)) = candidates.pop() {
            if full_and_beats(&c, &results) {
                break;
            }
            if params.record_expanded {
                out.expanded.push(c);
            }
            for &u in graph.neighbors_of(c.id) {
                if visited.insert(u) {
                    consider(u, &mut candidates, &mut results, &mut out.distance_evals);
                }
                if params.hop_mode == HopMode::TwoHop {
                    for &w in graph.neighbors_of(u) {
                        if visited.insert(w) {
                            consider(w, &mut candidates, &mut results, &mut out.distance_evals);
                        }
                    }
                }
            }
        }
        out.results = results.into_sorted_vec();
        out
    })
}

/// α-pruning of `candidates` (distances are to `node`).
///
/// Repeatedly keeps the closest remaining candidate `c` and discards every
/// `c'` with `alpha * d(c, c') <= d(node, c')`. When `may_prune` is given, `c`
/// only discards `c'` if `may_prune(c, c')` holds.
pub fn robust_prune<P>(
    node: u32,
    candidates: &[Neighbor],
    alpha: f32,
    max_degree: usize,
    pair_dist: P,
    may_prune: Option<&dyn Fn(u32, u32) -> bool>,
) -> Vec<u32>
where
    P: Fn(u32, u32) -> f32,
{
    let mut pool: Vec<Neighbor> = candidates.iter().copied().filter(|c| c.id != node).collect();
    pool.sort();
    pool.dedup_by_key(|c| c.id);
    let mut pruned = vec![false; pool.len()];
    let mut kept = Vec::with_capacity(max_degree);
    for i in 0..pool.len() {
        if kept.len() >= max_degree {
            break;
        }
        if pruned[i] {
            continue;
        }
        let c = pool[i];
        kept.push(c.id);
        for j in i + 1..pool.len() {
            if pruned[j] {
                continue;
            }
            let victim = pool[j];
            if may_prune.is_some_and(|f| !f(c.id, victim.id)) {
                continue;
            }
            if alpha * pair_dist(c.id, victim.id) <= victim.distance {
                pruned[j] = true;
            }
        }
    }
    kept
}

/// Distance from node `a` to node `b` in `vectors`.
pub(crate) fn pair_distance(
    vectors: &Vectors,
    metric: crate::model::DistanceMetric,
) -> impl Fn(u32, u32) -> f32 + '_ {
    move |a, b| metric.eval(vectors.get(a as usize), vectors.get(b as usize))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::FilterBitmap;
    use crate::model::DistanceMetric;
    use crate::oracle::top_k;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vectors(n: usize, d: usize, seed: u64) -> Vectors {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Vectors::new(d, (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    fn random_graph(n: usize, deg: usize, seed: u64) -> Vec<Vec<u32>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|v| {
                // ring edge keeps the graph connected
                let mut ns = vec![((v + 1) % n) as u32];
                while ns.len() < deg {
                    let u = rng.gen_range(0..n) as u32;
                    if u as usize != v && !ns.contains(&u) {
                        ns.push(u);
                    }
                }
                ns
            })
            .collect()
    }

    #[test]
    fn exhaustive_beam_finds_exact_nearest() {
        let vs = random_vectors(200, 4, 1);
        let g = random_graph(200, 4, 2);
        let q = [0.3f32, -0.2, 0.1, 0.0];
        let m = DistanceMetric::SquaredEuclidean;
        let dist = |i: u32| m.eval(&q, vs.get(i as usize));
        let out = beam_search(&g[..], &[0], dist, &BeamParams::unfiltered(200));
        let exact = top_k((0..200).map(|i| Neighbor::new(i, dist(i))), 1);
        assert_eq!(out.results[0], exact[0]);
        assert_eq!(out.results.len(), 200);
    }

    #[test]
    fn two_hop_frontier() {
        // u=0 → {1,2}; 1 → {3}; 2 → {4}; entry 0 and predicate rejecting 1 and 2
        let g: Vec<Vec<u32>> = vec![vec![1, 2], vec![3], vec![4], vec![], vec![]];
        let pred = |v: u32| v != 1 && v != 2;
        let params = BeamParams::filtered(10, HopMode::TwoHop, &pred);
        let out = beam_search(&g[..], &[0], |v| v as f32, &params);
        assert_eq!(out.results.iter().map(|n| n.id).collect::<Vec<_>>(), [0, 3, 4]);
        let one = BeamParams::filtered(10, HopMode::OneHop, &pred);
        let out = beam_search(&g[..], &[0], |v| v as f32, &one);
        assert_eq!(out.results.iter().map(|n| n.id).collect::<Vec<_>>(), [0]);
    }

    #[test]
    fn single_survivor_found_under_two_hop() {
        let vs = random_vectors(50, 3, 5);
        let g = random_graph(50, 3, 6);
        let m = DistanceMetric::SquaredEuclidean;
        let q = [0.0f32; 3];
        let dist = |i: u32| m.eval(&q, vs.get(i as usize));
        for s in [7u32, 23, 41] {
            let bm = FilterBitmap::from_ids(50, [s]);
            let accept = |v: u32| bm.contains(v);
            let params = BeamParams {
                beam_width: 50,
                hop_mode: HopMode::TwoHop,
                accept: &accept,
                traverse: &always,
                record_expanded: false,
            };
            let out = beam_search(&g[..], &[0], dist, &params);
            assert_eq!(out.results.iter().map(|n| n.id).collect::<Vec<_>>(), [s]);
        }
    }

    #[test]
    fn unreachable_acceptance_gives_empty() {
        let g: Vec<Vec<u32>> = vec![vec![1], vec![0], vec![]];
        let pred = |v: u32| v == 2;
        let out = beam_search(&g[..], &[0], |v| v as f32, &BeamParams::filtered(5, HopMode::OneHop, &pred));
        assert!(out.results.is_empty());
    }

    /// Direct simulation of the α rule, written independently of `robust_prune`.
    fn prune_oracle(
        pts: &[[f32; 2]],
        node: usize,
        cands: &[usize],
        alpha: f32,
        r: usize,
    ) -> Vec<u32> {
        let d = |a: usize, b: usize| {
            (pts[a][0] - pts[b][0]).powi(2) + (pts[a][1] - pts[b][1]).powi(2)
        };
        let mut remaining: Vec<usize> = cands.to_vec();
        let mut out = Vec::new();
        while !remaining.is_empty() && out.len() < r {
            let best = *remaining
                .iter()
                .min_by(|&&a, &&b| d(node, a).total_cmp(&d(node, b)).then(a.cmp(&b)))
                .unwrap();
            out.push(best as u32);
            remaining.retain(|&c| c != best && alpha * d(best, c) > d(node, c));
        }
        out
    }

    #[test]
    fn prune_matches_oracle_on_small_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..200 {
            let pts: Vec<[f32; 2]> = (0..9)
                .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
                .collect();
            let cands: Vec<usize> = (1..9).collect();
            let alpha = [1.0f32, 1.2, 2.0, 1e6][trial % 4];
            let r = 1 + trial % 8;
            let d = |a: u32, b: u32| {
                let (a, b) = (a as usize, b as usize);
                (pts[a][0] - pts[b][0]).powi(2) + (pts[a][1] - pts[b][1]).powi(2)
            };
            let cn: Vec<Neighbor> = cands.iter().map(|&c| Neighbor::new(c as u32, d(0, c as u32))).collect();
            let got = robust_prune(0, &cn, alpha, r, d, None);
            assert_eq!(got, prune_oracle(&pts, 0, &cands, alpha, r), "trial {trial}");
        }
    }

    #[test]
    fn prune_equal_distances() {
        // four candidates on a circle around the node at the origin: equal distances
        let pts = [[0.0f32, 0.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]];
        let d = |a: u32, b: u32| {
            let (a, b) = (a as usize, b as usize);
            (pts[a][0] - pts[b][0]).powi(2) + (pts[a][1] - pts[b][1]).powi(2)
        };
        let cn: Vec<Neighbor> = (1..5).map(|c| Neighbor::new(c, 1.0)).collect();
        // pairwise distances are 2 or 4, never ≤ 1, so nothing is dominated
        assert_eq!(robust_prune(0, &cn, 1.0, 8, d, None), [1, 2, 3, 4]);
        // coincident candidates dominate each other
        let same = [[0.0f32, 0.0], [1.0, 0.0], [1.0, 0.0], [1.0, 0.0]];
        let ds = |a: u32, b: u32| {
            let (a, b) = (a as usize, b as usize);
            (same[a][0] - same[b][0]).powi(2) + (same[a][1] - same[b][1]).powi(2)
        };
        let cn: Vec<Neighbor> = (1..4).map(|c| Neighbor::new(c, 1.0)).collect();
        assert_eq!(robust_prune(0, &cn, 1.0, 8, ds, None), [1]);
        let single = [Neighbor::new(3, 0.5)];
        assert_eq!(robust_prune(0, &single, 1.0, 4, ds, None), [3]);
    }

    #[test]
    fn prune_respects_compat_predicate() {
        let pts = [[0.0f32, 0.0], [1.0, 0.0], [1.1, 0.0]];
        let d = |a: u32, b: u32| {
            let (a, b) = (a as usize, b as usize);
            (pts[a][0] - pts[b][0]).powi(2) + (pts[a][1] - pts[b][1]).powi(2)
        };
        let cn = [Neighbor::new(1, 1.0), Neighbor::new(2, 1.21)];
        assert_eq!(robust_prune(0, &cn, 1.0, 4, d, None), [1]);
        let never = |_: u32, _: u32| false;
        assert_eq!(robust_prune(0, &cn, 1.0, 4, d, Some(&never)), [1, 2]);
    }

    proptest! {
        #[test]
        fn beam_results_sorted_and_accepted(seed in 0u64..500, density in 0.05f64..1.0, l in 1usize..40) {
            let vs = random_vectors(120, 3, seed);
            let g = random_graph(120, 5, seed + 1);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 2);
            let bits: Vec<bool> = (0..120).map(|_| rng.gen_bool(density)).collect();
            let bm = FilterBitmap::from_bools(&bits);
            let pred = |v: u32| bm.contains(v);
            let m = DistanceMetric::SquaredEuclidean;
            let q = [0.1f32, 0.2, 0.3];
            for hop in [HopMode::OneHop, HopMode::TwoHop] {
                let out = beam_search(&g[..], &[0], |i| m.eval(&q, vs.get(i as usize)), &BeamParams::filtered(l, hop, &pred));
                prop_assert!(out.results.len() <= l);
                prop_assert!(out.results.windows(2).all(|w| w[0] <= w[1]));
                prop_assert!(out.results.iter().all(|n| bm.contains(n.id)));
            }
        }
    }
}
