//! Hierarchical small-world graph builder.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{beam_search, robust_prune, Adjacency, BeamParams, ProximityGraph};
use crate::error::{param, Result};
use crate::model::{DistanceMetric, Neighbor, Vectors};

const MAX_LEVEL: usize = 16;

/// How a node's stored neighbor list is chosen from its construction candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NeighborSelection {
    /// α = 1 diversity prune, degree cap M.
    Heuristic,
    /// Nearest M candidates, no diversity prune.
    Nearest,
    /// Nearest M kept unconditionally, α = 1 prune beyond them, degree cap γ·M.
    Dense { gamma: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayeredParams {
    pub m: usize,
    pub ef_construction: usize,
    pub selection: NeighborSelection,
    pub seed: u64,
}

impl LayeredParams {
    pub fn new(m: usize, ef_construction: usize, selection: NeighborSelection, seed: u64) -> Self {
        LayeredParams { m, ef_construction, selection, seed }
    }

    /// Per-layer degree cap.
    pub fn degree_cap(&self) -> usize {
        match self.selection {
            NeighborSelection::Dense { gamma } => gamma * self.m,
            _ => self.m,
        }
    }
}

struct LayerView<'a> {
    links: &'a [Vec<Vec<u32>>],
    layer: usize,
}

impl Adjacency for LayerView<'_> {
    fn neighbors_of(&self, node: u32) -> &[u32] {
        self.links[node as usize]
            .get(self.layer)
            .map_or(&[], Vec::as_slice)
    }

    fn node_count(&self) -> usize {
        self.links.len()
    }
}

/// Builds the layered graph over `vectors`. Construction is sequential, so a
/// fixed seed gives an identical graph.
pub fn build_layered_graph(
    vectors: &Vectors,
    metric: DistanceMetric,
    params: &LayeredParams,
) -> Result<ProximityGraph> {
    if params.m < 2 {
        return Err(param(format!("M must be at least 2, got {}", params.m)));
    }
    if let NeighborSelection::Dense { gamma } = params.selection {
        if gamma < 1 {
            return Err(param("gamma must be at least 1"));
        }
    }
    let n = vectors.len();
    let cap = params.degree_cap();
    if cap >= n && n > 1 {
        log::info!("degree cap {cap} >= n = {n}: neighbor lists will be near-complete");
    }
    let ef = params.ef_construction.max(cap).max(1);
    let level_mult = 1.0 / (params.m as f64).ln();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let pair = super::pair_distance(vectors, metric);

    let mut links: Vec<Vec<Vec<u32>>> = Vec::with_capacity(n);
    let mut entry: Option<u32> = None;
    let mut top = 0usize;

    for q in 0..n as u32 {
        let u: f64 = 1.0 - rng.gen::<f64>();
        let level = ((-u.ln() * level_mult).floor() as usize).min(MAX_LEVEL);
        links.push(vec![Vec::new(); level + 1]);
        let Some(ep0) = entry else {
            entry = Some(q);
            top = level;
            continue;
        };
        let dist = |v: u32| pair(q, v);
        let mut eps = vec![ep0];
        let mut cur_d = dist(ep0);
        for layer in (level + 1..=top).rev() {
            let mut cur = eps[0];
            loop {
                let mut moved = false;
                let view = LayerView { links: &links, layer };
                for &nb in view.neighbors_of(cur) {
                    let d = dist(nb);
                    if d < cur_d {
                        cur_d = d;
                        cur = nb;
                        moved = true;
                    }
                }
                if !moved {
                    break;
                }
            }
            eps = vec![cur];
        }
        for layer in (0..=level.min(top)).rev() {
            let found = beam_search(
                &LayerView { links: &links, layer },
                &eps,
                dist,
                &BeamParams::unfiltered(ef),
            )
            .results;
            let chosen = select(q, &found, params, &pair);
            for &nb in &chosen {
                let list = &mut links[nb as usize][layer];
                if list.contains(&q) {
                    continue;
                }
                list.push(q);
                if list.len() > cap {
                    let cands: Vec<Neighbor> =
                        list.iter().map(|&x| Neighbor::new(x, pair(nb, x))).collect();
                    let reselected = select(nb, &cands, params, &pair);
                    links[nb as usize][layer] = reselected;
                }
            }
            links[q as usize][layer] = chosen;
            eps = found.iter().map(|n| n.id).collect();
        }
        if level > top {
            top = level;
            entry = Some(q);
        }
    }

    let mut base = Vec::with_capacity(n);
    let mut upper = Vec::with_capacity(n);
    for mut node in links {
        let rest = node.split_off(1);
        base.push(node.pop().unwrap_or_default());
        upper.push(rest);
    }
    if let Some(e) = entry {
        repair_reachability(&mut base, e, cap, &pair);
    }
    Ok(ProximityGraph {
        base,
        upper,
        entry_points: entry.into_iter().collect(),
        max_degree: cap,
    })
}

/// Links every layer-0 node that pruning left unreachable from `entry`.
///
/// Each orphan gets an in-edge from the nearest node a beam search from
/// `entry` finds with spare degree; if none has room, the nearest found node
/// drops its farthest neighbor for it. Dropped edges can orphan other nodes,
/// so passes repeat until everything is reachable.
fn repair_reachability<P>(base: &mut [Vec<u32>], entry: u32, cap: usize, pair: &P)
where
    P: Fn(u32, u32) -> f32,
{
    const PASSES: usize = 32;
    const HOST_BEAM: usize = 32;
    let n = base.len();
    let mark = |base: &[Vec<u32>], reached: &mut [bool], from: u32| {
        if std::mem::replace(&mut reached[from as usize], true) {
            return;
        }
        let mut stack = vec![from];
        while let Some(v) = stack.pop() {
            for &u in &base[v as usize] {
                if !reached[u as usize] {
                    reached[u as usize] = true;
                    stack.push(u);
                }
            }
        }
    };
    let mut repaired = 0usize;
    for _ in 0..PASSES {
        let mut reached = vec![false; n];
        mark(base, &mut reached, entry);
        let orphans: Vec<u32> = (0..n as u32).filter(|&v| !reached[v as usize]).collect();
        if orphans.is_empty() {
            break;
        }
        for orphan in orphans {
            if reached[orphan as usize] {
                continue;
            }
            let found = beam_search(
                &base[..],
                &[entry],
                |v| pair(orphan, v),
                &BeamParams::unfiltered(HOST_BEAM),
            )
            .results;
            let host = found
                .iter()
                .find(|c| c.id != orphan && base[c.id as usize].len() < cap)
                .or_else(|| found.iter().find(|c| c.id != orphan));
            let Some(host) = host.map(|h| h.id) else {
                continue;
            };
            let list = &mut base[host as usize];
            if list.len() >= cap {
                let far = (0..list.len())
                    .max_by(|&a, &b| pair(host, list[a]).total_cmp(&pair(host, list[b])))
                    .expect("full list is non-empty");
                list.remove(far);
            }
            list.push(orphan);
            repaired += 1;
            mark(base, &mut reached, orphan);
        }
    }
    if repaired > 0 {
        log::debug!("reconnected {repaired} unreachable layer-0 nodes");
    }
}

fn select<P>(node: u32, candidates: &[Neighbor], params: &LayeredParams, pair: &P) -> Vec<u32>
where
    P: Fn(u32, u32) -> f32,
{
    let m = params.m;
    match params.selection {
        NeighborSelection::Heuristic => robust_prune(node, candidates, 1.0, m, pair, None),
        NeighborSelection::Nearest => {
            let mut sorted: Vec<Neighbor> =
                candidates.iter().copied().filter(|c| c.id != node).collect();
            sorted.sort();
            sorted.dedup_by_key(|c| c.id);
            sorted.into_iter().take(m).map(|c| c.id).collect()
        }
        NeighborSelection::Dense { gamma } => {
            let cap = gamma * m;
            let mut sorted: Vec<Neighbor> =
                candidates.iter().copied().filter(|c| c.id != node).collect();
            sorted.sort();
            sorted.dedup_by_key(|c| c.id);
            let mut kept: Vec<u32> = Vec::with_capacity(cap);
            for c in sorted {
                if kept.len() >= cap {
                    break;
                }
                if kept.len() < m || kept.iter().all(|&k| pair(k, c.id) > c.distance) {
                    kept.push(c.id);
                }
            }
            kept
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::top_k;
    use rand::Rng;

    fn uniform(n: usize, d: usize, seed: u64) -> Vectors {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Vectors::new(d, (0..n * d).map(|_| rng.gen::<f32>()).collect()).unwrap()
    }

    #[test]
    fn m_below_two_rejected() {
        let vs = uniform(10, 2, 0);
        let p = LayeredParams::new(1, 10, NeighborSelection::Heuristic, 0);
        assert!(build_layered_graph(&vs, DistanceMetric::SquaredEuclidean, &p).is_err());
    }

    #[test]
    fn single_node() {
        let vs = uniform(1, 3, 0);
        let p = LayeredParams::new(8, 10, NeighborSelection::Heuristic, 0);
        let g = build_layered_graph(&vs, DistanceMetric::SquaredEuclidean, &p).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g.edge_count(), 0);
        assert_eq!(g.entry_points(), [0]);
    }

    #[test]
    fn degree_caps_hold_on_every_layer() {
        let vs = uniform(100, 4, 1);
        for sel in [
            NeighborSelection::Heuristic,
            NeighborSelection::Nearest,
            NeighborSelection::Dense { gamma: 4 },
        ] {
            let p = LayeredParams::new(8, 40, sel, 3);
            let g = build_layered_graph(&vs, DistanceMetric::SquaredEuclidean, &p).unwrap();
            for layer in 0..=g.max_level() {
                assert!(g.max_degree_at(layer) <= p.degree_cap());
            }
            assert!(g.edges().all(|(a, b)| a != b && (b as usize) < 100));
        }
    }

    #[test]
    fn unfiltered_recall_on_uniform_points() {
        let vs = uniform(1000, 16, 2);
        let m = DistanceMetric::SquaredEuclidean;
        let p = LayeredParams::new(16, 100, NeighborSelection::Heuristic, 5);
        let g = build_layered_graph(&vs, m, &p).unwrap();
        let queries = uniform(100, 16, 99);
        let mut hits = 0;
        for q in queries.iter() {
            let dist = |i: u32| m.eval(q, vs.get(i as usize));
            let got = g.layered_search(dist, &BeamParams::unfiltered(100));
            let exact = top_k((0..1000).map(|i| Neighbor::new(i, dist(i))), 10);
            hits += got.results[..10]
                .iter()
                .filter(|n| exact.iter().any(|e| e.id == n.id))
                .count();
        }
        let recall = hits as f64 / 1000.0;
        assert!(recall >= 0.99, "recall {recall}");
    }

    #[test]
    fn layer_zero_reachable_from_entry() {
        let vs = uniform(2000, 2, 6);
        for sel in [NeighborSelection::Heuristic, NeighborSelection::Nearest] {
            let p = LayeredParams::new(4, 16, sel, 8);
            let g = build_layered_graph(&vs, DistanceMetric::SquaredEuclidean, &p).unwrap();
            let mut seen = vec![false; g.len()];
            let mut stack = vec![g.entry_points()[0]];
            seen[stack[0] as usize] = true;
            while let Some(v) = stack.pop() {
                for &u in g.neighbors(v) {
                    if !std::mem::replace(&mut seen[u as usize], true) {
                        stack.push(u);
                    }
                }
            }
            assert!(seen.iter().all(|&s| s), "{sel:?}");
            assert!(g.max_degree_at(0) <= 4);
        }
    }

    #[test]
    fn same_seed_same_graph() {
        let vs = uniform(300, 8, 4);
        let p = LayeredParams::new(6, 30, NeighborSelection::Nearest, 17);
        let a = build_layered_graph(&vs, DistanceMetric::SquaredEuclidean, &p).unwrap();
        let b = build_layered_graph(&vs, DistanceMetric::SquaredEuclidean, &p).unwrap();
        assert_eq!(a, b);
    }
}
