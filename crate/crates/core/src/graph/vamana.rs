//! Vamana graph builder with optional label-aware candidate and prune rules.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{beam_search, robust_prune, BeamParams, HopMode, ProximityGraph};
use crate::error::{param, Result};
use crate::model::{squared_l2, DistanceMetric, Neighbor, Vectors};

/// α, degree bound R and construction beam L of a Vamana build.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneParams {
    pub alpha: f32,
    pub degree: usize,
    pub beam: usize,
}

impl PruneParams {
    pub fn new(alpha: f32, degree: usize, beam: usize) -> Result<Self> {
        let p = PruneParams { alpha, degree, beam };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 1.0) {
            return Err(param(format!("alpha must be >= 1, got {}", self.alpha)));
        }
        if self.degree == 0 || self.beam == 0 {
            return Err(param("degree and beam must be positive"));
        }
        Ok(())
    }
}

/// Hooks that turn plain Vamana into a label-aware build.
#[derive(Default, Clone, Copy)]
pub struct VamanaRules<'a> {
    /// Search start nodes for inserting a node; defaults to the medoid.
    pub starts: Option<&'a dyn Fn(u32) -> Vec<u32>>,
    /// `compatible(p, x)`: may `x` enter `p`'s candidate queue.
    pub compatible: Option<&'a dyn Fn(u32, u32) -> bool>,
    /// `may_prune(p, keeper, victim)`: may `keeper` evict `victim` from `p`'s list.
    pub may_prune: Option<&'a dyn Fn(u32, u32, u32) -> bool>,
}

/// Node whose vector is closest to the centroid of `members`.
pub fn medoid(vectors: &Vectors, members: &[u32]) -> Option<u32> {
    if members.is_empty() {
        return None;
    }
    let dim = vectors.dim();
    let mut centroid = vec![0.0f64; dim];
    // a sampled centroid is close enough for large member lists
    let step = (members.len() / 10_000).max(1);
    let mut used = 0usize;
    for &m in members.iter().step_by(step) {
        for (c, &x) in centroid.iter_mut().zip(vectors.get(m as usize)) {
            *c += x as f64;
        }
        used += 1;
    }
    let centroid: Vec<f32> = centroid.iter().map(|c| (c / used as f64) as f32).collect();
    members
        .iter()
        .map(|&m| Neighbor::new(m, squared_l2(&centroid, vectors.get(m as usize))))
        .min()
        .map(|n| n.id)
}

/// Two insertion passes in a seeded random order: the first with α = 1, the
/// second with the configured α.
pub fn build_vamana(
    vectors: &Vectors,
    metric: DistanceMetric,
    params: &PruneParams,
    rules: VamanaRules<'_>,
    seed: u64,
) -> Result<ProximityGraph> {
    params.validate()?;
    let n = vectors.len();
    let all: Vec<u32> = (0..n as u32).collect();
    let Some(center) = medoid(vectors, &all) else {
        return Ok(ProximityGraph::from_adjacency(Vec::new(), Vec::new(), params.degree));
    };
    let pair = super::pair_distance(vectors, metric);
    let mut adj: Vec<Vec<u32>> = vec![Vec::new(); n];
    let mut order = all;
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let passes = if params.alpha > 1.0 { vec![1.0, params.alpha] } else { vec![1.0] };
    for alpha in passes {
        for &p in &order {
            let starts = match rules.starts {
                Some(f) => f(p),
                None => vec![center],
            };
            let traverse = |x: u32| rules.compatible.map_or(true, |f| f(p, x));
            let bp = BeamParams {
                beam_width: params.beam,
                hop_mode: HopMode::OneHop,
                accept: &traverse,
                traverse: &traverse,
                record_expanded: true,
            };
            let out = beam_search(&adj[..], &starts, |x| pair(p, x), &bp);
            let mut cands = out.expanded;
            cands.extend(adj[p as usize].iter().map(|&x| Neighbor::new(x, pair(p, x))));
            cands.retain(|c| traverse(c.id));
            let prune_for = |node: u32| move |keep: u32, victim: u32| rules.may_prune.map_or(true, |f| f(node, keep, victim));
            let rule_p = prune_for(p);
            let chosen = robust_prune(
                p,
                &cands,
                alpha,
                params.degree,
                &pair,
                rules.may_prune.map(|_| &rule_p as &dyn Fn(u32, u32) -> bool),
            );
            adj[p as usize] = chosen.clone();
            for j in chosen {
                let list = &mut adj[j as usize];
                if list.contains(&p) {
                    continue;
                }
                list.push(p);
                if list.len() > params.degree {
                    let cands: Vec<Neighbor> =
                        list.iter().map(|&x| Neighbor::new(x, pair(j, x))).collect();
                    let rule_j = prune_for(j);
                    adj[j as usize] = robust_prune(
                        j,
                        &cands,
                        alpha,
                        params.degree,
                        &pair,
                        rules.may_prune.map(|_| &rule_j as &dyn Fn(u32, u32) -> bool),
                    );
                }
            }
        }
    }
    Ok(ProximityGraph::from_adjacency(adj, vec![center], params.degree))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LabelSet;
    use crate::oracle::top_k;
    use rand::Rng;

    fn uniform(n: usize, d: usize, seed: u64) -> Vectors {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Vectors::new(d, (0..n * d).map(|_| rng.gen::<f32>()).collect()).unwrap()
    }

    #[test]
    fn alpha_below_one_rejected() {
        assert!(PruneParams::new(0.9, 8, 20).is_err());
    }

    #[test]
    fn two_nodes_are_linked() {
        let vs = uniform(2, 3, 0);
        let p = PruneParams::new(1.2, 4, 10).unwrap();
        let g = build_vamana(&vs, DistanceMetric::SquaredEuclidean, &p, VamanaRules::default(), 1).unwrap();
        assert_eq!(g.neighbors(0), [1]);
        assert_eq!(g.neighbors(1), [0]);
    }

    #[test]
    fn plain_vamana_recall() {
        let vs = uniform(1000, 16, 2);
        let m = DistanceMetric::SquaredEuclidean;
        let p = PruneParams::new(1.2, 32, 64).unwrap();
        let g = build_vamana(&vs, m, &p, VamanaRules::default(), 3).unwrap();
        assert!(g.max_degree_at(0) <= 32);
        let queries = uniform(100, 16, 77);
        let mut hits = 0;
        for q in queries.iter() {
            let dist = |i: u32| m.eval(q, vs.get(i as usize));
            let got = beam_search(g.adjacency(), g.entry_points(), dist, &BeamParams::unfiltered(100));
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
    fn label_islands_stay_disconnected() {
        let vs = uniform(200, 4, 5);
        let labels: Vec<LabelSet> = (0..200).map(|i| LabelSet::new([(i % 2) as u32])).collect();
        let compat = |a: u32, b: u32| labels[a as usize].intersects(&labels[b as usize]);
        let evens: Vec<u32> = (0..200).step_by(2).collect();
        let odds: Vec<u32> = (1..200).step_by(2).collect();
        let m0 = medoid(&vs, &evens).unwrap();
        let m1 = medoid(&vs, &odds).unwrap();
        let starts = |p: u32| vec![if p % 2 == 0 { m0 } else { m1 }];
        let rules = VamanaRules {
            starts: Some(&starts),
            compatible: Some(&compat),
            may_prune: None,
        };
        let p = PruneParams::new(1.2, 16, 32).unwrap();
        let g = build_vamana(&vs, DistanceMetric::SquaredEuclidean, &p, rules, 9).unwrap();
        assert!(g.edge_count() > 0);
        assert!(g.edges().all(|(a, b)| compat(a, b)));
    }
}
