//! Approximate K-nearest-neighbor graph by NN-descent.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::ProximityGraph;
use crate::error::{param, Result};
use crate::model::Neighbor;

const JOIN_CHUNK: usize = 1024;

#[derive(Clone, Copy)]
struct Slot {
    n: Neighbor,
    new: bool,
}

/// Insert into a sorted, bounded list; returns true on change.
fn try_insert(list: &mut Vec<Slot>, cand: Neighbor, k: usize) -> bool {
    if list.len() >= k && cand >= list[k - 1].n {
        return false;
    }
    if list.iter().any(|s| s.n.id == cand.id) {
        return false;
    }
    let pos = list.partition_point(|s| s.n < cand);
    list.insert(pos, Slot { n: cand, new: true });
    list.truncate(k);
    true
}

/// NN-descent over `n` nodes with an arbitrary symmetric distance.
///
/// Joins are evaluated in parallel but applied in node order, so the result
/// depends only on `seed`.
pub fn build_knn_graph<D>(n: usize, k: usize, iterations: usize, dist: D, seed: u64) -> Result<ProximityGraph>
where
    D: Fn(u32, u32) -> f32 + Sync,
{
    if n == 0 {
        return Ok(ProximityGraph::from_adjacency(Vec::new(), Vec::new(), k));
    }
    if k == 0 || k >= n {
        return Err(param(format!("K must satisfy 0 < K < n, got K={k}, n={n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lists: Vec<Vec<Slot>> = (0..n as u32)
        .map(|v| {
            let mut l = Vec::with_capacity(k);
            for u in sample(&mut rng, n - 1, k).into_iter() {
                let u = if u as u32 >= v { u as u32 + 1 } else { u as u32 };
                try_insert(&mut l, Neighbor::new(u, dist(v, u)), k);
            }
            l
        })
        .collect();

    for _ in 0..iterations {
        let mut new_sets: Vec<Vec<u32>> = vec![Vec::new(); n];
        let mut old_sets: Vec<Vec<u32>> = vec![Vec::new(); n];
        for (v, list) in lists.iter_mut().enumerate() {
            for s in list.iter_mut() {
                if s.new {
                    new_sets[v].push(s.n.id);
                    s.new = false;
                } else {
                    old_sets[v].push(s.n.id);
                }
            }
        }
        let mut rev_new: Vec<Vec<u32>> = vec![Vec::new(); n];
        let mut rev_old: Vec<Vec<u32>> = vec![Vec::new(); n];
        for v in 0..n {
            for &u in &new_sets[v] {
                if rev_new[u as usize].len() < k {
                    rev_new[u as usize].push(v as u32);
                }
            }
            for &u in &old_sets[v] {
                if rev_old[u as usize].len() < k {
                    rev_old[u as usize].push(v as u32);
                }
            }
        }
        for v in 0..n {
            new_sets[v].append(&mut rev_new[v]);
            new_sets[v].sort_unstable();
            new_sets[v].dedup();
            old_sets[v].append(&mut rev_old[v]);
            old_sets[v].sort_unstable();
            old_sets[v].dedup();
        }

        let mut updates = 0usize;
        for start in (0..n).step_by(JOIN_CHUNK) {
            let end = (start + JOIN_CHUNK).min(n);
            let pairs: Vec<Vec<(u32, u32, f32)>> = (start..end)
                .into_par_iter()
                .map(|v| {
                    let nv = &new_sets[v];
                    let ov = &old_sets[v];
                    let mut out = Vec::new();
                    for (i, &a) in nv.iter().enumerate() {
                        for &b in &nv[i + 1..] {
                            out.push((a, b, dist(a, b)));
                        }
                        for &b in ov {
                            if a != b {
                                out.push((a, b, dist(a, b)));
                            }
                        }
                    }
                    out
                })
                .collect();
            for (a, b, d) in pairs.into_iter().flatten() {
                updates += try_insert(&mut lists[a as usize], Neighbor::new(b, d), k) as usize;
                updates += try_insert(&mut lists[b as usize], Neighbor::new(a, d), k) as usize;
            }
        }
        if updates == 0 {
            break;
        }
    }

    let adj = lists
        .into_iter()
        .map(|l| l.into_iter().map(|s| s.n.id).collect())
        .collect();
    Ok(ProximityGraph::from_adjacency(adj, vec![0], k))
}
