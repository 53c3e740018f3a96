//! Label-aware Vamana graphs: Filtered-Vamana (one graph built with label
//! rules) and Stitched-Vamana (per-label graphs merged and re-pruned).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::graph::{
    beam_search, build_vamana, medoid, robust_prune, BeamParams, HopMode, PruneParams, VamanaRules,
};
use crate::model::{satisfies, DistanceMetric, FilterConstraint, LabelSet, Neighbor, Vectors};

/// Graph plus one start node per label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelGraphIndex {
    adj: Vec<Vec<u32>>,
    /// `starts[label]`, `u32::MAX` for labels no record carries.
    starts: Vec<u32>,
    /// Medoid of the whole dataset, used for empty query label sets.
    global_start: u32,
}

const NO_START: u32 = u32::MAX;

/// Records carrying each label.
pub(crate) fn label_members(labels: &[LabelSet]) -> Vec<Vec<u32>> {
    let universe = labels
        .iter()
        .filter_map(|s| s.as_slice().last())
        .max()
        .map_or(0, |&m| m as usize + 1);
    let mut out = vec![Vec::new(); universe];
    for (i, s) in labels.iter().enumerate() {
        for l in s.iter() {
            out[l as usize].push(i as u32);
        }
    }
    out
}

fn label_medoids(vectors: &Vectors, members: &[Vec<u32>]) -> Vec<u32> {
    members
        .par_iter()
        .map(|m| medoid(vectors, m).unwrap_or(NO_START))
        .collect()
}

/// Keeper `c` may evict `victim` from `p`'s list only if it carries every
/// label `victim` shares with `p`.
fn label_prune_rule(labels: &[LabelSet], p: u32, keeper: u32, victim: u32) -> bool {
    let (fp, fc) = (&labels[p as usize], &labels[keeper as usize]);
    labels[victim as usize]
        .iter()
        .filter(|&l| fp.contains(l))
        .all(|l| fc.contains(l))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StitchedParams {
    pub alpha: f32,
    pub r_small: usize,
    pub l_small: usize,
    pub r_stitched: usize,
}

/// One label's graph before stitching, in global ids.
#[derive(Debug, Clone)]
pub struct LabelSubgraph {
    pub label: u32,
    pub edges: Vec<(u32, u32)>,
}

impl LabelGraphIndex {
    pub fn build_filtered(
        vectors: &Vectors,
        labels: &[LabelSet],
        metric: DistanceMetric,
        params: &PruneParams,
        seed: u64,
    ) -> Result<Self> {
        if params.degree > params.beam {
            return Err(param(format!(
                "R = {} must not exceed L_build = {}",
                params.degree, params.beam
            )));
        }
        let members = label_members(labels);
        let starts = label_medoids(vectors, &members);
        let start_fn = |p: u32| -> Vec<u32> {
            labels[p as usize]
                .iter()
                .map(|l| starts[l as usize])
                .collect()
        };
        let compat = |p: u32, x: u32| labels[p as usize].intersects(&labels[x as usize]);
        let prune = |p: u32, c: u32, v: u32| label_prune_rule(labels, p, c, v);
        let rules = VamanaRules {
            starts: Some(&start_fn),
            compatible: Some(&compat),
            may_prune: Some(&prune),
        };
        let graph = build_vamana(vectors, metric, params, rules, seed)?;
        let global_start = graph.entry_points().first().copied().unwrap_or(NO_START);
        Ok(LabelGraphIndex {
            adj: graph.into_adjacency(),
            starts,
            global_start,
        })
    }

    pub fn build_stitched(
        vectors: &Vectors,
        labels: &[LabelSet],
        metric: DistanceMetric,
        params: &StitchedParams,
        seed: u64,
    ) -> Result<Self> {
        Self::build_stitched_parts(vectors, labels, metric, params, seed).map(|(idx, _)| idx)
    }

    /// Also returns the per-label graphs as they were before stitching.
    pub fn build_stitched_parts(
        vectors: &Vectors,
        labels: &[LabelSet],
        metric: DistanceMetric,
        params: &StitchedParams,
        seed: u64,
    ) -> Result<(Self, Vec<LabelSubgraph>)> {
        if params.r_small == 0 || params.r_stitched == 0 {
            return Err(param("R_small and R_stitched must be at least 1"));
        }
        let prune = PruneParams::new(params.alpha, params.r_small, params.l_small.max(1))?;
        let members = label_members(labels);
        let starts = label_medoids(vectors, &members);
        let subgraphs: Vec<LabelSubgraph> = members
            .par_iter()
            .enumerate()
            .filter(|(_, m)| !m.is_empty())
            .map(|(label, m)| -> Result<LabelSubgraph> {
                let local = vectors.select(m);
                let g = build_vamana(&local, metric, &prune, VamanaRules::default(), seed ^ label as u64)?;
                let edges = g.edges().map(|(a, b)| (m[a as usize], m[b as usize])).collect();
                Ok(LabelSubgraph { label: label as u32, edges })
            })
            .collect::<Result<_>>()?;

        let n = vectors.len();
        let mut adj: Vec<Vec<u32>> = vec![Vec::new(); n];
        for sg in &subgraphs {
            for &(a, b) in &sg.edges {
                if !adj[a as usize].contains(&b) {
                    adj[a as usize].push(b);
                }
            }
        }
        let pair = |a: u32, b: u32| metric.eval(vectors.get(a as usize), vectors.get(b as usize));
        adj.par_iter_mut().enumerate().for_each(|(p, list)| {
            if list.len() > params.r_stitched {
                let p = p as u32;
                let cands: Vec<Neighbor> = list.iter().map(|&x| Neighbor::new(x, pair(p, x))).collect();
                let rule = |c: u32, v: u32| label_prune_rule(labels, p, c, v);
                *list = robust_prune(p, &cands, params.alpha, params.r_stitched, pair, Some(&rule));
            }
        });
        let all: Vec<u32> = (0..n as u32).collect();
        let global_start = medoid(vectors, &all).unwrap_or(NO_START);
        Ok((LabelGraphIndex { adj, starts, global_start }, subgraphs))
    }

    pub fn adjacency(&self) -> &[Vec<u32>] {
        &self.adj
    }

    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.adj
            .iter()
            .enumerate()
            .flat_map(|(v, ns)| ns.iter().map(move |&u| (v as u32, u)))
    }

    pub fn start_of(&self, label: u32) -> Option<u32> {
        self.starts.get(label as usize).copied().filter(|&s| s != NO_START)
    }

    /// Every edge joins records that share a label.
    pub fn audit_label_intersection(&self, labels: &[LabelSet]) -> bool {
        self.edges()
            .all(|(a, b)| labels[a as usize].intersects(&labels[b as usize]))
    }

    /// Starts at the query labels' medoids and expands through records that
    /// overlap the query labels; the full constraint is checked only when a
    /// node enters the result list.
    #[allow(clippy::too_many_arguments)]
    pub fn search(
        &self,
        vectors: &Vectors,
        record_labels: &[LabelSet],
        metric: DistanceMetric,
        query: &[f32],
        labels: &LabelSet,
        constraint: FilterConstraint,
        k: usize,
        l: usize,
    ) -> Vec<Neighbor> {
        let dist = |i: u32| metric.eval(query, vectors.get(i as usize));
        let accept = |v: u32| satisfies(&record_labels[v as usize], labels, constraint);
        let mut out = if labels.is_empty() {
            if self.global_start == NO_START {
                return Vec::new();
            }
            let always = |_: u32| true;
            let params = BeamParams {
                beam_width: l.max(k),
                hop_mode: HopMode::OneHop,
                accept: &accept,
                traverse: &always,
                record_expanded: false,
            };
            beam_search(&self.adj[..], &[self.global_start], dist, &params).results
        } else {
            let mut starts: Vec<u32> = labels.iter().filter_map(|l| self.start_of(l)).collect();
            starts.sort_unstable();
            starts.dedup();
            if starts.is_empty() {
                return Vec::new();
            }
            let traverse = |v: u32| record_labels[v as usize].intersects(labels);
            let params = BeamParams {
                beam_width: l.max(k),
                hop_mode: HopMode::OneHop,
                accept: &accept,
                traverse: &traverse,
                record_expanded: false,
            };
            beam_search(&self.adj[..], &starts, dist, &params).results
        };
        out.truncate(k);
        out
    }
}
