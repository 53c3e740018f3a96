//! Unified navigating graph: records grouped by exact label set, one proximity
//! graph per group, and cross edges that only ever point from a label set to
//! a superset of it.

use std::cell::RefCell;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::graph::{beam_search, build_vamana, Adjacency, BeamParams, PruneParams, VamanaRules};
use crate::model::{DistanceMetric, FilterConstraint, LabelSet, Neighbor, Vectors};
use crate::oracle::top_k;

/// Records partitioned by label set, in ascending label-set order.
pub fn group_by_label_set(labels: &[LabelSet]) -> Vec<(LabelSet, Vec<u32>)> {
    let mut groups: std::collections::BTreeMap<&LabelSet, Vec<u32>> = Default::default();
    for (i, l) in labels.iter().enumerate() {
        groups.entry(l).or_default().push(i as u32);
    }
    groups.into_iter().map(|(l, m)| (l.clone(), m)).collect()
}

/// Containment DAG over the distinct label sets, keeping only minimal edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelNavGraph {
    sets: Vec<LabelSet>,
    members: Vec<Vec<u32>>,
    children: Vec<Vec<u32>>,
    parents: Vec<Vec<u32>>,
    /// Groups whose set holds each label, ascending.
    postings: Vec<Vec<u32>>,
}

fn intersect_sorted(a: &[u32], b: &[u32]) -> Vec<u32> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out
}

impl LabelNavGraph {
    pub fn build(labels: &[LabelSet]) -> Self {
        let (sets, members): (Vec<LabelSet>, Vec<Vec<u32>>) =
            group_by_label_set(labels).into_iter().unzip();
        let universe = sets
            .iter()
            .filter_map(|s| s.as_slice().last())
            .max()
            .map_or(0, |&m| m as usize + 1);
        let mut postings = vec![Vec::new(); universe];
        for (g, s) in sets.iter().enumerate() {
            for l in s.iter() {
                postings[l as usize].push(g as u32);
            }
        }
        let mut lng = LabelNavGraph {
            children: vec![Vec::new(); sets.len()],
            parents: vec![Vec::new(); sets.len()],
            sets,
            members,
            postings,
        };
        let children: Vec<Vec<u32>> = (0..lng.sets.len())
            .into_par_iter()
            .map(|g| {
                let mut supers: Vec<u32> = lng
                    .supersets(&lng.sets[g])
                    .into_iter()
                    .filter(|&s| s as usize != g)
                    .collect();
                supers.sort_by_key(|&s| (lng.sets[s as usize].len(), s));
                let mut minimal: Vec<u32> = Vec::new();
                for s in supers {
                    let b = &lng.sets[s as usize];
                    if !minimal.iter().any(|&c| lng.sets[c as usize].is_subset_of(b)) {
                        minimal.push(s);
                    }
                }
                minimal.sort_unstable();
                minimal
            })
            .collect();
        for (g, cs) in children.iter().enumerate() {
            for &c in cs {
                lng.parents[c as usize].push(g as u32);
            }
        }
        lng.children = children;
        lng
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn set(&self, g: usize) -> &LabelSet {
        &self.sets[g]
    }

    pub fn members(&self, g: usize) -> &[u32] {
        &self.members[g]
    }

    pub fn children(&self, g: usize) -> &[u32] {
        &self.children[g]
    }

    pub fn parents(&self, g: usize) -> &[u32] {
        &self.parents[g]
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.children
            .iter()
            .enumerate()
            .flat_map(|(g, cs)| cs.iter().map(move |&c| (g, c as usize)))
    }

    pub fn group_of(&self, set: &LabelSet) -> Option<usize> {
        self.sets.binary_search(set).ok()
    }

    /// Groups whose label set contains `query`, ascending.
    pub fn supersets(&self, query: &LabelSet) -> Vec<u32> {
        let mut labels = query.iter();
        let Some(first) = labels.next() else {
            return (0..self.sets.len() as u32).collect();
        };
        let posting = |l: u32| self.postings.get(l as usize).map_or(&[][..], Vec::as_slice);
        let mut acc = posting(first).to_vec();
        for l in labels {
            if acc.is_empty() {
                break;
            }
            acc = intersect_sorted(&acc, posting(l));
        }
        acc
    }

    /// Minimal groups among the supersets of `query`: those without a parent
    /// that also contains `query`.
    pub fn minimal_supersets(&self, query: &LabelSet) -> Vec<u32> {
        let supers = self.supersets(query);
        supers
            .iter()
            .copied()
            .filter(|&g| {
                !self.parents[g as usize]
                    .iter()
                    .any(|p| supers.binary_search(p).is_ok())
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UngParams {
    pub prune: PruneParams,
    /// Members selected per LNG edge, each linked to this many nearest members
    /// of the superset group.
    pub cross: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UngIndex {
    lng: LabelNavGraph,
    group_of: Vec<u32>,
    /// Intra-group neighbors first, then cross edges.
    adj: Vec<Vec<u32>>,
    intra_len: Vec<u32>,
    group_entry: Vec<u32>,
}

struct IntraView<'a>(&'a UngIndex);

impl Adjacency for IntraView<'_> {
    fn neighbors_of(&self, node: u32) -> &[u32] {
        &self.0.adj[node as usize][..self.0.intra_len[node as usize] as usize]
    }

    fn node_count(&self) -> usize {
        self.0.adj.len()
    }
}

/// Instrumentation for a single search.
#[derive(Debug, Clone, Default)]
pub struct UngTrace {
    /// Label predicate evaluations made while traversing.
    pub label_checks: usize,
    /// Every node whose distance was evaluated.
    pub visited: Vec<u32>,
}

impl UngIndex {
    pub fn build(
        vectors: &Vectors,
        labels: &[LabelSet],
        metric: DistanceMetric,
        params: &UngParams,
        seed: u64,
    ) -> Result<Self> {
        params.prune.validate()?;
        if params.cross == 0 {
            return Err(param("cross must be at least 1"));
        }
        let lng = LabelNavGraph::build(labels);
        let n = vectors.len();
        let mut group_of = vec![0u32; n];
        for g in 0..lng.len() {
            for &v in lng.members(g) {
                group_of[v as usize] = g as u32;
            }
        }
        let r = params.prune.degree;
        let built: Vec<(Vec<(u32, Vec<u32>)>, u32)> = (0..lng.len())
            .into_par_iter()
            .map(|g| -> Result<_> {
                let members = lng.members(g);
                let local = vectors.select(members);
                let graph = if members.len() <= r + 1 {
                    let all: Vec<Vec<u32>> = (0..members.len() as u32)
                        .map(|v| (0..members.len() as u32).filter(|&u| u != v).collect())
                        .collect();
                    let center = crate::graph::medoid(&local, &(0..members.len() as u32).collect::<Vec<_>>());
                    crate::graph::ProximityGraph::from_adjacency(all, center.into_iter().collect(), r)
                } else {
                    build_vamana(&local, metric, &params.prune, VamanaRules::default(), seed ^ g as u64)?
                };
                let lists = (0..members.len())
                    .map(|v| {
                        (
                            members[v],
                            graph.neighbors(v as u32).iter().map(|&u| members[u as usize]).collect(),
                        )
                    })
                    .collect();
                Ok((lists, members[graph.entry_points()[0] as usize]))
            })
            .collect::<Result<_>>()?;
        let mut adj = vec![Vec::new(); n];
        let mut group_entry = Vec::with_capacity(lng.len());
        for (lists, entry) in built {
            for (v, ns) in lists {
                adj[v as usize] = ns;
            }
            group_entry.push(entry);
        }
        let intra_len: Vec<u32> = adj.iter().map(|a| a.len() as u32).collect();

        let pair = |a: u32, b: u32| metric.eval(vectors.get(a as usize), vectors.get(b as usize));
        let cross: Vec<Vec<(u32, u32)>> = (0..lng.len())
            .into_par_iter()
            .map(|a| {
                let sources = spread_members(lng.members(a), group_entry[a], params.cross, &pair);
                let mut edges = Vec::new();
                for &b in lng.children(a) {
                    let targets = lng.members(b as usize);
                    for &s in &sources {
                        let near = top_k(targets.iter().map(|&t| Neighbor::new(t, pair(s, t))), params.cross);
                        edges.extend(near.into_iter().map(|t| (s, t.id)));
                    }
                }
                edges
            })
            .collect();
        for (s, t) in cross.into_iter().flatten() {
            if !adj[s as usize].contains(&t) {
                adj[s as usize].push(t);
            }
        }
        Ok(UngIndex { lng, group_of, adj, intra_len, group_entry })
    }

    pub fn lng(&self) -> &LabelNavGraph {
        &self.lng
    }

    pub fn group_of(&self, v: u32) -> usize {
        self.group_of[v as usize] as usize
    }

    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.adj
            .iter()
            .enumerate()
            .flat_map(|(v, ns)| ns.iter().map(move |&u| (v as u32, u)))
    }

    pub fn cross_edge_count(&self) -> usize {
        self.adj
            .iter()
            .zip(&self.intra_len)
            .map(|(a, &i)| a.len() - i as usize)
            .sum()
    }

    /// Every edge points from a label set to a superset of it.
    pub fn audit_containment(&self, labels: &[LabelSet]) -> bool {
        self.edges()
            .all(|(a, b)| labels[a as usize].is_subset_of(&labels[b as usize]))
    }

    #[allow(clippy::too_many_arguments)]
    pub fn search(
        &self,
        vectors: &Vectors,
        metric: DistanceMetric,
        query: &[f32],
        labels: &LabelSet,
        constraint: FilterConstraint,
        k: usize,
        l: usize,
        trace: Option<&mut UngTrace>,
    ) -> Vec<Neighbor> {
        let log = RefCell::new(UngTrace::default());
        let tracing = trace.is_some();
        let dist = |i: u32| {
            if tracing {
                log.borrow_mut().visited.push(i);
            }
            metric.eval(query, vectors.get(i as usize))
        };
        let params = BeamParams::unfiltered(l.max(k));
        let mut out = match constraint {
            FilterConstraint::Equality | FilterConstraint::FixedLengthEquality => {
                match self.lng.group_of(labels) {
                    Some(g) => beam_search(&IntraView(self), &[self.group_entry[g]], dist, &params).results,
                    None => Vec::new(),
                }
            }
            FilterConstraint::Containment => self.containment(labels, &dist, &params),
            FilterConstraint::Overlap => {
                let mut merged: Vec<Neighbor> = labels
                    .iter()
                    .flat_map(|label| self.containment(&LabelSet::new([label]), &dist, &params))
                    .collect();
                merged.sort();
                merged.dedup_by_key(|n| n.id);
                merged
            }
        };
        out.truncate(k);
        if let Some(t) = trace {
            *t = log.into_inner();
        }
        out
    }

    fn containment<D: Fn(u32) -> f32>(&self, labels: &LabelSet, dist: &D, params: &BeamParams<'_>) -> Vec<Neighbor> {
        let entries: Vec<u32> = self
            .lng
            .minimal_supersets(labels)
            .into_iter()
            .map(|g| self.group_entry[g as usize])
            .collect();
        if entries.is_empty() {
            return Vec::new();
        }
        beam_search(&self.adj[..], &entries, dist, params).results
    }
}

/// `count` members spread out by farthest-point selection from `start`.
fn spread_members<P: Fn(u32, u32) -> f32>(members: &[u32], start: u32, count: usize, pair: &P) -> Vec<u32> {
    let mut chosen = vec![start];
    let mut gap: Vec<f32> = members.iter().map(|&m| pair(start, m)).collect();
    while chosen.len() < count.min(members.len()) {
        let (i, _) = gap
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .expect("members non-empty");
        if gap[i] <= 0.0 {
            break;
        }
        let pick = members[i];
        chosen.push(pick);
        for (g, &m) in gap.iter_mut().zip(members) {
            *g = g.min(pair(pick, m));
        }
    }
    chosen
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sets(raw: &[&[u32]]) -> Vec<LabelSet> {
        raw.iter().map(|s| LabelSet::new(s.iter().copied())).collect()
    }

    #[test]
    fn grouping_partitions_records() {
        let labels = sets(&[&[1], &[2], &[1, 2], &[1], &[2], &[1, 2], &[1], &[2], &[1, 2]]);
        let groups = group_by_label_set(&labels);
        assert_eq!(groups.len(), 3);
        let mut all: Vec<u32> = groups.iter().flat_map(|g| g.1.clone()).collect();
        all.sort();
        assert_eq!(all, (0..9).collect::<Vec<_>>());
        assert_eq!(group_by_label_set(&sets(&[&[4], &[4]])).len(), 1);
    }

    #[test]
    fn lng_edges_are_minimal() {
        let lng = LabelNavGraph::build(&sets(&[&[1], &[2], &[1, 2]]));
        let edges: Vec<_> = lng.edges().map(|(a, b)| (lng.set(a).to_string(), lng.set(b).to_string())).collect();
        assert_eq!(edges, [("{1}".into(), "{1,2}".into()), ("{2}".into(), "{1,2}".into())]);
        let chain = LabelNavGraph::build(&sets(&[&[1], &[1, 2], &[1, 2, 3]]));
        let edges: Vec<_> = chain.edges().map(|(a, b)| (chain.set(a).len(), chain.set(b).len())).collect();
        assert_eq!(edges, [(1, 2), (2, 3)]);
        let flat = LabelNavGraph::build(&sets(&[&[1], &[2], &[3]]));
        assert_eq!(flat.edges().count(), 0);
    }

    #[test]
    fn minimal_supersets_of_empty_are_roots() {
        let lng = LabelNavGraph::build(&sets(&[&[1], &[2], &[1, 2], &[3, 4], &[3]]));
        let roots: Vec<String> = lng
            .minimal_supersets(&LabelSet::empty())
            .into_iter()
            .map(|g| lng.set(g as usize).to_string())
            .collect();
        assert_eq!(roots, ["{1}", "{2}", "{3}"]);
        let q: Vec<String> = lng
            .minimal_supersets(&LabelSet::new([4]))
            .into_iter()
            .map(|g| lng.set(g as usize).to_string())
            .collect();
        assert_eq!(q, ["{3,4}"]);
    }
}
