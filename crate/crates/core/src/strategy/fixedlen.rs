//! Fixed-length equality specialists: NHQ (graph under a fused vector + label
//! distance) and CAPS (k-means clusters split into label sub-clusters).
//!
//! Fixed-length label vectors arrive offset-encoded (position p, value v as
//! label p·V + v), so positional Hamming distance is `L - |a ∩ b|`.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, FannsError, Result};
use crate::graph::{beam_search, build_knn_graph, BeamParams, HopMode};
use crate::model::{dot, DistanceMetric, LabelSet, Neighbor, Vectors};
use crate::oracle::top_k;
use crate::quant::{kmeans, KMeansModel};

/// δ + λ·Hamming over records with label vectors of one fixed length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusedMetric {
    pub base: DistanceMetric,
    pub lambda: f32,
    pub label_length: usize,
}

const LAMBDA_PAIRS: usize = 1000;

impl FusedMetric {
    pub fn new(base: DistanceMetric, lambda: f32, label_length: usize) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(param(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        Ok(FusedMetric { base, lambda, label_length })
    }

    /// λ = mean δ over a sample of record pairs, divided by the label length.
    pub fn auto_lambda(vectors: &Vectors, base: DistanceMetric, label_length: usize, seed: u64) -> f32 {
        let n = vectors.len();
        if n < 2 || label_length == 0 {
            return 0.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut total = 0.0f64;
        for _ in 0..LAMBDA_PAIRS {
            let a = rng.gen_range(0..n);
            let b = (a + rng.gen_range(1..n)) % n;
            total += base.eval(vectors.get(a), vectors.get(b)) as f64;
        }
        ((total / LAMBDA_PAIRS as f64) / label_length as f64).max(0.0) as f32
    }

    #[inline]
    pub fn hamming_unchecked(&self, a: &LabelSet, b: &LabelSet) -> usize {
        self.label_length - a.intersection_len(b).min(self.label_length)
    }

    pub fn hamming(&self, a: &LabelSet, b: &LabelSet) -> Result<usize> {
        for s in [a, b] {
            if s.len() != self.label_length {
                return Err(FannsError::ConstraintViolation(format!(
                    "label vector {s} has length {}, expected {}",
                    s.len(),
                    self.label_length
                )));
            }
        }
        Ok(self.hamming_unchecked(a, b))
    }

    #[inline]
    pub fn eval(&self, va: &[f32], la: &LabelSet, vb: &[f32], lb: &LabelSet) -> f32 {
        self.base.eval(va, vb) + self.lambda * self.hamming_unchecked(la, lb) as f32
    }

    pub fn distance(&self, va: &[f32], la: &LabelSet, vb: &[f32], lb: &LabelSet) -> Result<f32> {
        let h = self.hamming(la, lb)?;
        Ok(crate::model::distance(self.base, va, vb)? + self.lambda * h as f32)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NhqParams {
    pub k: usize,
    pub iterations: usize,
    pub diversify: usize,
    /// `None` picks λ automatically.
    pub lambda: Option<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NhqIndex {
    metric: FusedMetric,
    adj: Vec<Vec<u32>>,
    entries: Vec<u32>,
}

const NHQ_ENTRIES: usize = 16;
/// Candidates closer than this cosine to an already chosen direction are skipped.
const DIVERSE_COS: f32 = 0.5;

impl NhqIndex {
    pub fn build(
        vectors: &Vectors,
        labels: &[LabelSet],
        base: DistanceMetric,
        params: &NhqParams,
        seed: u64,
    ) -> Result<Self> {
        let n = vectors.len();
        let label_length = crate::model::uniform_label_length(labels).ok_or_else(|| {
            FannsError::ConstraintViolation("NHQ needs label vectors of one fixed length".into())
        })?;
        let lambda = params
            .lambda
            .unwrap_or_else(|| FusedMetric::auto_lambda(vectors, base, label_length, seed));
        let metric = FusedMetric::new(base, lambda, label_length)?;
        if n <= 1 {
            return Ok(NhqIndex { metric, adj: vec![Vec::new(); n], entries: (0..n as u32).collect() });
        }
        let pair = |a: u32, b: u32| {
            metric.eval(vectors.get(a as usize), &labels[a as usize], vectors.get(b as usize), &labels[b as usize])
        };
        let k = params.k.clamp(1, n - 1);
        let knn = build_knn_graph(n, k, params.iterations, pair, seed)?;

        let picks: Vec<Vec<u32>> = (0..n as u32)
            .into_par_iter()
            .map(|v| diversify(vectors, v, knn.adjacency(), params.diversify, &pair))
            .collect();
        let cap = k + 2 * params.diversify;
        let mut adj: Vec<Vec<u32>> = knn.into_adjacency();
        for (v, ps) in picks.iter().enumerate() {
            for &p in ps {
                if !adj[v].contains(&p) {
                    adj[v].push(p);
                }
            }
        }
        for (v, ps) in picks.iter().enumerate() {
            for &p in ps {
                let back = &mut adj[p as usize];
                if back.len() < cap && !back.contains(&(v as u32)) {
                    back.push(v as u32);
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let mut entries: Vec<u32> = sample(&mut rng, n, NHQ_ENTRIES.min(n))
            .into_iter()
            .map(|i| i as u32)
            .collect();
        entries.sort_unstable();
        Ok(NhqIndex { metric, adj, entries })
    }

    pub fn metric(&self) -> &FusedMetric {
        &self.metric
    }

    pub fn adjacency(&self) -> &[Vec<u32>] {
        &self.adj
    }

    /// Beam search under the fused distance; only exact label matches are
    /// returned, ranked by δ.
    #[allow(clippy::too_many_arguments)]
    pub fn search(
        &self,
        vectors: &Vectors,
        record_labels: &[LabelSet],
        query: &[f32],
        labels: &LabelSet,
        k: usize,
        l: usize,
    ) -> Vec<Neighbor> {
        if labels.len() != self.metric.label_length || self.adj.is_empty() {
            return Vec::new();
        }
        let dist = |i: u32| self.metric.eval(query, labels, vectors.get(i as usize), &record_labels[i as usize]);
        let accept = |v: u32| record_labels[v as usize] == *labels;
        let always = |_: u32| true;
        let params = BeamParams {
            beam_width: l.max(k),
            hop_mode: HopMode::OneHop,
            accept: &accept,
            traverse: &always,
            record_expanded: false,
        };
        let found = beam_search(&self.adj[..], &self.entries, dist, &params).results;
        top_k(
            found
                .into_iter()
                .map(|n| Neighbor::new(n.id, self.metric.base.eval(query, vectors.get(n.id as usize)))),
            k,
        )
    }
}

/// Greedy angular spread over the two-hop pool of `v`, nearest first.
fn diversify<P: Fn(u32, u32) -> f32>(
    vectors: &Vectors,
    v: u32,
    knn: &[Vec<u32>],
    budget: usize,
    pair: &P,
) -> Vec<u32> {
    if budget == 0 {
        return Vec::new();
    }
    let mut pool: Vec<u32> = knn[v as usize]
        .iter()
        .flat_map(|&u| std::iter::once(u).chain(knn[u as usize].iter().copied()))
        .filter(|&u| u != v)
        .collect();
    pool.sort_unstable();
    pool.dedup();
    let mut pool: Vec<Neighbor> = pool.into_iter().map(|u| Neighbor::new(u, pair(v, u))).collect();
    pool.sort();
    let origin = vectors.get(v as usize);
    let direction = |u: u32| -> Vec<f32> {
        vectors.get(u as usize).iter().zip(origin).map(|(a, b)| a - b).collect()
    };
    let mut chosen: Vec<(u32, Vec<f32>, f32)> = Vec::with_capacity(budget);
    for c in pool {
        if chosen.len() >= budget {
            break;
        }
        let dir = direction(c.id);
        let norm = dot(&dir, &dir).sqrt();
        if norm == 0.0 {
            continue;
        }
        let spread = chosen
            .iter()
            .all(|(_, d, nd)| dot(&dir, d) / (norm * nd) < DIVERSE_COS);
        if spread {
            chosen.push((c.id, dir, norm));
        }
    }
    chosen.into_iter().map(|(u, _, _)| u).collect()
}

/// A sub-cluster: the remaining members carrying `label` when it was created,
/// or the final remainder (`label = None`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubCluster {
    pub label: Option<u32>,
    pub members: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapsIndex {
    coarse: KMeansModel,
    /// Sub-clusters of each coarse cluster in creation order.
    clusters: Vec<Vec<SubCluster>>,
    h: usize,
}

const CAPS_ITERATIONS: usize = 20;
const CAPS_TRAIN: usize = 50_000;

impl CapsIndex {
    pub fn build(vectors: &Vectors, labels: &[LabelSet], k_c: usize, h: usize, seed: u64) -> Result<Self> {
        if h < 1 {
            return Err(param("h must be at least 1"));
        }
        let n = vectors.len();
        if k_c == 0 || k_c > n {
            return Err(param(format!("k_c must be in 1..={n}, got {k_c}")));
        }
        let train = if n > CAPS_TRAIN {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut ids: Vec<u32> = sample(&mut rng, n, CAPS_TRAIN).into_iter().map(|i| i as u32).collect();
            ids.sort_unstable();
            vectors.select(&ids)
        } else {
            vectors.clone()
        };
        let coarse = kmeans(&train, k_c, CAPS_ITERATIONS, seed)?;
        let assigned: Vec<usize> = (0..n).into_par_iter().map(|i| coarse.assign(vectors.get(i)).0).collect();
        let mut members = vec![Vec::new(); k_c];
        for (i, &c) in assigned.iter().enumerate() {
            members[c].push(i as u32);
        }
        let clusters = members
            .into_par_iter()
            .map(|mut remaining| {
                let mut subs = Vec::new();
                while subs.len() + 1 < h && !remaining.is_empty() {
                    let mut counts: std::collections::BTreeMap<u32, usize> = Default::default();
                    for &v in &remaining {
                        for l in labels[v as usize].iter() {
                            *counts.entry(l).or_default() += 1;
                        }
                    }
                    // most frequent label, lowest id on ties
                    let Some((label, _)) = counts
                        .into_iter()
                        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
                    else {
                        break;
                    };
                    let (hit, rest): (Vec<u32>, Vec<u32>) =
                        remaining.into_iter().partition(|&v| labels[v as usize].contains(label));
                    subs.push(SubCluster { label: Some(label), members: hit });
                    remaining = rest;
                }
                if !remaining.is_empty() {
                    subs.push(SubCluster { label: None, members: remaining });
                }
                subs
            })
            .collect();
        Ok(CapsIndex { coarse, clusters, h })
    }

    pub fn k_c(&self) -> usize {
        self.clusters.len()
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn clusters(&self) -> &[Vec<SubCluster>] {
        &self.clusters
    }

    /// Every record sits in exactly one sub-cluster of the coarse cluster it
    /// is assigned to, and labeled sub-clusters shrink in creation order.
    pub fn audit(&self, vectors: &Vectors) -> bool {
        let mut seen = vec![false; vectors.len()];
        for (c, subs) in self.clusters.iter().enumerate() {
            if subs.len() > self.h {
                return false;
            }
            let sizes: Vec<usize> = subs.iter().filter(|s| s.label.is_some()).map(|s| s.members.len()).collect();
            if sizes.windows(2).any(|w| w[1] > w[0]) {
                return false;
            }
            for s in subs {
                for &v in &s.members {
                    if std::mem::replace(&mut seen[v as usize], true)
                        || self.coarse.assign(vectors.get(v as usize)).0 != c
                    {
                        return false;
                    }
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn search(
        &self,
        vectors: &Vectors,
        record_labels: &[LabelSet],
        metric: DistanceMetric,
        query: &[f32],
        labels: &LabelSet,
        k: usize,
        nprobe: usize,
    ) -> Vec<Neighbor> {
        let mut hits = Vec::new();
        for c in self.coarse.nearest(query, nprobe.max(1)) {
            for sub in &self.clusters[c] {
                if sub.label.is_some_and(|l| !labels.contains(l)) {
                    continue;
                }
                hits.extend(
                    sub.members
                        .iter()
                        .filter(|&&v| record_labels[v as usize] == *labels)
                        .map(|&v| Neighbor::new(v, metric.eval(query, vectors.get(v as usize)))),
                );
                if sub.label.is_some() {
                    // every remaining match carries this label
                    break;
                }
            }
        }
        top_k(hits, k)
    }
}
