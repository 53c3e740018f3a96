use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kmeans::{kmeans, KMeansModel};
use super::pq::PqCodebook;
use crate::error::{param, Result};
use crate::model::{dot, DistanceMetric, Neighbor, Vectors};

const COARSE_ITERATIONS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IvfPqParams {
    pub nlist: usize,
    pub m: usize,
    /// Training sample cap for the coarse quantizer and the codebooks.
    pub train_size: usize,
    pub seed: u64,
}

impl IvfPqParams {
    pub fn new(nlist: usize, m: usize, seed: u64) -> Self {
        IvfPqParams { nlist, m, train_size: 50_000, seed }
    }
}

/// Inverted lists over a coarse k-means, residuals encoded with PQ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IvfPqIndex {
    coarse: KMeansModel,
    pq: PqCodebook,
    /// Ids per list, ascending.
    lists: Vec<Vec<u32>>,
    /// Coarse list of each id.
    list_of: Vec<u32>,
    /// `n * m` codes indexed by id.
    codes: Vec<u8>,
}

impl IvfPqIndex {
    pub fn build(vectors: &Vectors, params: &IvfPqParams) -> Result<Self> {
        let n = vectors.len();
        if params.nlist == 0 || params.nlist > n {
            return Err(param(format!("nlist must be in 1..={n}, got {}", params.nlist)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let cap = params.train_size.max(params.nlist);
        let train = if n > cap {
            let mut ids: Vec<u32> = sample(&mut rng, n, cap).into_iter().map(|i| i as u32).collect();
            ids.sort_unstable();
            vectors.select(&ids)
        } else {
            vectors.clone()
        };
        let coarse = kmeans(&train, params.nlist, COARSE_ITERATIONS, params.seed)?;
        let list_of: Vec<u32> = (0..n)
            .into_par_iter()
            .map(|i| coarse.assign(vectors.get(i)).0 as u32)
            .collect();
        let residual = |i: usize, c: usize| -> Vec<f32> {
            vectors
                .get(i)
                .iter()
                .zip(coarse.centroids.get(c))
                .map(|(x, y)| x - y)
                .collect()
        };
        let train_assign: Vec<usize> = (0..train.len())
            .into_par_iter()
            .map(|i| coarse.assign(train.get(i)).0)
            .collect();
        let mut residuals = Vectors::empty(vectors.dim());
        for (i, &c) in train_assign.iter().enumerate() {
            let r: Vec<f32> = train.get(i).iter().zip(coarse.centroids.get(c)).map(|(x, y)| x - y).collect();
            residuals.push(&r)?;
        }
        let pq = PqCodebook::train(&residuals, params.m, params.seed.wrapping_add(1))?;
        let codes: Vec<u8> = (0..n)
            .into_par_iter()
            .flat_map_iter(|i| pq.encode(&residual(i, list_of[i] as usize)))
            .collect();
        let mut lists = vec![Vec::new(); params.nlist];
        for (i, &c) in list_of.iter().enumerate() {
            lists[c as usize].push(i as u32);
        }
        Ok(IvfPqIndex { coarse, pq, lists, list_of, codes })
    }

    pub fn nlist(&self) -> usize {
        self.lists.len()
    }

    pub fn len(&self) -> usize {
        self.list_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.list_of.is_empty()
    }

    pub fn lists(&self) -> &[Vec<u32>] {
        &self.lists
    }

    pub fn list_of(&self, id: u32) -> usize {
        self.list_of[id as usize] as usize
    }

    pub fn code(&self, id: u32) -> &[u8] {
        let m = self.pq.m();
        &self.codes[id as usize * m..(id as usize + 1) * m]
    }

    /// Every id appears in exactly one list, in ascending order, and the
    /// lists agree with `list_of`.
    pub fn audit_partition(&self) -> bool {
        let mut seen = vec![false; self.len()];
        for (c, list) in self.lists.iter().enumerate() {
            if list.windows(2).any(|w| w[0] >= w[1]) {
                return false;
            }
            for &id in list {
                let Some(slot) = seen.get_mut(id as usize) else {
                    return false;
                };
                if *slot || self.list_of[id as usize] as usize != c {
                    return false;
                }
                *slot = true;
            }
        }
        seen.iter().all(|&s| s)
    }

    /// ADC-scored members of the `nprobe` lists nearest to `query`, in probe order.
    pub fn probe(&self, query: &[f32], nprobe: usize, metric: DistanceMetric) -> Vec<Neighbor> {
        let mut out = Vec::new();
        for c in self.coarse.nearest(query, nprobe.max(1)) {
            let centroid = self.coarse.centroids.get(c);
            let (table, offset) = match metric {
                DistanceMetric::SquaredEuclidean => {
                    let r: Vec<f32> = query.iter().zip(centroid).map(|(q, x)| q - x).collect();
                    (self.pq.lookup_table(&r, metric), 0.0)
                }
                DistanceMetric::InnerProductDistance => {
                    (self.pq.lookup_table(query, metric), -dot(query, centroid))
                }
            };
            out.extend(
                self.lists[c]
                    .iter()
                    .map(|&id| Neighbor::new(id, offset + table.distance(self.code(id)))),
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::top_k;
    use rand::Rng;

    fn random(n: usize, d: usize, seed: u64) -> Vectors {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Vectors::new(d, (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn single_list_holds_everything() {
        let vs = random(100, 8, 0);
        let idx = IvfPqIndex::build(&vs, &IvfPqParams::new(1, 4, 1)).unwrap();
        assert_eq!(idx.lists()[0], (0..100).collect::<Vec<u32>>());
        assert!(idx.audit_partition());
    }

    #[test]
    fn partition_property() {
        let vs = random(1000, 16, 2);
        let idx = IvfPqIndex::build(&vs, &IvfPqParams::new(32, 4, 3)).unwrap();
        assert!(idx.audit_partition());
        assert_eq!(idx.lists().iter().map(Vec::len).sum::<usize>(), 1000);
    }

    #[test]
    fn full_probe_with_exact_rerank_is_exact() {
        let vs = random(1000, 16, 4);
        let m = DistanceMetric::SquaredEuclidean;
        let idx = IvfPqIndex::build(&vs, &IvfPqParams::new(20, 4, 5)).unwrap();
        for q in random(20, 16, 6).iter() {
            let probed = idx.probe(q, 20, m);
            assert_eq!(probed.len(), 1000);
            let reranked = top_k(probed.iter().map(|n| Neighbor::new(n.id, m.eval(q, vs.get(n.id as usize)))), 10);
            let exact = top_k((0..1000).map(|i| Neighbor::new(i, m.eval(q, vs.get(i as usize)))), 10);
            assert_eq!(reranked, exact);
        }
    }

    #[test]
    fn residual_adc_tracks_true_distance() {
        let vs = random(2000, 16, 7);
        let m = DistanceMetric::SquaredEuclidean;
        let idx = IvfPqIndex::build(&vs, &IvfPqParams::new(16, 8, 8)).unwrap();
        let q = random(1, 16, 9);
        let q = q.get(0);
        let probed = idx.probe(q, 16, m);
        let mut rel: Vec<f32> = probed
            .iter()
            .map(|n| {
                let e = m.eval(q, vs.get(n.id as usize));
                (n.distance - e).abs() / e
            })
            .collect();
        rel.sort_by(f32::total_cmp);
        assert!(rel[rel.len() / 2] < 0.35);
    }
}
