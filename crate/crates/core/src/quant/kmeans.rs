use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::model::{squared_l2, Vectors};

/// Centroids plus nearest-centroid assignment (squared Euclidean).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansModel {
    pub centroids: Vectors,
}

impl KMeansModel {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn dim(&self) -> usize {
        self.centroids.dim()
    }

    /// Nearest centroid and its squared distance; ties go to the lower index.
    pub fn assign(&self, v: &[f32]) -> (usize, f32) {
        let mut best = (0, f32::INFINITY);
        for (c, centroid) in self.centroids.iter().enumerate() {
            let d = squared_l2(v, centroid);
            if d < best.1 {
                best = (c, d);
            }
        }
        best
    }

    /// Centroid indices ordered by distance to `v`, first `count` of them.
    pub fn nearest(&self, v: &[f32], count: usize) -> Vec<usize> {
        let mut ds: Vec<(f32, usize)> = self
            .centroids
            .iter()
            .enumerate()
            .map(|(c, centroid)| (squared_l2(v, centroid), c))
            .collect();
        ds.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        ds.into_iter().take(count).map(|(_, c)| c).collect()
    }

    /// Sum of squared distances from each point to its nearest centroid.
    pub fn objective(&self, points: &Vectors) -> f64 {
        let per: Vec<f32> = (0..points.len())
            .into_par_iter()
            .map(|i| self.assign(points.get(i)).1)
            .collect();
        per.iter().map(|&d| d as f64).sum()
    }
}

/// Lloyd's algorithm from k-means++ seeding.
pub fn kmeans(points: &Vectors, k: usize, max_iterations: usize, seed: u64) -> Result<KMeansModel> {
    kmeans_traced(points, k, max_iterations, seed).map(|(m, _)| m)
}

/// Like [`kmeans`], also returning the objective after each assignment step.
pub fn kmeans_traced(
    points: &Vectors,
    k: usize,
    max_iterations: usize,
    seed: u64,
) -> Result<(KMeansModel, Vec<f64>)> {
    let n = points.len();
    if k == 0 {
        return Err(param("k must be at least 1"));
    }
    if k > n {
        return Err(param(format!("k = {k} exceeds the {n} training points")));
    }
    let dim = points.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = KMeansModel {
        centroids: plus_plus(points, k, &mut rng),
    };
    let mut trace = Vec::new();
    for _ in 0..max_iterations {
        let assigned: Vec<(usize, f32)> = (0..n)
            .into_par_iter()
            .map(|i| model.assign(points.get(i)))
            .collect();
        trace.push(assigned.iter().map(|a| a.1 as f64).sum());

        let mut sums = vec![0.0f64; k * dim];
        let mut counts = vec![0usize; k];
        for (i, &(c, _)) in assigned.iter().enumerate() {
            counts[c] += 1;
            for (s, &x) in sums[c * dim..(c + 1) * dim].iter_mut().zip(points.get(i)) {
                *s += x as f64;
            }
        }
        let mut data: Vec<f32> = model.centroids.as_flat().to_vec();
        let mut moved = false;
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            for j in 0..dim {
                let v = (sums[c * dim + j] / counts[c] as f64) as f32;
                if v != data[c * dim + j] {
                    moved = true;
                }
                data[c * dim + j] = v;
            }
        }
        // empty clusters take the point farthest from its centroid
        let mut taken = vec![false; n];
        let mut dist_now: Vec<f32> = assigned.iter().map(|a| a.1).collect();
        for c in (0..k).filter(|&c| counts[c] == 0) {
            let far = (0..n)
                .filter(|&i| !taken[i])
                .max_by(|&a, &b| dist_now[a].total_cmp(&dist_now[b]).then(b.cmp(&a)));
            if let Some(i) = far {
                taken[i] = true;
                dist_now[i] = 0.0;
                data[c * dim..(c + 1) * dim].copy_from_slice(points.get(i));
                moved = true;
            }
        }
        model.centroids = Vectors::new(dim, data)?;
        if !moved {
            break;
        }
    }
    Ok((model, trace))
}

fn plus_plus(points: &Vectors, k: usize, rng: &mut ChaCha8Rng) -> Vectors {
    let n = points.len();
    let dim = points.dim();
    let mut chosen = vec![false; n];
    let first = rng.gen_range(0..n);
    chosen[first] = true;
    let mut centroids = Vectors::empty(dim);
    centroids.push(points.get(first)).expect("dimension matches");
    let mut d2: Vec<f32> = (0..n)
        .into_par_iter()
        .map(|i| squared_l2(points.get(i), points.get(first)))
        .collect();
    while centroids.len() < k {
        let weights: Vec<f64> = d2
            .iter()
            .zip(&chosen)
            .map(|(&d, &c)| if c { 0.0 } else { d as f64 })
            .collect();
        let next = match WeightedIndex::new(&weights) {
            Ok(w) => w.sample(rng),
            // every remaining point coincides with a centroid
            Err(_) => (0..n).find(|&i| !chosen[i]).expect("k <= n"),
        };
        chosen[next] = true;
        centroids.push(points.get(next)).expect("dimension matches");
        let p = points.get(next);
        d2.par_iter_mut().enumerate().for_each(|(i, d)| {
            let nd = squared_l2(points.get(i), p);
            if nd < *d {
                *d = nd;
            }
        });
    }
    centroids
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random(n: usize, d: usize, seed: u64) -> Vectors {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Vectors::new(d, (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn zero_k_rejected() {
        assert!(kmeans(&random(10, 2, 0), 0, 5, 0).is_err());
        assert!(kmeans(&random(10, 2, 0), 11, 5, 0).is_err());
    }

    #[test]
    fn k_equal_n_has_zero_objective() {
        let pts = random(30, 3, 1);
        let m = kmeans(&pts, 30, 10, 2).unwrap();
        assert_eq!(m.objective(&pts), 0.0);
    }

    #[test]
    fn two_blobs_split_like_the_best_partition() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut rows = Vec::new();
        for center in [-10.0f32, 10.0] {
            for _ in 0..8 {
                rows.push(vec![center + rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]);
            }
        }
        let pts = Vectors::from_rows(2, &rows).unwrap();
        // exhaustive oracle over all 2-partitions of the 16 points
        let sse = |mask: u32| {
            let mut total = 0.0f64;
            for side in [true, false] {
                let members: Vec<&Vec<f32>> = rows
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| (mask >> i & 1 == 1) == side)
                    .map(|(_, r)| r)
                    .collect();
                if members.is_empty() {
                    continue;
                }
                let cx = members.iter().map(|r| r[0] as f64).sum::<f64>() / members.len() as f64;
                let cy = members.iter().map(|r| r[1] as f64).sum::<f64>() / members.len() as f64;
                total += members
                    .iter()
                    .map(|r| (r[0] as f64 - cx).powi(2) + (r[1] as f64 - cy).powi(2))
                    .sum::<f64>();
            }
            total
        };
        let best = (1..1u32 << 16).map(sse).fold(f64::INFINITY, f64::min);
        let model = kmeans(&pts, 2, 50, 4).unwrap();
        assert!((model.objective(&pts) - best).abs() < 1e-3 * best.max(1.0));
        for c in model.centroids.iter() {
            assert!(c[0].abs() > 8.0 && c[0].abs() < 12.0 && c[1].abs() <= 1.0);
        }
    }

    #[test]
    fn objective_never_increases() {
        for seed in 0..10 {
            let pts = random(400, 4, seed);
            let (_, trace) = kmeans_traced(&pts, 12, 30, seed).unwrap();
            assert!(trace.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9)), "{trace:?}");
        }
    }
}
