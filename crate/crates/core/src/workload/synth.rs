//! Synthetic embeddings and label generators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{param, Result};
use crate::model::{LabelSet, Vectors};

/// `n` points around `centers` random centers in `[-1, 1]^dim`, Gaussian
/// noise with standard deviation `spread`.
pub fn gaussian_mixture(n: usize, dim: usize, centers: usize, spread: f32, seed: u64) -> Result<Vectors> {
    if dim == 0 || centers == 0 {
        return Err(param("dimension and center count must be positive"));
    }
    let noise = Normal::new(0.0f32, spread).map_err(|e| param(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means: Vec<f32> = (0..centers * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut data = Vec::with_capacity(n * dim);
    for _ in 0..n {
        let c = rng.gen_range(0..centers);
        for j in 0..dim {
            data.push(means[c * dim + j] + noise.sample(&mut rng));
        }
    }
    Vectors::new(dim, data)
}

/// I.i.d. uniform value per position, offset-encoded: position `p` holding
/// value `v` becomes label `p * values + v`.
pub fn gen_fixed_length_labels(n: usize, length: usize, values: usize, seed: u64) -> Result<Vec<LabelSet>> {
    if length == 0 || values == 0 {
        return Err(param("length and values per position must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| LabelSet::new((0..length).map(|p| (p * values + rng.gen_range(0..values)) as u32)))
        .collect())
}

/// Label ids used by [`selectivity_labels`].
#[derive(Debug, Clone, PartialEq)]
pub struct SelectivityLayout {
    pub fillers: usize,
    pub sigmas: Vec<f64>,
}

impl SelectivityLayout {
    /// The planted set drawn with probability `sigmas[i]`: the pair `a(i)`, `b(i)`.
    pub fn planted(&self, i: usize) -> LabelSet {
        LabelSet::new([self.a(i), self.b(i)])
    }

    pub fn a(&self, i: usize) -> u32 {
        (self.fillers + 2 * i) as u32
    }

    pub fn b(&self, i: usize) -> u32 {
        (self.fillers + 2 * i + 1) as u32
    }
}

/// Each record carries exactly the planted set of pair `i` with probability
/// `sigmas[i]`; the rest get a random non-empty subset of the filler labels
/// `0..fillers`, each included with probability 1/2.
///
/// Query `{a(i)}` under containment, `{a(i), b(i)}` under overlap and the
/// planted set under equality all have expected selectivity `sigmas[i]`.
pub fn selectivity_labels(
    n: usize,
    fillers: usize,
    sigmas: &[f64],
    seed: u64,
) -> Result<(Vec<LabelSet>, SelectivityLayout)> {
    let total: f64 = sigmas.iter().sum();
    if fillers == 0 || sigmas.iter().any(|&s| s < 0.0) || total > 1.0 {
        return Err(param("need at least one filler label and probabilities summing to at most 1"));
    }
    let layout = SelectivityLayout { fillers, sigmas: sigmas.to_vec() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = (0..n)
        .map(|_| {
            let mut u: f64 = rng.gen();
            for i in 0..sigmas.len() {
                if u < sigmas[i] {
                    return layout.planted(i);
                }
                u -= sigmas[i];
            }
            loop {
                let set = LabelSet::new((0..fillers as u32).filter(|_| rng.gen_bool(0.5)));
                if !set.is_empty() {
                    return set;
                }
            }
        })
        .collect();
    Ok((labels, layout))
}
