//! Query strata: label-length groups and selectivity percentile windows.
//!
//! Candidates are held-out records; a stratum is a set of candidate indexes.
//! Strata never share a candidate.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::filter::InvertedLabelIndex;
use crate::model::{FilterConstraint, LabelSet};

/// Half width, in percentile points, of each selectivity window.
pub const PERCENTILE_WINDOW: f64 = 5.0;

pub const DEFAULT_PERCENTILES: [f64; 4] = [75.0, 50.0, 25.0, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stratum {
    pub name: String,
    /// Candidate indexes, ascending.
    pub members: Vec<u32>,
    pub requested: usize,
    /// Human-readable bucket bounds.
    pub detail: String,
}

impl Stratum {
    pub fn shortfall(&self) -> usize {
        self.requested.saturating_sub(self.members.len())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Stratification {
    pub scheme: String,
    pub strata: Vec<Stratum>,
    pub warnings: Vec<String>,
}

impl Stratification {
    fn warn(&mut self, msg: String) {
        log::warn!("{msg}");
        self.warnings.push(msg);
    }

    fn report_shortfalls(&mut self) {
        let msgs: Vec<String> = self
            .strata
            .iter()
            .filter(|s| s.shortfall() > 0)
            .map(|s| format!("stratum {} has {} of {} requested queries", s.name, s.members.len(), s.requested))
            .collect();
        for m in msgs {
            self.warn(m);
        }
    }

    pub fn total(&self) -> usize {
        self.strata.iter().map(|s| s.members.len()).sum()
    }
}

/// A single stratum of `count` random candidates.
pub fn random_sample(pool_labels: &[LabelSet], count: usize, seed: u64) -> Stratification {
    let mut ids: Vec<u32> = (0..pool_labels.len() as u32)
        .filter(|&i| !pool_labels[i as usize].is_empty())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    ids.truncate(count);
    ids.sort_unstable();
    let mut s = Stratification {
        scheme: "random".into(),
        strata: vec![Stratum { name: "all".into(), members: ids, requested: count, detail: String::new() }],
        warnings: Vec::new(),
    };
    s.report_shortfalls();
    s
}

fn take(pool: &mut Vec<u32>, n: usize) -> Vec<u32> {
    let mut out = pool.split_off(pool.len().saturating_sub(n));
    out.sort_unstable();
    out
}

/// Buckets candidates by label-set length into `groups` groups (terciles for
/// three) and samples `per_group` from each. Empty label sets are skipped.
pub fn stratify_by_length(pool_labels: &[LabelSet], groups: usize, per_group: usize, seed: u64) -> Result<Stratification> {
    if groups == 0 {
        return Err(param("need at least one length group"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_len: BTreeMap<usize, Vec<u32>> = BTreeMap::new();
    for (i, l) in pool_labels.iter().enumerate() {
        if !l.is_empty() {
            by_len.entry(l.len()).or_default().push(i as u32);
        }
    }
    for ids in by_len.values_mut() {
        ids.shuffle(&mut rng);
    }
    let lengths: Vec<usize> = by_len.keys().copied().collect();
    let total: usize = by_len.values().map(Vec::len).sum();
    let mut out = Stratification { scheme: format!("length-{groups}-groups"), ..Default::default() };
    if lengths.is_empty() {
        out.warn("no candidate has a non-empty label set".into());
        out.strata = (0..groups)
            .map(|g| Stratum { name: format!("length-g{g}"), members: Vec::new(), requested: per_group, detail: String::new() })
            .collect();
        out.report_shortfalls();
        return Ok(out);
    }

    // group -> lengths it draws from
    let mut assigned: Vec<Vec<usize>> = vec![Vec::new(); groups];
    if lengths.len() < groups {
        out.warn(format!(
            "only {} distinct label lengths for {groups} groups; groups collapse",
            lengths.len()
        ));
        for (g, a) in assigned.iter_mut().enumerate() {
            a.push(lengths[g * lengths.len() / groups]);
        }
    } else {
        let mut before = 0usize;
        for (&len, ids) in &by_len {
            let mid = (before as f64 + ids.len() as f64 / 2.0) / total as f64;
            let g = ((mid * groups as f64) as usize).min(groups - 1);
            assigned[g].push(len);
            before += ids.len();
        }
    }
    for (g, lens) in assigned.iter().enumerate() {
        // groups sharing a length drain one pool, keeping strata disjoint
        let mut pool: Vec<u32> = Vec::new();
        for l in lens {
            pool.append(by_len.get_mut(l).expect("known length"));
        }
        pool.shuffle(&mut rng);
        let members = take(&mut pool, per_group);
        if lens.len() == 1 {
            // a collapsed group hands its unused candidates to the next group
            by_len.insert(lens[0], pool);
        }
        let detail = match (lens.first(), lens.last()) {
            (Some(a), Some(b)) if a == b => format!("length {a}"),
            (Some(a), Some(b)) => format!("lengths {a}..={b}"),
            _ => "no lengths".into(),
        };
        out.strata.push(Stratum { name: format!("length-g{g}"), members, requested: per_group, detail });
    }
    out.report_shortfalls();
    Ok(out)
}

/// Selectivity of every candidate's label set against the base labels.
pub fn candidate_selectivities(
    pool_labels: &[LabelSet],
    base_labels: &[LabelSet],
    scenario: FilterConstraint,
) -> Result<Vec<f64>> {
    let index = InvertedLabelIndex::build(base_labels);
    let n = base_labels.len().max(1) as f64;
    pool_labels
        .par_iter()
        .map(|l| Ok(index.filter_map(l, scenario, base_labels)?.count() as f64 / n))
        .collect()
}

/// For each percentile p, samples `per_group` candidates whose selectivity
/// rank falls in `[p - 5, p + 5]` percent of the candidate pool.
pub fn stratify_by_selectivity(
    pool_labels: &[LabelSet],
    base_labels: &[LabelSet],
    scenario: FilterConstraint,
    percentiles: &[f64],
    per_group: usize,
    seed: u64,
) -> Result<Stratification> {
    if percentiles.iter().any(|p| !(0.0..=100.0).contains(p)) {
        return Err(param("percentiles must lie in [0, 100]"));
    }
    let sigma = candidate_selectivities(pool_labels, base_labels, scenario)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ranked: Vec<u32> = (0..pool_labels.len() as u32)
        .filter(|&i| !pool_labels[i as usize].is_empty())
        .collect();
    // shuffle first so ties are ordered randomly, then stable sort
    ranked.shuffle(&mut rng);
    ranked.sort_by(|&a, &b| sigma[a as usize].total_cmp(&sigma[b as usize]));
    let mut out = Stratification {
        scheme: format!("selectivity-{}", scenario.name()),
        ..Default::default()
    };
    if let (Some(&lo), Some(&hi)) = (ranked.first(), ranked.last()) {
        if sigma[lo as usize] == sigma[hi as usize] {
            out.warn(format!(
                "every candidate has selectivity {}; percentile buckets are identical",
                sigma[lo as usize]
            ));
        }
    }
    let m = ranked.len();
    let mut used = vec![false; m];
    for &p in percentiles {
        let lo = (((p - PERCENTILE_WINDOW).max(0.0) / 100.0) * m as f64).floor() as usize;
        let hi = ((((p + PERCENTILE_WINDOW).min(100.0)) / 100.0) * m as f64).ceil() as usize;
        let mut window: Vec<usize> = (lo.min(m)..hi.min(m)).filter(|&r| !used[r]).collect();
        window.shuffle(&mut rng);
        window.truncate(per_group);
        for &r in &window {
            used[r] = true;
        }
        let mut members: Vec<u32> = window.iter().map(|&r| ranked[r]).collect();
        members.sort_unstable();
        let detail = match (window.iter().min(), window.iter().max()) {
            (Some(&a), Some(&b)) => format!(
                "selectivity {:.6}..={:.6}",
                sigma[ranked[a] as usize],
                sigma[ranked[b] as usize]
            ),
            _ => "empty".into(),
        };
        out.strata.push(Stratum { name: format!("p{p}"), members, requested: per_group, detail });
    }
    out.report_shortfalls();
    Ok(out)
}
