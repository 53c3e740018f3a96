//! Inverted label index and word-packed filter bitmaps.
//!
//! Every label owns a bitmap over the dataset. A query's filter map is the
//! AND (containment) or OR (overlap) of its labels' bitmaps; equality ANDs and
//! then verifies each survivor's full label set.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{check_constraint, FilterConstraint, LabelSet};

const WORD_BITS: usize = u64::BITS as usize;

/// Immutable membership mask over `len` records.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterBitmap {
    words: Vec<u64>,
    len: usize,
    count: usize,
}

impl FilterBitmap {
    pub fn zeros(len: usize) -> Self {
        FilterBitmap {
            words: vec![0; len.div_ceil(WORD_BITS)],
            len,
            count: 0,
        }
    }

    pub fn ones(len: usize) -> Self {
        let mut words = vec![u64::MAX; len.div_ceil(WORD_BITS)];
        clear_tail(&mut words, len);
        FilterBitmap {
            words,
            len,
            count: len,
        }
    }

    /// Builds from raw words; bits past `len` are cleared.
    pub fn from_words(mut words: Vec<u64>, len: usize) -> Self {
        words.resize(len.div_ceil(WORD_BITS), 0);
        clear_tail(&mut words, len);
        let count = popcount(&words);
        FilterBitmap { words, len, count }
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut words = vec![0u64; bits.len().div_ceil(WORD_BITS)];
        for (i, _) in bits.iter().enumerate().filter(|(_, b)| **b) {
            words[i / WORD_BITS] |= 1 << (i % WORD_BITS);
        }
        FilterBitmap::from_words(words, bits.len())
    }

    pub fn from_ids(len: usize, ids: impl IntoIterator<Item = u32>) -> Self {
        let mut words = vec![0u64; len.div_ceil(WORD_BITS)];
        for i in ids {
            let i = i as usize;
            assert!(i < len, "id {i} out of range for bitmap of {len}");
            words[i / WORD_BITS] |= 1 << (i % WORD_BITS);
        }
        FilterBitmap::from_words(words, len)
    }

    #[inline]
    pub fn contains(&self, i: u32) -> bool {
        let i = i as usize;
        i < self.len && self.words[i / WORD_BITS] >> (i % WORD_BITS) & 1 == 1
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Cached population count.
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    /// Set-bit positions, ascending.
    pub fn iter(&self) -> BitmapIter<'_> {
        BitmapIter {
            words: &self.words,
            word_idx: 0,
            current: self.words.first().copied().unwrap_or(0),
        }
    }

    pub fn to_bools(&self) -> Vec<bool> {
        (0..self.len as u32).map(|i| self.contains(i)).collect()
    }
}

fn clear_tail(words: &mut [u64], len: usize) {
    let rem = len % WORD_BITS;
    if rem != 0 {
        if let Some(last) = words.last_mut() {
            *last &= (1u64 << rem) - 1;
        }
    }
}

fn popcount(words: &[u64]) -> usize {
    words.iter().map(|w| w.count_ones() as usize).sum()
}

pub struct BitmapIter<'a> {
    words: &'a [u64],
    word_idx: usize,
    current: u64,
}

impl Iterator for BitmapIter<'_> {
    type Item = u32;

    fn next(&mut self) -> Option<u32> {
        loop {
            if self.current != 0 {
                let bit = self.current.trailing_zeros() as usize;
                self.current &= self.current - 1;
                return Some((self.word_idx * WORD_BITS + bit) as u32);
            }
            self.word_idx += 1;
            if self.word_idx >= self.words.len() {
                return None;
            }
            self.current = self.words[self.word_idx];
        }
    }
}

/// Work performed by one [`InvertedLabelIndex::filter_map_traced`] call.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FilterCost {
    /// Word-wise AND/OR passes over the bitmap.
    pub combine_passes: usize,
    /// Survivors whose full label set was compared (equality only).
    pub verified: usize,
}

/// Per-label bitmaps over a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvertedLabelIndex {
    bitmaps: Vec<FilterBitmap>,
    len: usize,
    uniform_length: Option<usize>,
}

impl InvertedLabelIndex {
    pub fn build(labels: &[LabelSet]) -> Self {
        let len = labels.len();
        let universe = labels
            .iter()
            .filter_map(|l| l.as_slice().last())
            .map(|&m| m as usize + 1)
            .max()
            .unwrap_or(0);
        let words_per = len.div_ceil(WORD_BITS);
        let mut raw = vec![vec![0u64; words_per]; universe];
        for (i, set) in labels.iter().enumerate() {
            for l in set.iter() {
                raw[l as usize][i / WORD_BITS] |= 1 << (i % WORD_BITS);
            }
        }
        InvertedLabelIndex {
            bitmaps: raw
                .into_iter()
                .map(|w| FilterBitmap::from_words(w, len))
                .collect(),
            len,
            uniform_length: crate::model::uniform_label_length(labels),
        }
    }

    /// Number of indexed records.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Number of label ids with a bitmap (one past the largest id seen).
    pub fn universe(&self) -> usize {
        self.bitmaps.len()
    }

    /// The label's bitmap, or `None` for labels never seen at build time.
    pub fn bitmap(&self, label: u32) -> Option<&FilterBitmap> {
        self.bitmaps.get(label as usize)
    }

    /// Number of records carrying `label`.
    pub fn frequency(&self, label: u32) -> usize {
        self.bitmap(label).map_or(0, FilterBitmap::count)
    }

    /// Storage in 64-bit words across all label bitmaps.
    pub fn storage_words(&self) -> usize {
        self.bitmaps.iter().map(|b| b.words.len()).sum()
    }

    pub fn filter_map(
        &self,
        query: &LabelSet,
        constraint: FilterConstraint,
        labels: &[LabelSet],
    ) -> Result<FilterBitmap> {
        self.filter_map_traced(query, constraint, labels)
            .map(|(b, _)| b)
    }

    /// Builds the query's filter map and reports the work done.
    ///
    /// Unknown query labels act as all-zero bitmaps.
    pub fn filter_map_traced(
        &self,
        query: &LabelSet,
        constraint: FilterConstraint,
        labels: &[LabelSet],
    ) -> Result<(FilterBitmap, FilterCost)> {
        if constraint == FilterConstraint::FixedLengthEquality && self.uniform_length.is_none() {
            check_constraint(labels, constraint)?;
        }
        let mut cost = FilterCost::default();
        let and = !matches!(constraint, FilterConstraint::Overlap);
        let mut words = match query.as_slice().first() {
            None if and => FilterBitmap::ones(self.len).words,
            None => vec![0u64; self.len.div_ceil(WORD_BITS)],
            Some(&first) => self.label_words(first),
        };
        for l in query.iter().skip(1) {
            cost.combine_passes += 1;
            match self.bitmap(l) {
                Some(b) if and => words.iter_mut().zip(&b.words).for_each(|(w, o)| *w &= o),
                Some(b) => words.iter_mut().zip(&b.words).for_each(|(w, o)| *w |= o),
                None if and => words.iter_mut().for_each(|w| *w = 0),
                None => {}
            }
        }
        let mut bitmap = FilterBitmap::from_words(words, self.len);
        if matches!(
            constraint,
            FilterConstraint::Equality | FilterConstraint::FixedLengthEquality
        ) {
            let mut exact = bitmap.words.clone();
            for i in bitmap.iter() {
                cost.verified += 1;
                let base = &labels[i as usize];
                if base.len() != query.len() || base != query {
                    exact[i as usize / WORD_BITS] &= !(1 << (i as usize % WORD_BITS));
                }
            }
            bitmap = FilterBitmap::from_words(exact, self.len);
        }
        Ok((bitmap, cost))
    }

    fn label_words(&self, label: u32) -> Vec<u64> {
        match self.bitmap(label) {
            Some(b) => b.words.clone(),
            None => vec![0u64; self.len.div_ceil(WORD_BITS)],
        }
    }
}
