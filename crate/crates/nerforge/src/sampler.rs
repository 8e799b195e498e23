//! Relaxed greedy k-shot sampling.
//!
//! A single pass over a seeded shuffle of the corpus accepts a sentence
//! unless adding it would push any entity type past 1.25k mentions, and
//! stops early once every type has at least k. The 1.25k bound is compared
//! in exact integer arithmetic (`4 * count > 5 * k`), so there is no
//! floating-point boundary ambiguity.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{extract_mentions, Dataset, Sentence};

/// Output of one sampling run.
///
/// `counts` has one entry per label in the source dataset's label set, zero
/// included, and equals the number of mentions of that label across the
/// selected sentences.
#[derive(Debug, Clone)]
pub struct SampledSet {
    pub sentences: Vec<Sentence>,
    pub counts: BTreeMap<String, usize>,
    pub k: usize,
    pub seed: u64,
}

impl SampledSet {
    /// Wraps an already-selected corpus (for example one read back from
    /// disk), recomputing mention counts.
    pub fn from_dataset(dataset: &Dataset, k: usize, seed: u64) -> Self {
        let mut counts: BTreeMap<String, usize> =
            dataset.label_set.iter().map(|l| (l.clone(), 0)).collect();
        for s in &dataset.sentences {
            for m in extract_mentions(s) {
                *counts.entry(m.entity_type).or_insert(0) += 1;
            }
        }
        SampledSet {
            sentences: dataset.sentences.clone(),
            counts,
            k,
            seed,
        }
    }

    /// Labels that ended below k mentions; sampling warns about these but
    /// does not fail.
    pub fn underfilled_labels(&self) -> Vec<String> {
        self.counts
            .iter()
            .filter(|(_, &c)| c < self.k)
            .map(|(l, _)| l.clone())
            .collect()
    }
}

/// The permutation used to shuffle sentences before the greedy pass:
/// Fisher-Yates driven by ChaCha8 seeded with the given value.
pub fn seeded_permutation(len: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..len).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    order
}

/// Greedy k-shot sampling with the 1.25k per-label cap.
///
/// Labels that never reach k because the data ran out are reported with a
/// warning; see [`SampledSet::underfilled_labels`].
pub fn sample_k_shot(dataset: &Dataset, k: usize, seed: u64) -> SampledSet {
    assert!(k >= 1, "k must be positive");
    let mut counts: BTreeMap<String, usize> =
        dataset.label_set.iter().map(|l| (l.clone(), 0)).collect();
    let mut selected = Vec::new();

    for idx in seeded_permutation(dataset.sentences.len(), seed) {
        let sentence = &dataset.sentences[idx];
        let mut tmp: BTreeMap<&str, usize> = BTreeMap::new();
        for m in extract_mentions(sentence) {
            *tmp.entry(sentence.tokens[m.start].label.as_str()).or_insert(0) += 1;
        }
        // reject if any label would exceed 1.25k: 4*(count + tmp) > 5*k
        let overflow = tmp
            .iter()
            .any(|(label, &n)| 4 * (counts.get(*label).copied().unwrap_or(0) + n) > 5 * k);
        if !overflow {
            for (label, n) in &tmp {
                *counts.entry((*label).to_string()).or_insert(0) += n;
            }
            selected.push(sentence.clone());
        }
        if counts.values().all(|&c| c >= k) {
            break;
        }
    }

    let set = SampledSet {
        sentences: selected,
        counts,
        k,
        seed,
    };
    let under = set.underfilled_labels();
    if !under.is_empty() {
        log::warn!(
            "sampling ended with labels below k={k}: {}",
            under.join(", ")
        );
    }
    set
}

/// Recomputes per-label mention counts from the selected sentences. Always
/// equals the stored `counts` field.
pub fn label_counts(set: &SampledSet) -> BTreeMap<String, usize> {
    let mut counts: BTreeMap<String, usize> =
        set.counts.keys().map(|l| (l.clone(), 0)).collect();
    for s in &set.sentences {
        for m in extract_mentions(s) {
            *counts.entry(m.entity_type).or_insert(0) += 1;
        }
    }
    counts
}
