//! Filtering and re-annotation of generated sentences.
//!
//! Generated text is only usable when the expected entities survive
//! verbatim and nothing else entity-like sneaked in. Filtering is purely
//! rule-based: context outputs are rejected when they retain any entity
//! from the sampled set's inventory beyond the given ones, replacement
//! outputs when they modify entities that were not given. Accepted text is
//! labeled by matching each expected surface as a whole-token subsequence,
//! longest surface first so shorter surfaces cannot shadow longer ones.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

use crate::corpus::{tokenize, AugmentationKind, EntityMention, Provenance, Sentence, Token};
use crate::parser::{GenerationKind, ParsedGeneration};
use crate::prompts::RewriteStrategy;

/// Why a candidate was accepted or rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VerdictReason {
    Ok,
    RetainedForeignEntity,
    ModifiedNonGivenEntity,
    MissingEntity,
    AlignmentFailure,
    EmptyText,
}

impl VerdictReason {
    pub fn as_str(self) -> &'static str {
        match self {
            VerdictReason::Ok => "Ok",
            VerdictReason::RetainedForeignEntity => "RetainedForeignEntity",
            VerdictReason::ModifiedNonGivenEntity => "ModifiedNonGivenEntity",
            VerdictReason::MissingEntity => "MissingEntity",
            VerdictReason::AlignmentFailure => "AlignmentFailure",
            VerdictReason::EmptyText => "EmptyText",
        }
    }

    pub fn from_str_opt(s: &str) -> Option<Self> {
        Some(match s {
            "Ok" => VerdictReason::Ok,
            "RetainedForeignEntity" => VerdictReason::RetainedForeignEntity,
            "ModifiedNonGivenEntity" => VerdictReason::ModifiedNonGivenEntity,
            "MissingEntity" => VerdictReason::MissingEntity,
            "AlignmentFailure" => VerdictReason::AlignmentFailure,
            "EmptyText" => VerdictReason::EmptyText,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Verdict {
    pub accepted: bool,
    pub reason: VerdictReason,
}

impl Verdict {
    pub fn ok() -> Self {
        Verdict {
            accepted: true,
            reason: VerdictReason::Ok,
        }
    }

    pub fn reject(reason: VerdictReason) -> Self {
        debug_assert!(reason != VerdictReason::Ok);
        Verdict {
            accepted: false,
            reason,
        }
    }
}

/// What produced an augmented record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordKind {
    Context(RewriteStrategy),
    Entity,
    Both,
    Noise,
}

impl RecordKind {
    pub fn family(self) -> AugmentationKind {
        match self {
            RecordKind::Context(_) => AugmentationKind::Context,
            RecordKind::Entity => AugmentationKind::Entity,
            RecordKind::Both => AugmentationKind::Both,
            RecordKind::Noise => AugmentationKind::Noise,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            RecordKind::Context(_) => "context",
            RecordKind::Entity => "entity",
            RecordKind::Both => "both",
            RecordKind::Noise => "noise",
        }
    }

    pub fn strategy_id(self) -> Option<&'static str> {
        match self {
            RecordKind::Context(s) => Some(s.id()),
            _ => None,
        }
    }
}

/// One candidate augmented sentence with its provenance and verdict.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AugmentedRecord {
    pub parent_id: String,
    pub kind: RecordKind,
    pub raw_text: String,
    pub verdict: Verdict,
    /// Present iff the verdict accepted the candidate.
    pub sentence: Option<Sentence>,
    /// `(expected surface, entity type)` pairs the labels came from.
    pub entity_map: Vec<(String, String)>,
    /// Index of the source block within its completion.
    pub block_index: usize,
}

/// Entity inventory of the sampled set: every `(surface, type)` pair it
/// contains. This approximates "knows about other entities" when checking
/// context outputs for foreign retentions.
pub type Inventory = BTreeSet<(String, String)>;

fn contains_token_subsequence(haystack: &[String], needle: &[String]) -> bool {
    if needle.is_empty() || needle.len() > haystack.len() {
        return false;
    }
    haystack
        .windows(needle.len())
        .any(|w| w.iter().zip(needle).all(|(a, b)| a == b))
}

/// Accept/reject a context-level generation: every given entity must appear
/// verbatim, and no other inventory entity may appear.
pub fn filter_context(
    gen: &ParsedGeneration,
    given: &[EntityMention],
    inventory: &Inventory,
) -> Verdict {
    debug_assert_eq!(gen.kind, GenerationKind::Kept);
    let toks = tokenize(&gen.new_sentence);
    if toks.is_empty() {
        return Verdict::reject(VerdictReason::EmptyText);
    }
    let given_surfaces: BTreeSet<&str> = given.iter().map(|m| m.surface.as_str()).collect();
    for (surface, _) in inventory {
        if given_surfaces.contains(surface.as_str()) {
            continue;
        }
        if contains_token_subsequence(&toks, &tokenize(surface)) {
            return Verdict::reject(VerdictReason::RetainedForeignEntity);
        }
    }
    for m in given {
        if !contains_token_subsequence(&toks, &tokenize(&m.surface)) {
            return Verdict::reject(VerdictReason::MissingEntity);
        }
    }
    Verdict::ok()
}

/// Accept/reject a replacement-style generation (entity, both, noise): the
/// mapping may only touch given entities, every replacement target must
/// appear in the text, and unmapped given entities must survive verbatim.
pub fn filter_replacement(gen: &ParsedGeneration, given: &[EntityMention]) -> Verdict {
    debug_assert_eq!(gen.kind, GenerationKind::Replaced);
    let toks = tokenize(&gen.new_sentence);
    if toks.is_empty() {
        return Verdict::reject(VerdictReason::EmptyText);
    }
    let given_surfaces: BTreeSet<&str> = given.iter().map(|m| m.surface.as_str()).collect();
    for (old, _) in &gen.replacements {
        if !given_surfaces.contains(old.as_str()) {
            return Verdict::reject(VerdictReason::ModifiedNonGivenEntity);
        }
    }
    for (_, new) in &gen.replacements {
        if !contains_token_subsequence(&toks, &tokenize(new)) {
            return Verdict::reject(VerdictReason::MissingEntity);
        }
    }
    let mapped: BTreeSet<&str> = gen.replacements.iter().map(|(o, _)| o.as_str()).collect();
    for m in given {
        if mapped.contains(m.surface.as_str()) {
            continue;
        }
        if !contains_token_subsequence(&toks, &tokenize(&m.surface)) {
            return Verdict::reject(VerdictReason::MissingEntity);
        }
    }
    Verdict::ok()
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AnnotateError {
    #[error("text is empty after tokenization")]
    EmptyText,
    #[error("expected surface {0:?} matched no unlabeled token span")]
    AlignmentFailure(String),
}

/// Tokenizes raw text and labels every whole-token occurrence of each
/// expected surface with its type, longest surface first; everything else
/// becomes `"O"`. Fails if any expected surface matches zero times.
pub fn align_and_label(
    raw_text: &str,
    expected: &[(String, String)],
) -> Result<Vec<Token>, AnnotateError> {
    let toks = tokenize(raw_text);
    if toks.is_empty() {
        return Err(AnnotateError::EmptyText);
    }
    let mut labels: Vec<Option<&str>> = vec![None; toks.len()];

    let mut todo: Vec<(Vec<String>, &str, &str)> = Vec::new();
    for (surface, ty) in expected {
        if todo
            .iter()
            .any(|(_, s, t)| *s == surface.as_str() && *t == ty.as_str())
        {
            continue;
        }
        todo.push((tokenize(surface), surface, ty));
    }
    // canonical order: longer token sequences claim their spans first
    todo.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then(a.1.cmp(b.1)).then(a.2.cmp(b.2)));

    for (surf_toks, surface, ty) in &todo {
        if surf_toks.is_empty() {
            return Err(AnnotateError::AlignmentFailure((*surface).to_string()));
        }
        let mut matched = false;
        let mut i = 0;
        while i + surf_toks.len() <= toks.len() {
            let span = i..i + surf_toks.len();
            let free = labels[span.clone()].iter().all(Option::is_none);
            let equal = toks[span.clone()].iter().zip(surf_toks).all(|(a, b)| a == b);
            if free && equal {
                for l in &mut labels[span] {
                    *l = Some(ty);
                }
                matched = true;
                i += surf_toks.len();
            } else {
                i += 1;
            }
        }
        if !matched {
            return Err(AnnotateError::AlignmentFailure((*surface).to_string()));
        }
    }

    Ok(toks
        .into_iter()
        .zip(labels)
        .map(|(text, label)| Token::new(text, label.unwrap_or("O")))
        .collect())
}

/// Lenient variant used for scoring model predictions: surfaces that do not
/// match are skipped instead of failing, and the given tokenization is kept.
pub fn label_spans_lenient(tokens: &[String], expected: &[(String, String)]) -> Vec<String> {
    let mut labels: Vec<Option<String>> = vec![None; tokens.len()];
    let mut todo: Vec<(Vec<String>, &str)> = expected
        .iter()
        .map(|(s, t)| (tokenize(s), t.as_str()))
        .collect();
    todo.sort_by_key(|(toks, _)| std::cmp::Reverse(toks.len()));
    for (surf_toks, ty) in &todo {
        if surf_toks.is_empty() {
            continue;
        }
        let mut i = 0;
        while i + surf_toks.len() <= tokens.len() {
            let span = i..i + surf_toks.len();
            let free = labels[span.clone()].iter().all(Option::is_none);
            let equal = tokens[span.clone()].iter().zip(surf_toks).all(|(a, b)| a == b);
            if free && equal {
                for l in &mut labels[span] {
                    *l = Some((*ty).to_string());
                }
                i += surf_toks.len();
            } else {
                i += 1;
            }
        }
    }
    labels
        .into_iter()
        .map(|l| l.unwrap_or_else(|| "O".to_string()))
        .collect()
}

/// Builds the full record for one candidate: verdict first, then alignment
/// when the verdict accepted it. A failed alignment downgrades the verdict.
pub fn build_record(
    parent_id: &str,
    id: &str,
    kind: RecordKind,
    gen: &ParsedGeneration,
    verdict: Verdict,
    expected: Vec<(String, String)>,
) -> AugmentedRecord {
    let mut record = AugmentedRecord {
        parent_id: parent_id.to_string(),
        kind,
        raw_text: gen.new_sentence.clone(),
        verdict,
        sentence: None,
        entity_map: expected,
        block_index: gen.block_index,
    };
    if !verdict.accepted {
        return record;
    }
    match align_and_label(&gen.new_sentence, &record.entity_map) {
        Ok(tokens) => {
            record.sentence = Some(Sentence {
                id: id.to_string(),
                tokens,
                provenance: Provenance::Augmented {
                    kind: kind.family(),
                    parent_id: parent_id.to_string(),
                },
            });
        }
        Err(AnnotateError::EmptyText) => {
            record.verdict = Verdict::reject(VerdictReason::EmptyText);
        }
        Err(AnnotateError::AlignmentFailure(_)) => {
            record.verdict = Verdict::reject(VerdictReason::AlignmentFailure);
        }
    }
    record
}

/// JSONL row shape shared by the augment pipeline and the baselines.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecordRow {
    pub id: Option<String>,
    pub parent_id: String,
    pub kind: String,
    pub strategy: Option<String>,
    pub raw_text: String,
    pub verdict: String,
    pub tokens: Option<Vec<String>>,
    pub labels: Option<Vec<String>>,
    pub entity_map: Vec<(String, String)>,
}

impl AugmentedRecord {
    pub fn to_row(&self) -> RecordRow {
        RecordRow {
            id: self.sentence.as_ref().map(|s| s.id.clone()),
            parent_id: self.parent_id.clone(),
            kind: self.kind.tag().to_string(),
            strategy: self.kind.strategy_id().map(str::to_string),
            raw_text: self.raw_text.clone(),
            verdict: self.verdict.reason.as_str().to_string(),
            tokens: self.sentence.as_ref().map(Sentence::token_texts),
            labels: self.sentence.as_ref().map(Sentence::labels),
            entity_map: self.entity_map.clone(),
        }
    }
}

/// Serializes records as one JSON object per line, in input order.
pub fn records_to_jsonl(records: &[AugmentedRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(&r.to_row()).expect("row serializes"));
        out.push('\n');
    }
    out
}
