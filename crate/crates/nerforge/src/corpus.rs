//! Data model for token-labeled NER corpora.
//!
//! Sentences carry one label per token under the inside-outside scheme: a
//! token is either `"O"` or an entity-type name, and maximal runs of the
//! same non-`"O"` label form one mention. CoNLL-style files are read and
//! written here; BIO input labels are normalized to IO on the way in.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

/// Reserved label for tokens outside any entity.
pub const OUTSIDE: &str = "O";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CorpusError {
    #[error("line {0}: expected `token<sep>label` with exactly two fields")]
    MalformedLine(usize),
    #[error("corpus contains no sentences")]
    EmptyCorpus,
    #[error("sentence {0:?} cannot be serialized: {1}")]
    InvalidSentence(String, String),
}

/// One token with its IO label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub label: String,
}

impl Token {
    pub fn new(text: impl Into<String>, label: impl Into<String>) -> Self {
        Token {
            text: text.into(),
            label: label.into(),
        }
    }

    pub fn is_entity(&self) -> bool {
        self.label != OUTSIDE
    }
}

/// How a sentence entered the corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Provenance {
    Original,
    Augmented {
        kind: AugmentationKind,
        parent_id: String,
    },
}

/// Coarse augmentation family, used for provenance tracking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum AugmentationKind {
    Context,
    Entity,
    Both,
    Noise,
    Baseline,
}

impl fmt::Display for AugmentationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            AugmentationKind::Context => "context",
            AugmentationKind::Entity => "entity",
            AugmentationKind::Both => "both",
            AugmentationKind::Noise => "noise",
            AugmentationKind::Baseline => "baseline",
        };
        f.write_str(s)
    }
}

/// A tokenized sentence with per-token labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub id: String,
    pub tokens: Vec<Token>,
    pub provenance: Provenance,
}

impl Sentence {
    pub fn original(id: impl Into<String>, tokens: Vec<Token>) -> Self {
        Sentence {
            id: id.into(),
            tokens,
            provenance: Provenance::Original,
        }
    }

    pub fn token_texts(&self) -> Vec<String> {
        self.tokens.iter().map(|t| t.text.clone()).collect()
    }

    pub fn labels(&self) -> Vec<String> {
        self.tokens.iter().map(|t| t.label.clone()).collect()
    }

    /// Space-joined token texts, as substituted into prompts.
    pub fn text(&self) -> String {
        self.tokens
            .iter()
            .map(|t| t.text.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// A typed entity span decoded from IO labels.
///
/// `start..end` is a token-index range; `surface` is the space-joined text
/// of the covered tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityMention {
    pub surface: String,
    pub entity_type: String,
    pub start: usize,
    pub end: usize,
}

/// A labeled corpus plus its entity-type inventory (excluding `"O"`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub sentences: Vec<Sentence>,
    pub label_set: BTreeSet<String>,
}

impl Dataset {
    /// Builds a dataset, deriving the label set from the sentences.
    pub fn from_sentences(sentences: Vec<Sentence>) -> Self {
        let label_set = sentences
            .iter()
            .flat_map(|s| s.tokens.iter())
            .filter(|t| t.is_entity())
            .map(|t| t.label.clone())
            .collect();
        Dataset {
            sentences,
            label_set,
        }
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }
}

/// Parses CoNLL-style text: one `token<sep>label` pair per line, blank line
/// between sentences. The separator is a tab or any run of spaces. BIO
/// labels (`B-X`/`I-X`) are normalized to IO (`X`), which merges adjacent
/// same-type mentions.
pub fn parse_conll(text: &str) -> Result<Dataset, CorpusError> {
    let mut sentences = Vec::new();
    let mut current: Vec<Token> = Vec::new();

    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            if !current.is_empty() {
                let id = format!("s{:04}", sentences.len());
                sentences.push(Sentence::original(id, std::mem::take(&mut current)));
            }
            continue;
        }
        let mut fields = line.split_whitespace();
        let (tok, label) = match (fields.next(), fields.next(), fields.next()) {
            (Some(t), Some(l), None) => (t, l),
            _ => return Err(CorpusError::MalformedLine(idx + 1)),
        };
        let label = normalize_label(label);
        if label.is_empty() {
            return Err(CorpusError::MalformedLine(idx + 1));
        }
        current.push(Token::new(tok, label));
    }
    if !current.is_empty() {
        let id = format!("s{:04}", sentences.len());
        sentences.push(Sentence::original(id, current));
    }
    if sentences.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    Ok(Dataset::from_sentences(sentences))
}

fn normalize_label(label: &str) -> String {
    label
        .strip_prefix("B-")
        .or_else(|| label.strip_prefix("I-"))
        .unwrap_or(label)
        .to_string()
}

/// Writes a dataset back to CoNLL text: tab-separated, one blank line
/// between sentences, trailing newline. Round-trips through [`parse_conll`]
/// up to sentence ids.
pub fn serialize_conll(dataset: &Dataset) -> Result<String, CorpusError> {
    let mut blocks = Vec::with_capacity(dataset.sentences.len());
    for s in &dataset.sentences {
        if s.tokens.is_empty() {
            return Err(CorpusError::InvalidSentence(
                s.id.clone(),
                "empty token list".into(),
            ));
        }
        let block = s
            .tokens
            .iter()
            .map(|t| format!("{}\t{}", t.text, t.label))
            .collect::<Vec<_>>()
            .join("\n");
        blocks.push(block);
    }
    Ok(blocks.join("\n\n") + "\n")
}

const PUNCT: &[char] = &[
    '.', ',', ';', ':', '!', '?', '"', '\'', '(', ')', '[', ']', '{', '}',
];

/// Splits raw text into tokens: whitespace-separated chunks with leading and
/// trailing punctuation peeled off into their own tokens, outermost first.
/// Interior punctuation (hyphens, apostrophes inside words) stays attached.
pub fn tokenize(raw: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in raw.split_whitespace() {
        let chars: Vec<char> = chunk.chars().collect();
        let mut lo = 0;
        let mut hi = chars.len();
        while lo < hi && PUNCT.contains(&chars[lo]) {
            out.push(chars[lo].to_string());
            lo += 1;
        }
        let mut tail = Vec::new();
        while hi > lo && PUNCT.contains(&chars[hi - 1]) {
            tail.push(chars[hi - 1].to_string());
            hi -= 1;
        }
        if lo < hi {
            out.push(chars[lo..hi].iter().collect());
        }
        tail.reverse();
        out.extend(tail);
    }
    out
}

/// Decodes IO labels into mentions: each maximal run of an identical
/// non-`"O"` label becomes one mention, ordered by start index.
pub fn extract_mentions(sentence: &Sentence) -> Vec<EntityMention> {
    let mut mentions = Vec::new();
    let mut i = 0;
    let toks = &sentence.tokens;
    while i < toks.len() {
        if !toks[i].is_entity() {
            i += 1;
            continue;
        }
        let ty = &toks[i].label;
        let start = i;
        while i < toks.len() && toks[i].label == *ty {
            i += 1;
        }
        let surface = toks[start..i]
            .iter()
            .map(|t| t.text.as_str())
            .collect::<Vec<_>>()
            .join(" ");
        mentions.push(EntityMention {
            surface,
            entity_type: ty.clone(),
            start,
            end: i,
        });
    }
    mentions
}
