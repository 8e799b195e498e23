//! Linguistic quality metrics and the entity-distribution report.
//!
//! Informativeness is the mean number of distinct content tokens per
//! sentence (lowercased alphabetic tokens minus a bundled stopword list).
//! Readability is the Flesch-Kincaid grade level with a vowel-group
//! syllable heuristic. Grammar error counts come from an optional HTTP
//! checker; when none is configured the metric is absent, not zero.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{extract_mentions, Sentence};

#[derive(Debug, Error)]
pub enum QualityError {
    #[error("corpus is empty (or contains no words)")]
    EmptyCorpus,
    #[error("grammar checker transport failure: {0}")]
    Transport(String),
}

/// The standard English stopword list bundled for informativeness.
pub const STOPWORDS: &[&str] = &[
    "i", "me", "my", "myself", "we", "our", "ours", "ourselves", "you", "your", "yours",
    "yourself", "yourselves", "he", "him", "his", "himself", "she", "her", "hers", "herself",
    "it", "its", "itself", "they", "them", "their", "theirs", "themselves", "what", "which",
    "who", "whom", "this", "that", "these", "those", "am", "is", "are", "was", "were", "be",
    "been", "being", "have", "has", "had", "having", "do", "does", "did", "doing", "a", "an",
    "the", "and", "but", "if", "or", "because", "as", "until", "while", "of", "at", "by", "for",
    "with", "about", "against", "between", "into", "through", "during", "before", "after",
    "above", "below", "to", "from", "up", "down", "in", "out", "on", "off", "over", "under",
    "again", "further", "then", "once", "here", "there", "when", "where", "why", "how", "all",
    "any", "both", "each", "few", "more", "most", "other", "some", "such", "no", "nor", "not",
    "only", "own", "same", "so", "than", "too", "very", "s", "t", "can", "will", "just", "don",
    "should", "now", "d", "ll", "m", "o", "re", "ve", "y", "ain", "aren", "couldn", "didn",
    "doesn", "hadn", "hasn", "haven", "isn", "ma", "mightn", "mustn", "needn", "shan",
    "shouldn", "wasn", "weren", "won", "wouldn",
];

fn is_word(text: &str) -> bool {
    !text.is_empty() && text.chars().all(char::is_alphabetic)
}

/// Mean distinct-content-token count per sentence.
pub fn informativeness(corpus: &[Sentence]) -> Result<f64, QualityError> {
    if corpus.is_empty() {
        return Err(QualityError::EmptyCorpus);
    }
    let stopwords: BTreeSet<&str> = STOPWORDS.iter().copied().collect();
    let total: usize = corpus
        .iter()
        .map(|s| {
            s.tokens
                .iter()
                .filter(|t| is_word(&t.text))
                .map(|t| t.text.to_lowercase())
                .filter(|w| !stopwords.contains(w.as_str()))
                .collect::<BTreeSet<_>>()
                .len()
        })
        .sum();
    Ok(total as f64 / corpus.len() as f64)
}

/// Syllables in one word: maximal vowel groups (a, e, i, o, u, y), minus a
/// terminal silent "e" unless the word ends in consonant + "le", and at
/// least 1.
pub fn count_syllables(word: &str) -> usize {
    let lower = word.to_lowercase();
    let chars: Vec<char> = lower.chars().collect();
    let is_vowel = |c: char| matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'y');
    let mut groups = 0usize;
    let mut in_group = false;
    for &c in &chars {
        if is_vowel(c) {
            if !in_group {
                groups += 1;
                in_group = true;
            }
        } else {
            in_group = false;
        }
    }
    if chars.last() == Some(&'e') && groups > 0 {
        let n = chars.len();
        let consonant_le = n >= 3 && chars[n - 2] == 'l' && !is_vowel(chars[n - 3]);
        if !consonant_le {
            groups -= 1;
        }
    }
    groups.max(1)
}

/// Flesch-Kincaid grade level over the whole corpus:
/// `0.39 * (words / sentences) + 11.8 * (syllables / words) - 15.59`,
/// where words are the alphabetic tokens.
pub fn fk_grade(corpus: &[Sentence]) -> Result<f64, QualityError> {
    if corpus.is_empty() {
        return Err(QualityError::EmptyCorpus);
    }
    let mut words = 0usize;
    let mut syllables = 0usize;
    for s in corpus {
        for t in &s.tokens {
            if is_word(&t.text) {
                words += 1;
                syllables += count_syllables(&t.text);
            }
        }
    }
    if words == 0 {
        return Err(QualityError::EmptyCorpus);
    }
    let sentences = corpus.len() as f64;
    Ok(0.39 * (words as f64 / sentences) + 11.8 * (syllables as f64 / words as f64) - 15.59)
}

/// Anything that can count grammar errors in a text.
pub trait GrammarCheck {
    fn match_count(&self, text: &str) -> Result<usize, QualityError>;
}

/// LanguageTool-style HTTP checker: POSTs `text` and `language=en-US` as a
/// form and counts entries in the response's `matches` array (a bare JSON
/// array is accepted too).
pub struct HttpGrammarChecker {
    base_url: String,
    client: reqwest::blocking::Client,
}

impl HttpGrammarChecker {
    pub fn new(base_url: impl Into<String>) -> Self {
        HttpGrammarChecker {
            base_url: base_url.into(),
            client: reqwest::blocking::Client::new(),
        }
    }
}

impl GrammarCheck for HttpGrammarChecker {
    fn match_count(&self, text: &str) -> Result<usize, QualityError> {
        let resp = self
            .client
            .post(&self.base_url)
            .form(&[("text", text), ("language", "en-US")])
            .send()
            .map_err(|e| QualityError::Transport(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(QualityError::Transport(format!(
                "status {}",
                resp.status().as_u16()
            )));
        }
        let value: serde_json::Value = resp
            .json()
            .map_err(|e| QualityError::Transport(e.to_string()))?;
        match &value {
            serde_json::Value::Array(items) => Ok(items.len()),
            serde_json::Value::Object(map) => map
                .get("matches")
                .and_then(|m| m.as_array())
                .map(|a| a.len())
                .ok_or_else(|| QualityError::Transport("no matches array".to_string())),
            _ => Err(QualityError::Transport("unexpected response".to_string())),
        }
    }
}

/// Mean grammar-error matches per sentence. Absent when no checker is
/// configured; sentences whose check fails are excluded with a warning.
pub fn grammar_error_rate(
    corpus: &[Sentence],
    checker: Option<&dyn GrammarCheck>,
) -> Result<Option<f64>, QualityError> {
    let Some(checker) = checker else {
        return Ok(None);
    };
    let mut total = 0usize;
    let mut checked = 0usize;
    let mut failed = 0usize;
    for s in corpus {
        match checker.match_count(&s.text()) {
            Ok(n) => {
                total += n;
                checked += 1;
            }
            Err(e) => {
                failed += 1;
                log::warn!("grammar check failed for {}: {e}", s.id);
            }
        }
    }
    if failed > 0 {
        log::warn!("grammar check skipped {failed} sentence(s)");
    }
    if checked == 0 {
        return Ok(None);
    }
    Ok(Some(total as f64 / checked as f64))
}

/// Mention counts per entity type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityHistogram {
    pub counts: BTreeMap<String, usize>,
    pub total: usize,
    /// max count / min count over observed types; 1.0 for degenerate cases.
    pub imbalance_ratio: f64,
}

impl EntityHistogram {
    /// Rank-frequency CSV (`type,count`), highest count first.
    pub fn to_csv(&self) -> String {
        let mut rows: Vec<(&String, &usize)> = self.counts.iter().collect();
        rows.sort_by(|a, b| b.1.cmp(a.1).then(a.0.cmp(b.0)));
        let mut out = String::from("type,count\n");
        for (ty, n) in rows {
            out.push_str(&format!("{ty},{n}\n"));
        }
        out
    }
}

/// Counts mentions per type across the corpus.
pub fn entity_distribution(corpus: &[Sentence]) -> EntityHistogram {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for s in corpus {
        for m in extract_mentions(s) {
            *counts.entry(m.entity_type).or_insert(0) += 1;
        }
    }
    let total = counts.values().sum();
    let max = counts.values().max().copied().unwrap_or(0);
    let min = counts.values().min().copied().unwrap_or(0);
    let imbalance_ratio = if max == 0 { 1.0 } else { max as f64 / min.max(1) as f64 };
    EntityHistogram {
        counts,
        total,
        imbalance_ratio,
    }
}

/// All quality metrics for one corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QualityReport {
    pub informativeness: f64,
    pub fk_grade: f64,
    pub grammar_errors_per_sentence: Option<f64>,
    pub sentence_count: usize,
}

impl QualityReport {
    pub fn to_table(&self) -> String {
        let grammar = self
            .grammar_errors_per_sentence
            .map(|g| format!("{g:.2}"))
            .unwrap_or_else(|| "n/a".to_string());
        format!(
            "metric                        value\n\
             informativeness               {:.2}\n\
             fk_grade                      {:.2}\n\
             grammar_errors_per_sentence   {}\n\
             sentence_count                {}\n",
            self.informativeness, self.fk_grade, grammar, self.sentence_count
        )
    }
}

/// Computes the full report.
pub fn analyze(
    corpus: &[Sentence],
    checker: Option<&dyn GrammarCheck>,
) -> Result<QualityReport, QualityError> {
    Ok(QualityReport {
        informativeness: informativeness(corpus)?,
        fk_grade: fk_grade(corpus)?,
        grammar_errors_per_sentence: grammar_error_rate(corpus, checker)?,
        sentence_count: corpus.len(),
    })
}
