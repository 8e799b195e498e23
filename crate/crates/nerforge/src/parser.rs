//! Parsing of model completions into structured generations.
//!
//! The parsers are total: any input, however mangled, yields a
//! [`ParseReport`] in which every detected block is either a generation or
//! a dropped block with a reason. Strictness about entity handling lives in
//! the annotator, not here.

/// One parsed generation block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedGeneration {
    pub kind: GenerationKind,
    /// Entities the model claims to have kept (context blocks only).
    pub kept_entities: Vec<String>,
    /// `old -> new` pairs the model claims to have replaced.
    pub replacements: Vec<(String, String)>,
    pub new_sentence: String,
    pub block_index: usize,
    /// Set when a replacement block declared no usable pairs, which noise
    /// outputs legitimately do.
    pub empty_mapping: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenerationKind {
    Kept,
    Replaced,
}

impl ParsedGeneration {
    /// Re-renders this generation in the block format the prompts request.
    pub fn to_block(&self) -> String {
        match self.kind {
            GenerationKind::Kept => format!(
                "Kept Entities: {}\nNew sentence: {}",
                self.kept_entities.join(", "),
                self.new_sentence
            ),
            GenerationKind::Replaced => format!(
                "Replaced Entities: {}\nNew sentence: {}",
                self.replacements
                    .iter()
                    .map(|(a, b)| format!("{a} -> {b}"))
                    .collect::<Vec<_>>()
                    .join(", "),
                self.new_sentence
            ),
        }
    }
}

/// Reason a detected block was not usable.
pub const DROP_MISSING_SENTENCE_LINE: &str = "MissingSentenceLine";
pub const DROP_EMPTY_SENTENCE: &str = "EmptySentence";

/// Outcome of scanning one completion.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParseReport {
    pub generations: Vec<ParsedGeneration>,
    pub dropped_blocks: Vec<(usize, String)>,
}

impl ParseReport {
    /// Total number of detected blocks (usable plus dropped).
    pub fn block_count(&self) -> usize {
        self.generations.len() + self.dropped_blocks.len()
    }
}

/// Strips `1.` / `2)` style enumeration the model sometimes prepends.
fn strip_enumeration(line: &str) -> &str {
    let s = line.trim_start();
    let digits = s.chars().take_while(char::is_ascii_digit).count();
    if digits > 0 {
        if let Some(rest) = s.get(digits..) {
            if let Some(r) = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')')) {
                return r.trim_start();
            }
        }
    }
    s
}

/// Case-insensitive marker match; returns the trimmed payload after the
/// marker. Safe on arbitrary bytes (no slicing off char boundaries).
fn marker_payload<'a>(line: &'a str, marker: &str) -> Option<&'a str> {
    let s = strip_enumeration(line);
    let head = s.get(..marker.len())?;
    if head.eq_ignore_ascii_case(marker) {
        Some(s[marker.len()..].trim())
    } else {
        None
    }
}

/// Window after a marker line in which the paired "New sentence:" line must
/// appear.
const SENTENCE_LOOKAHEAD: usize = 3;

fn scan_blocks(content: &str, marker: &str) -> Vec<(usize, String, Option<String>)> {
    let lines: Vec<&str> = content.lines().collect();
    let marker_lines: Vec<usize> = (0..lines.len())
        .filter(|&i| marker_payload(lines[i], marker).is_some())
        .collect();
    let mut blocks = Vec::new();
    for (block_index, &at) in marker_lines.iter().enumerate() {
        let payload = marker_payload(lines[at], marker).unwrap_or("").to_string();
        let next_marker = marker_lines
            .get(block_index + 1)
            .copied()
            .unwrap_or(lines.len());
        let window_end = (at + 1 + SENTENCE_LOOKAHEAD).min(next_marker).min(lines.len());
        let sentence = (at + 1..window_end)
            .find_map(|i| marker_payload(lines[i], "New sentence:"))
            .map(str::to_string);
        blocks.push((block_index, payload, sentence));
    }
    blocks
}

fn split_csv(payload: &str) -> Vec<String> {
    payload
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

/// Parses "Kept Entities:" / "New sentence:" blocks from a context-level
/// completion.
pub fn parse_context_output(content: &str) -> ParseReport {
    let mut report = ParseReport::default();
    for (block_index, payload, sentence) in scan_blocks(content, "Kept Entities:") {
        match sentence {
            None => report
                .dropped_blocks
                .push((block_index, DROP_MISSING_SENTENCE_LINE.into())),
            Some(s) if s.is_empty() => report
                .dropped_blocks
                .push((block_index, DROP_EMPTY_SENTENCE.into())),
            Some(s) => report.generations.push(ParsedGeneration {
                kind: GenerationKind::Kept,
                kept_entities: split_csv(&payload),
                replacements: Vec::new(),
                new_sentence: s,
                block_index,
                empty_mapping: false,
            }),
        }
    }
    report
}

/// Parses "Replaced Entities:" / "New sentence:" blocks from entity-level,
/// both-level, and noise completions. Segments without `->` contribute no
/// pair; a block whose mapping ends up empty is flagged rather than dropped.
pub fn parse_replacement_output(content: &str) -> ParseReport {
    let mut report = ParseReport::default();
    for (block_index, payload, sentence) in scan_blocks(content, "Replaced Entities:") {
        match sentence {
            None => report
                .dropped_blocks
                .push((block_index, DROP_MISSING_SENTENCE_LINE.into())),
            Some(s) if s.is_empty() => report
                .dropped_blocks
                .push((block_index, DROP_EMPTY_SENTENCE.into())),
            Some(s) => {
                let mut replacements = Vec::new();
                for segment in payload.split(',') {
                    if let Some((old, new)) = segment.split_once("->") {
                        let (old, new) = (old.trim(), new.trim());
                        if !old.is_empty() && !new.is_empty() {
                            replacements.push((old.to_string(), new.to_string()));
                        }
                    }
                }
                let empty_mapping = replacements.is_empty();
                report.generations.push(ParsedGeneration {
                    kind: GenerationKind::Replaced,
                    kept_entities: Vec::new(),
                    replacements,
                    new_sentence: s,
                    block_index,
                    empty_mapping,
                });
            }
        }
    }
    report
}

/// Extracts `(surface, label)` pairs from a direct-NER answer. Both
/// `surface: label` and `label: surface` orders are accepted; pairs whose
/// label matches no known category (case-insensitively) are discarded.
pub fn parse_direct_ner_output(content: &str, categories: &[String]) -> Vec<(String, String)> {
    let lines: Vec<&str> = content.lines().collect();
    let answer = lines
        .iter()
        .position(|l| marker_payload(l, "Entity:").is_some())
        .map(|i| {
            let mut parts = vec![marker_payload(lines[i], "Entity:").unwrap_or("")];
            parts.extend(&lines[i + 1..]);
            parts.join("\n")
        })
        .unwrap_or_else(|| content.to_string());

    let canon = |s: &str| -> Option<String> {
        categories
            .iter()
            .find(|c| c.eq_ignore_ascii_case(s))
            .cloned()
    };

    let mut pairs = Vec::new();
    for segment in answer.split([';', ',', '\n']) {
        let Some((left, right)) = segment.split_once(':') else {
            continue;
        };
        let (left, right) = (left.trim(), right.trim());
        if left.is_empty() || right.is_empty() {
            continue;
        }
        if let Some(label) = canon(right) {
            pairs.push((left.to_string(), label));
        } else if let Some(label) = canon(left) {
            pairs.push((right.to_string(), label));
        }
    }
    pairs
}
