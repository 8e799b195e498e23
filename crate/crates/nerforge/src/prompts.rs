//! Prompt construction for the augmentation and direct-NER requests.
//!
//! Templates are fixed byte-for-byte; only the three slots (`{sentence}`,
//! `{entities}`, `{new context}` / the direct-NER slots) vary. Changing a
//! template intentionally invalidates recorded cassettes, so the full
//! catalog is exported as JSON for audit via [`catalog_json`].

use std::collections::BTreeMap;

use thiserror::Error;

use crate::corpus::{extract_mentions, Sentence};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("sentence {0:?} has no entity mentions to augment")]
    NoEntities(String),
    #[error("direct NER prompts take at most {max} demonstrations, got {got}")]
    TooManyExamples { max: usize, got: usize },
}

/// The fourteen context-rewriting strategies: two sentence lengths, five
/// lexical usages, subordinate clauses, and six presentation styles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RewriteStrategy {
    LongSentence,
    ShortSentence,
    AdvancedWords,
    Adverbs,
    Adjectives,
    Prepositions,
    Conjunctions,
    SubordinateClauses,
    NewsStyle,
    SpokenStyle,
    MagazineStyle,
    FictionStyle,
    WikipediaStyle,
    MovieReviewStyle,
}

impl RewriteStrategy {
    pub const ALL: [RewriteStrategy; 14] = [
        RewriteStrategy::LongSentence,
        RewriteStrategy::ShortSentence,
        RewriteStrategy::AdvancedWords,
        RewriteStrategy::Adverbs,
        RewriteStrategy::Adjectives,
        RewriteStrategy::Prepositions,
        RewriteStrategy::Conjunctions,
        RewriteStrategy::SubordinateClauses,
        RewriteStrategy::NewsStyle,
        RewriteStrategy::SpokenStyle,
        RewriteStrategy::MagazineStyle,
        RewriteStrategy::FictionStyle,
        RewriteStrategy::WikipediaStyle,
        RewriteStrategy::MovieReviewStyle,
    ];

    /// The phrase substituted for `{new context}`. These are fixed project
    /// constants; edit with care, since they feed cassette fingerprints.
    pub fn phrase(self) -> &'static str {
        match self {
            RewriteStrategy::LongSentence => "a long sentence",
            RewriteStrategy::ShortSentence => "a short sentence",
            RewriteStrategy::AdvancedWords => "more advanced words",
            RewriteStrategy::Adverbs => "more adverbs",
            RewriteStrategy::Adjectives => "more adjectives",
            RewriteStrategy::Prepositions => "more prepositions",
            RewriteStrategy::Conjunctions => "more conjunctions",
            RewriteStrategy::SubordinateClauses => "subordinate clauses",
            RewriteStrategy::NewsStyle => "the style of news",
            RewriteStrategy::SpokenStyle => "the style of spoken language",
            RewriteStrategy::MagazineStyle => "the style of magazines",
            RewriteStrategy::FictionStyle => "the style of fictions",
            RewriteStrategy::WikipediaStyle => "the style of Wikipedia",
            RewriteStrategy::MovieReviewStyle => "the style of movie reviews",
        }
    }

    /// Stable short id used in record output, sentence ids, and the CLI.
    pub fn id(self) -> &'static str {
        match self {
            RewriteStrategy::LongSentence => "long_sentence",
            RewriteStrategy::ShortSentence => "short_sentence",
            RewriteStrategy::AdvancedWords => "advanced_words",
            RewriteStrategy::Adverbs => "adverbs",
            RewriteStrategy::Adjectives => "adjectives",
            RewriteStrategy::Prepositions => "prepositions",
            RewriteStrategy::Conjunctions => "conjunctions",
            RewriteStrategy::SubordinateClauses => "subordinate_clauses",
            RewriteStrategy::NewsStyle => "news",
            RewriteStrategy::SpokenStyle => "spoken",
            RewriteStrategy::MagazineStyle => "magazine",
            RewriteStrategy::FictionStyle => "fiction",
            RewriteStrategy::WikipediaStyle => "wikipedia",
            RewriteStrategy::MovieReviewStyle => "movie_review",
        }
    }

    pub fn from_id(id: &str) -> Option<Self> {
        RewriteStrategy::ALL.iter().copied().find(|s| s.id() == id)
    }
}

/// What a rendered prompt asks the model to do.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PromptKind {
    Context(RewriteStrategy),
    Entity,
    Both,
    Noise,
    DirectNerZeroShot,
    DirectNerFewShot(usize),
}

/// A rendered prompt plus where it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSpec {
    pub kind: PromptKind,
    pub text: String,
    pub source_sentence_id: String,
}

const CONTEXT_TEMPLATE: &str = r#"Given a sentence: """
{sentence}
"""

Given entities in above sentence separated by comma: """
{entities}
"""

Please generate 5 new sentences using {new context}. In each new sentence, use each given entity exactly once, keep their entity type in the given sentence, introduce no other entities.

Desired format:
Kept Entities: <all kept entities separated by comma>
New sentence: <new sentence>

Kept Entities: <all kept entities separated by comma>
New sentence: <new sentence>"#;

const ENTITY_TEMPLATE: &str = r#"Given a sentence: """
{sentence}
"""

Given entities in above sentence separated by comma: """
{entities}
"""

Please generate 20 sentences, replace given entities with new entities of the same type, keep other words.

Desired format:
Replaced Entities: <given entity -> new entity, given entity -> new entity>
New sentence: <new sentence>

Replaced Entities: <given entity -> new entity, given entity -> new entity>
New sentence: <new sentence>"#;

const BOTH_TEMPLATE: &str = r#"Given a sentence: """
{sentence}
"""

Given entities in above sentence separated by comma: """
{entities}
"""

Please replace given entities with new entities of the same type, keep other words.

Desired format:
Replaced Entities: <given entity -> new entity, given entity -> new entity>
New sentence: <new sentence>"#;

const NOISE_TEMPLATE: &str = r#"Given a sentence: """
{sentence}
"""

Given entities in above sentence separated by comma: """
{entities}
"""

Please use some common spelling mistakes randomly in the given sentence.

Desired format:
Replaced Entities: <given entity -> new entity, given entity -> new entity>
New sentence: <new sentence>"#;

const DIRECT_NER_ZERO_SHOT_TEMPLATE: &str = r#"Please identify {entity_categories} Entity from the given text.

Desired format: {format}

Text: {sentence}
Entity:"#;

const DIRECT_NER_FEW_SHOT_TEMPLATE: &str = r#"Please identify {entity_categories} Entity from the given text.

{examples}

Text: {sentence}
Entity:"#;

/// Maximum demonstrations a direct-NER prompt may carry.
pub const MAX_NER_EXAMPLES: usize = 3;

fn entity_slot(sentence: &Sentence) -> Result<String, PromptError> {
    let mentions = extract_mentions(sentence);
    if mentions.is_empty() {
        return Err(PromptError::NoEntities(sentence.id.clone()));
    }
    let mut seen = Vec::new();
    for m in mentions {
        if !seen.contains(&m.surface) {
            seen.push(m.surface);
        }
    }
    Ok(seen.join(", "))
}

fn fill(template: &str, sentence: &Sentence, entities: &str) -> String {
    template
        .replace("{sentence}", &sentence.text())
        .replace("{entities}", entities)
}

/// Context-level rewrite request: five new sentences in the strategy's
/// framing, keeping the given entities verbatim.
pub fn build_context_prompt(
    sentence: &Sentence,
    strategy: RewriteStrategy,
) -> Result<PromptSpec, PromptError> {
    let entities = entity_slot(sentence)?;
    let text = fill(CONTEXT_TEMPLATE, sentence, &entities)
        .replace("{new context}", strategy.phrase());
    Ok(PromptSpec {
        kind: PromptKind::Context(strategy),
        text,
        source_sentence_id: sentence.id.clone(),
    })
}

/// Entity-level request: twenty same-type replacements of the given
/// entities, other words untouched.
pub fn build_entity_prompt(sentence: &Sentence) -> Result<PromptSpec, PromptError> {
    let entities = entity_slot(sentence)?;
    Ok(PromptSpec {
        kind: PromptKind::Entity,
        text: fill(ENTITY_TEMPLATE, sentence, &entities),
        source_sentence_id: sentence.id.clone(),
    })
}

/// Second-stage request for both-level augmentation: a single replacement
/// pass over an already rewritten sentence.
pub fn build_both_prompt(sentence: &Sentence) -> Result<PromptSpec, PromptError> {
    let entities = entity_slot(sentence)?;
    Ok(PromptSpec {
        kind: PromptKind::Both,
        text: fill(BOTH_TEMPLATE, sentence, &entities),
        source_sentence_id: sentence.id.clone(),
    })
}

/// Noise-injection request: spelling mistakes sprinkled over the sentence.
pub fn build_noise_prompt(sentence: &Sentence) -> Result<PromptSpec, PromptError> {
    let entities = entity_slot(sentence)?;
    Ok(PromptSpec {
        kind: PromptKind::Noise,
        text: fill(NOISE_TEMPLATE, sentence, &entities),
        source_sentence_id: sentence.id.clone(),
    })
}

fn render_demonstration(sentence: &Sentence) -> String {
    let mentions = extract_mentions(sentence);
    let answer = if mentions.is_empty() {
        "none".to_string()
    } else {
        mentions
            .iter()
            .map(|m| format!("{}: {}", m.surface, m.entity_type))
            .collect::<Vec<_>>()
            .join("; ")
    };
    format!("Text: {}\nEntity: {}", sentence.text(), answer)
}

/// Direct NER over the model itself: zero-shot with a format hint, or up to
/// three `Text:`/`Entity:` demonstrations.
pub fn build_direct_ner_prompt(
    categories: &[String],
    target: &Sentence,
    examples: &[Sentence],
    format_hint: &str,
) -> Result<PromptSpec, PromptError> {
    if examples.len() > MAX_NER_EXAMPLES {
        return Err(PromptError::TooManyExamples {
            max: MAX_NER_EXAMPLES,
            got: examples.len(),
        });
    }
    let cats = categories.join(", ");
    let text = if examples.is_empty() {
        DIRECT_NER_ZERO_SHOT_TEMPLATE
            .replace("{entity_categories}", &cats)
            .replace("{format}", format_hint)
            .replace("{sentence}", &target.text())
    } else {
        let demos = examples
            .iter()
            .map(render_demonstration)
            .collect::<Vec<_>>()
            .join("\n\n");
        DIRECT_NER_FEW_SHOT_TEMPLATE
            .replace("{entity_categories}", &cats)
            .replace("{examples}", &demos)
            .replace("{sentence}", &target.text())
    };
    let kind = if examples.is_empty() {
        PromptKind::DirectNerZeroShot
    } else {
        PromptKind::DirectNerFewShot(examples.len())
    };
    Ok(PromptSpec {
        kind,
        text,
        source_sentence_id: target.id.clone(),
    })
}

/// The full template catalog (template id -> template text), exported as a
/// JSON document for audit. Strategy phrases are listed under
/// `context/<strategy id>` keys.
pub fn catalog() -> BTreeMap<String, String> {
    let mut map = BTreeMap::new();
    map.insert("context".into(), CONTEXT_TEMPLATE.into());
    map.insert("entity".into(), ENTITY_TEMPLATE.into());
    map.insert("both".into(), BOTH_TEMPLATE.into());
    map.insert("noise".into(), NOISE_TEMPLATE.into());
    map.insert(
        "direct_ner_zero_shot".into(),
        DIRECT_NER_ZERO_SHOT_TEMPLATE.into(),
    );
    map.insert(
        "direct_ner_few_shot".into(),
        DIRECT_NER_FEW_SHOT_TEMPLATE.into(),
    );
    for s in RewriteStrategy::ALL {
        map.insert(format!("context/{}", s.id()), s.phrase().into());
    }
    map
}

/// [`catalog`] rendered as pretty JSON.
pub fn catalog_json() -> String {
    serde_json::to_string_pretty(&catalog()).expect("catalog is serializable")
}
