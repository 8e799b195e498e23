//! Orchestration of the four augmentation levels.
//!
//! For each sampled sentence the pipeline renders prompts, asks the
//! completion source, parses the blocks, filters them, and aligns labels.
//! A malformed response only affects its own records; cassette misses are
//! collected and reported together at the end so one replay run surfaces
//! every missing fingerprint. Output order is deterministic: records are
//! generated in (sentence, strategy, block) order and then sorted by
//! (parent id, kind, strategy, block index).

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::annotator::{
    build_record, filter_context, filter_replacement, AugmentedRecord, Inventory, RecordKind,
};
use crate::corpus::{extract_mentions, Dataset, EntityMention, Sentence};
use crate::gateway::{CompletionSource, GatewayError, GenerationConfig};
use crate::parser::{parse_context_output, parse_replacement_output};
use crate::prompts::{
    build_both_prompt, build_context_prompt, build_entity_prompt, build_noise_prompt, PromptError,
    RewriteStrategy,
};
use crate::sampler::SampledSet;

/// Augmentation level selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Level {
    Context,
    Entity,
    Both,
    Noise,
    All,
}

impl Level {
    pub fn parse(s: &str) -> Option<Level> {
        Some(match s {
            "context" => Level::Context,
            "entity" => Level::Entity,
            "both" => Level::Both,
            "noise" => Level::Noise,
            "all" => Level::All,
            _ => return None,
        })
    }
}

/// Per-dataset augmentation-rate preset: the target multiplier of augmented
/// sentences per original, by level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RatePreset {
    pub name: &'static str,
    pub context: u32,
    pub entity: u32,
    pub both: u32,
    pub all: u32,
}

/// Named presets. The `all` rate always equals the sum of the three levels.
pub const PRESETS: [RatePreset; 4] = [
    RatePreset {
        name: "conll03",
        context: 45,
        entity: 20,
        both: 40,
        all: 105,
    },
    RatePreset {
        name: "ontonotes5",
        context: 20,
        entity: 18,
        both: 12,
        all: 50,
    },
    RatePreset {
        name: "mit-movie",
        context: 30,
        entity: 20,
        both: 25,
        all: 75,
    },
    RatePreset {
        name: "few-nerd",
        context: 10,
        entity: 15,
        both: 7,
        all: 32,
    },
];

pub fn preset(name: &str) -> Option<RatePreset> {
    PRESETS.iter().copied().find(|p| p.name == name)
}

/// How many generations a single prompt may contribute, per level. These
/// mirror the counts the templates request.
pub const MAX_CONTEXT_GENERATIONS_PER_PROMPT: usize = 5;
pub const MAX_ENTITY_GENERATIONS_PER_PROMPT: usize = 20;

/// Everything one augmentation run needs to know.
#[derive(Debug, Clone)]
pub struct AugmentPlan {
    pub levels: BTreeSet<Level>,
    pub target_rate: BTreeMap<Level, u32>,
    pub strategies: Vec<RewriteStrategy>,
    pub max_noise_per_original: usize,
    pub both_stage2_temperature: f64,
    /// Extra attempts for a stage-2 prompt whose response was unusable.
    /// Only meaningful against a sampling endpoint; replayed responses are
    /// identical, so retries collapse after the first repeat.
    pub both_stage2_retries: u32,
    pub seed: u64,
    pub config: GenerationConfig,
}

impl Default for AugmentPlan {
    fn default() -> Self {
        AugmentPlan {
            levels: BTreeSet::from([Level::All, Level::Context, Level::Entity, Level::Both, Level::Noise]),
            target_rate: BTreeMap::new(),
            strategies: RewriteStrategy::ALL.to_vec(),
            max_noise_per_original: 1,
            both_stage2_temperature: 1.0,
            both_stage2_retries: 2,
            seed: 0,
            config: GenerationConfig::default(),
        }
    }
}

impl AugmentPlan {
    pub fn with_preset(mut self, p: RatePreset) -> Self {
        self.target_rate.insert(Level::Context, p.context);
        self.target_rate.insert(Level::Entity, p.entity);
        self.target_rate.insert(Level::Both, p.both);
        self.target_rate.insert(Level::All, p.all);
        self
    }

    pub fn with_levels(mut self, levels: impl IntoIterator<Item = Level>) -> Self {
        self.levels = levels.into_iter().collect();
        self
    }

    fn cap(&self, level: Level) -> usize {
        self.target_rate
            .get(&level)
            .map(|&v| v as usize)
            .unwrap_or(usize::MAX)
    }

    fn noise_cap(&self) -> usize {
        self.max_noise_per_original.min(1)
    }

    fn stage2_config(&self) -> GenerationConfig {
        self.config.clone().with_temperature(self.both_stage2_temperature)
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("prompt construction failed: {0}")]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Gateway(GatewayError),
    #[error("cassette is missing {} fingerprint(s): {}", .0.len(), .0.join(", "))]
    CassetteMisses(Vec<String>),
}

/// Collects cassette misses instead of aborting, so a single run reports
/// every stale fingerprint.
struct MissLog {
    misses: Vec<String>,
}

impl MissLog {
    fn new() -> Self {
        MissLog { misses: Vec::new() }
    }

    /// Returns `Ok(None)` when the failure was a recorded miss.
    fn check(
        &mut self,
        result: Result<crate::gateway::RawResponse, GatewayError>,
    ) -> Result<Option<crate::gateway::RawResponse>, PipelineError> {
        match result {
            Ok(r) => Ok(Some(r)),
            Err(GatewayError::CassetteMiss(fp)) => {
                self.misses.push(fp);
                Ok(None)
            }
            Err(e) => Err(PipelineError::Gateway(e)),
        }
    }

    fn finish(self, records: Vec<AugmentedRecord>) -> Result<Vec<AugmentedRecord>, PipelineError> {
        if self.misses.is_empty() {
            Ok(sort_records(records))
        } else {
            Err(PipelineError::CassetteMisses(self.misses))
        }
    }
}

fn sort_records(mut records: Vec<AugmentedRecord>) -> Vec<AugmentedRecord> {
    records.sort_by(|a, b| {
        (
            &a.parent_id,
            a.kind.family(),
            a.kind.strategy_id().unwrap_or(""),
            a.block_index,
        )
            .cmp(&(
                &b.parent_id,
                b.kind.family(),
                b.kind.strategy_id().unwrap_or(""),
                b.block_index,
            ))
    });
    records
}

/// The sampled set's full `(surface, type)` inventory, used to spot foreign
/// entities retained by context rewrites.
pub fn entity_inventory(set: &SampledSet) -> Inventory {
    let mut inv = Inventory::new();
    for s in &set.sentences {
        for m in extract_mentions(s) {
            inv.insert((m.surface, m.entity_type));
        }
    }
    inv
}

fn given_pairs(mentions: &[EntityMention]) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = Vec::new();
    for m in mentions {
        let pair = (m.surface.clone(), m.entity_type.clone());
        if !out.contains(&pair) {
            out.push(pair);
        }
    }
    out
}

/// Rewrites each given pair through the model's declared replacement map.
pub fn transform_expected(
    given: &[(String, String)],
    mapping: &[(String, String)],
) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (surface, ty) in given {
        let new_surface = mapping
            .iter()
            .find(|(old, _)| old == surface)
            .map(|(_, new)| new.clone())
            .unwrap_or_else(|| surface.clone());
        let pair = (new_surface, ty.clone());
        if !out.contains(&pair) {
            out.push(pair);
        }
    }
    out
}

/// Context-level run: one prompt per (sentence, strategy) at temperature 0,
/// each contributing at most five generations, until the per-sentence
/// target is reached.
pub fn run_context_level(
    set: &SampledSet,
    plan: &AugmentPlan,
    source: &dyn CompletionSource,
) -> Result<Vec<AugmentedRecord>, PipelineError> {
    let inventory = entity_inventory(set);
    let cap = plan.cap(Level::Context);
    let mut records = Vec::new();
    let mut misses = MissLog::new();

    for sentence in &set.sentences {
        let mentions = extract_mentions(sentence);
        if mentions.is_empty() {
            continue;
        }
        let expected = given_pairs(&mentions);
        let mut accepted = 0usize;
        for &strategy in &plan.strategies {
            if accepted >= cap {
                break;
            }
            let prompt = build_context_prompt(sentence, strategy)?;
            let Some(response) = misses.check(source.complete(&prompt, &plan.config))? else {
                continue;
            };
            let report = parse_context_output(&response.content);
            for (_, reason) in &report.dropped_blocks {
                log::debug!("{}: dropped context block ({reason})", sentence.id);
            }
            for gen in report
                .generations
                .iter()
                .take(MAX_CONTEXT_GENERATIONS_PER_PROMPT)
            {
                if accepted >= cap {
                    break;
                }
                let verdict = filter_context(gen, &mentions, &inventory);
                let id = format!(
                    "{}.ctx.{}.{}",
                    sentence.id,
                    strategy.id(),
                    gen.block_index
                );
                let record = build_record(
                    &sentence.id,
                    &id,
                    RecordKind::Context(strategy),
                    gen,
                    verdict,
                    expected.clone(),
                );
                if record.verdict.accepted {
                    accepted += 1;
                }
                records.push(record);
            }
        }
    }
    misses.finish(records)
}

/// Entity-level run: one replacement prompt per sentence (≤ 20 generations
/// consumed) plus, when the plan includes noise, one noise prompt capped at
/// a single accepted noisy variant per original.
pub fn run_entity_level(
    set: &SampledSet,
    plan: &AugmentPlan,
    source: &dyn CompletionSource,
) -> Result<Vec<AugmentedRecord>, PipelineError> {
    let cap = plan.cap(Level::Entity);
    let with_noise = plan.levels.contains(&Level::Noise) || plan.levels.contains(&Level::All);
    let mut records = Vec::new();
    let mut misses = MissLog::new();

    for sentence in &set.sentences {
        let mentions = extract_mentions(sentence);
        if mentions.is_empty() {
            continue;
        }
        let given = given_pairs(&mentions);

        let prompt = build_entity_prompt(sentence)?;
        if let Some(response) = misses.check(source.complete(&prompt, &plan.config))? {
            let report = parse_replacement_output(&response.content);
            let mut accepted = 0usize;
            for gen in report
                .generations
                .iter()
                .take(MAX_ENTITY_GENERATIONS_PER_PROMPT)
            {
                if accepted >= cap {
                    break;
                }
                let verdict = filter_replacement(gen, &mentions);
                let expected = transform_expected(&given, &gen.replacements);
                let id = format!("{}.ent.{}", sentence.id, gen.block_index);
                let record =
                    build_record(&sentence.id, &id, RecordKind::Entity, gen, verdict, expected);
                if record.verdict.accepted {
                    accepted += 1;
                }
                records.push(record);
            }
        }

        if with_noise {
            records.extend(noise_records(sentence, &mentions, &given, plan, source, &mut misses)?);
        }
    }
    misses.finish(records)
}

/// Noise pass for one sentence. Expected entities stay the originals: a
/// noise output that misspells an entity fails alignment and is rejected.
fn noise_records(
    sentence: &Sentence,
    mentions: &[EntityMention],
    given: &[(String, String)],
    plan: &AugmentPlan,
    source: &dyn CompletionSource,
    misses: &mut MissLog,
) -> Result<Vec<AugmentedRecord>, PipelineError> {
    let mut records = Vec::new();
    let prompt = build_noise_prompt(sentence)?;
    let Some(response) = misses.check(source.complete(&prompt, &plan.config))? else {
        return Ok(records);
    };
    let report = parse_replacement_output(&response.content);
    let mut accepted = 0usize;
    for gen in &report.generations {
        if accepted >= plan.noise_cap() {
            break;
        }
        let verdict = filter_replacement(gen, mentions);
        let id = format!("{}.noi.{}", sentence.id, gen.block_index);
        let record = build_record(
            &sentence.id,
            &id,
            RecordKind::Noise,
            gen,
            verdict,
            given.to_vec(),
        );
        if record.verdict.accepted {
            accepted += 1;
        }
        records.push(record);
    }
    Ok(records)
}

/// Both-level run: context rewrites first (generated here), then one
/// replacement pass per accepted rewrite at the stage-2 temperature.
pub fn run_both_level(
    set: &SampledSet,
    plan: &AugmentPlan,
    source: &dyn CompletionSource,
) -> Result<Vec<AugmentedRecord>, PipelineError> {
    let stage1 = run_context_level(set, plan, source)?;
    run_both_level_from(plan, source, &stage1)
}

/// Both-level stage 2 against already-computed context records.
pub fn run_both_level_from(
    plan: &AugmentPlan,
    source: &dyn CompletionSource,
    stage1: &[AugmentedRecord],
) -> Result<Vec<AugmentedRecord>, PipelineError> {
    let cap = plan.cap(Level::Both);
    let config = plan.stage2_config();
    let mut records = Vec::new();
    let mut misses = MissLog::new();
    // accepted stage-2 count per original sampled sentence
    let mut accepted_per_root: BTreeMap<&str, usize> = BTreeMap::new();
    let roots: BTreeMap<&str, &str> = stage1
        .iter()
        .filter_map(|r| r.sentence.as_ref().map(|s| (s.id.as_str(), r.parent_id.as_str())))
        .collect();

    for record in stage1 {
        let Some(stage1_sentence) = &record.sentence else {
            continue; // rejected rewrites get no stage 2
        };
        let root = roots
            .get(stage1_sentence.id.as_str())
            .copied()
            .unwrap_or(record.parent_id.as_str());
        if accepted_per_root.get(root).copied().unwrap_or(0) >= cap {
            continue;
        }
        let mentions = extract_mentions(stage1_sentence);
        if mentions.is_empty() {
            continue;
        }
        let prompt = build_both_prompt(stage1_sentence)?;

        let mut last_content: Option<String> = None;
        for attempt in 0..=plan.both_stage2_retries {
            if accepted_per_root.get(root).copied().unwrap_or(0) >= cap {
                break;
            }
            let Some(response) = misses.check(source.complete(&prompt, &config))? else {
                break;
            };
            // a deterministic source repeats itself; stop instead of
            // emitting duplicate records
            if last_content.as_deref() == Some(response.content.as_str()) {
                break;
            }
            last_content = Some(response.content.clone());

            let report = parse_replacement_output(&response.content);
            let mut any_accepted = false;
            if let Some(gen) = report.generations.first() {
                let verdict = filter_replacement(gen, &mentions);
                let expected = transform_expected(&record.entity_map, &gen.replacements);
                let id = format!("{}.bot.{}.{}", stage1_sentence.id, attempt, gen.block_index);
                let rec = build_record(
                    &stage1_sentence.id,
                    &id,
                    RecordKind::Both,
                    gen,
                    verdict,
                    expected,
                );
                if rec.verdict.accepted {
                    *accepted_per_root.entry(root).or_insert(0) += 1;
                    any_accepted = true;
                }
                records.push(rec);
            }
            if any_accepted {
                break;
            }
        }
    }
    misses.finish(records)
}

/// Full run: context, entity (with noise), and both levels, with accepted
/// duplicates (same token and label sequence) kept once.
pub fn run_all(
    set: &SampledSet,
    plan: &AugmentPlan,
    source: &dyn CompletionSource,
) -> Result<Vec<AugmentedRecord>, PipelineError> {
    let context = run_context_level(set, plan, source)?;
    let entity = run_entity_level(set, plan, source)?;
    let both = run_both_level_from(plan, source, &context)?;

    let mut combined = context;
    combined.extend(entity);
    combined.extend(both);
    let combined = sort_records(combined);

    let mut seen: BTreeSet<(Vec<String>, Vec<String>)> = BTreeSet::new();
    let mut out = Vec::with_capacity(combined.len());
    for record in combined {
        if let Some(s) = &record.sentence {
            let key = (s.token_texts(), s.labels());
            if !seen.insert(key) {
                continue; // identical text from another level counts once
            }
        }
        out.push(record);
    }
    Ok(out)
}

/// Dispatches on the plan's levels; `All` wins over individual levels.
pub fn run_plan(
    set: &SampledSet,
    plan: &AugmentPlan,
    source: &dyn CompletionSource,
) -> Result<Vec<AugmentedRecord>, PipelineError> {
    if plan.levels.contains(&Level::All) {
        return run_all(set, plan, source);
    }
    let mut records = Vec::new();
    if plan.levels.contains(&Level::Context) {
        records.extend(run_context_level(set, plan, source)?);
    }
    if plan.levels.contains(&Level::Entity) || plan.levels.contains(&Level::Noise) {
        records.extend(run_entity_level(set, plan, source)?);
    }
    if plan.levels.contains(&Level::Both) {
        records.extend(run_both_level(set, plan, source)?);
    }
    Ok(sort_records(records))
}

/// Accepted records merged with the originals, ready for CoNLL export.
/// Sentences identical to an original (token and label sequence) are
/// dropped so the training set carries no duplicates.
pub fn merge_for_export(set: &SampledSet, records: &[AugmentedRecord]) -> Dataset {
    let mut sentences: Vec<Sentence> = set.sentences.clone();
    let mut seen: BTreeSet<(Vec<String>, Vec<String>)> = sentences
        .iter()
        .map(|s| (s.token_texts(), s.labels()))
        .collect();
    for record in records {
        if let Some(s) = &record.sentence {
            if seen.insert((s.token_texts(), s.labels())) {
                sentences.push(s.clone());
            }
        }
    }
    Dataset::from_sentences(sentences)
}
