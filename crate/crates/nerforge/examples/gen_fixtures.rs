//! Regenerates tests/fixtures/cassette.jsonl.
//!
//! A deterministic scripted responder stands in for the chat endpoint; the
//! real pipeline runs against it and every exchange is recorded into the
//! cassette. Rerun after any prompt-template change:
//!
//!     cargo run -p nerforge --example gen_fixtures
//!
//! The response mix per prompt is fixed so integration tests can count on
//! it: context prompts yield 3 valid + 1 foreign-entity + 1 missing-entity
//! blocks, entity prompts 4 valid + 2 invalid, noise prompts 2 valid
//! blocks, both prompts a single valid swap.

use std::path::PathBuf;
use std::sync::Mutex;

use nerforge::cli::{llm_ner_eval, DEFAULT_NER_FORMAT_HINT};
use nerforge::corpus::parse_conll;
use nerforge::gateway::{
    Cassette, CompletionSource, GatewayError, GenerationConfig, RawResponse,
};
use nerforge::pipeline::{preset, run_all, AugmentPlan};
use nerforge::prompts::{PromptKind, PromptSpec};
use nerforge::sampler::SampledSet;

/// Every entity surface in the fixture corpus, used to stage
/// foreign-entity rejections.
const INVENTORY: [&str; 3] = ["EU", "Bonn", "Mira Holt"];

struct Script;

impl Script {
    fn slots(text: &str) -> (String, Vec<String>) {
        let parts: Vec<&str> = text.split("\"\"\"").collect();
        let sentence = parts.get(1).unwrap_or(&"").trim().to_string();
        let entities = parts
            .get(3)
            .unwrap_or(&"")
            .trim()
            .split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect();
        (sentence, entities)
    }

    fn foreign_for(entities: &[String]) -> &'static str {
        INVENTORY
            .iter()
            .find(|s| !entities.iter().any(|e| e == *s))
            .copied()
            .unwrap_or("EU")
    }

    fn respond(prompt: &PromptSpec) -> String {
        let (sentence, entities) = Script::slots(&prompt.text);
        let joined = entities.join(", ");
        match prompt.kind {
            PromptKind::Context(strategy) => {
                let mut out = String::new();
                for i in 0..3 {
                    out.push_str(&format!(
                        "Kept Entities: {joined}\nNew sentence: {joined} headline {} {i} today .\n\n",
                        strategy.id()
                    ));
                }
                out.push_str(&format!(
                    "Kept Entities: {joined}\nNew sentence: {joined} praised {} {} .\n\n",
                    Script::foreign_for(&entities),
                    strategy.id()
                ));
                out.push_str(&format!(
                    "Kept Entities: {joined}\nNew sentence: nothing kept for {} .\n",
                    strategy.id()
                ));
                out
            }
            PromptKind::Entity => {
                let names = ["Nuvora", "Kestrel", "Marovia", "Quill"];
                let mut out = String::new();
                for (i, name) in names.iter().enumerate() {
                    let mapping = entities
                        .iter()
                        .map(|e| format!("{e} -> {name}_{}", e.replace(' ', "_")))
                        .collect::<Vec<_>>()
                        .join(", ");
                    let news = entities
                        .iter()
                        .map(|e| format!("{name}_{}", e.replace(' ', "_")))
                        .collect::<Vec<_>>()
                        .join(" and ");
                    out.push_str(&format!(
                        "Replaced Entities: {mapping}\nNew sentence: {news} spoke round {i} .\n\n"
                    ));
                }
                out.push_str(
                    "Replaced Entities: Atlantis -> Avalon\nNew sentence: Avalon spoke instead .\n\n",
                );
                let ghost = entities
                    .iter()
                    .map(|e| format!("{e} -> Ghost_{}", e.replace(' ', "_")))
                    .collect::<Vec<_>>()
                    .join(", ");
                out.push_str(&format!(
                    "Replaced Entities: {ghost}\nNew sentence: the stage stayed empty .\n"
                ));
                out
            }
            PromptKind::Noise => format!(
                "Replaced Entities: \nNew sentence: {sentence} indeeed .\n\n\
                 Replaced Entities: \nNew sentence: {sentence} agaiin .\n"
            ),
            PromptKind::Both => {
                let mapping = entities
                    .iter()
                    .map(|e| format!("{e} -> Vexo_{}", e.replace(' ', "_")))
                    .collect::<Vec<_>>()
                    .join(", ");
                let mut swapped = sentence.clone();
                for e in &entities {
                    swapped = swapped.replace(e.as_str(), &format!("Vexo_{}", e.replace(' ', "_")));
                }
                format!("Replaced Entities: {mapping}\nNew sentence: {swapped}\n")
            }
            PromptKind::DirectNerZeroShot | PromptKind::DirectNerFewShot(_) => {
                let target = prompt
                    .text
                    .lines()
                    .rev()
                    .find_map(|l| l.strip_prefix("Text: "))
                    .unwrap_or("")
                    .trim();
                let answer = match target {
                    "Mira Holt visited Oslo ." => "Mira Holt: PER; Oslo: LOC",
                    "Torin spoke in Visby ." => "Torin: PER",
                    "Galen sailed past Kiel ." => "Galen: LOC; Kiel: LOC",
                    _ => "none",
                };
                format!(" {answer}")
            }
        }
    }
}

/// Answers from the script while appending every exchange to the cassette.
struct Recorder {
    cassette: Mutex<Cassette>,
}

impl CompletionSource for Recorder {
    fn complete(
        &self,
        prompt: &PromptSpec,
        config: &GenerationConfig,
    ) -> Result<RawResponse, GatewayError> {
        let content = Script::respond(prompt);
        let fingerprint = self
            .cassette
            .lock()
            .unwrap()
            .record(&prompt.text, config, &content)?;
        Ok(RawResponse {
            content,
            model: config.model.clone(),
            request_fingerprint: fingerprint,
            usage: None,
        })
    }
}

fn main() {
    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let cassette_path = fixtures.join("cassette.jsonl");
    if cassette_path.exists() {
        std::fs::remove_file(&cassette_path).expect("remove old cassette");
    }
    let recorder = Recorder {
        cassette: Mutex::new(Cassette::at_path(&cassette_path).expect("open cassette")),
    };

    let sampled_text =
        std::fs::read_to_string(fixtures.join("sampled.conll")).expect("read sampled corpus");
    let dataset = parse_conll(&sampled_text).expect("parse sampled corpus");
    let set = SampledSet::from_dataset(&dataset, 1, 0);
    let plan = AugmentPlan::default().with_preset(preset("conll03").unwrap());
    let records = run_all(&set, &plan, &recorder).expect("pipeline run");
    let accepted = records.iter().filter(|r| r.verdict.accepted).count();
    println!(
        "augment: {} records ({} accepted) recorded",
        records.len(),
        accepted
    );

    let gold_text = std::fs::read_to_string(fixtures.join("gold.conll")).expect("read gold");
    let gold = parse_conll(&gold_text).expect("parse gold");
    let config = GenerationConfig::default();
    for shots in [0usize, 1] {
        let outcome = llm_ner_eval(&gold, shots, DEFAULT_NER_FORMAT_HINT, &config, &recorder)
            .expect("direct ner run");
        println!(
            "direct ner ({shots} shots): f1 {:.4} over {} sentences",
            outcome.micro_f1.f1,
            outcome.predictions.len()
        );
    }

    let entries = recorder.cassette.lock().unwrap().len();
    println!("cassette: {entries} entries at {}", cassette_path.display());
}
