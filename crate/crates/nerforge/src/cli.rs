//! Command-line interface: one subcommand per pipeline stage.
//!
//! Exit codes: 0 success, 2 usage/input problems, 3 cassette miss,
//! 4 transport failure. Every run that writes an output file also writes a
//! `<output>.manifest.json` with input/output hashes, the effective
//! configuration, and the cassette hash, so replay runs are auditable.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::annotator::{AugmentedRecord, RecordRow};
use crate::baselines::{self, BaselineConfig, BaselineOp};
use crate::corpus::{parse_conll, serialize_conll, Dataset, Provenance, Sentence, Token};
use crate::gateway::{
    CompletionSource, Gateway, GatewayError, GatewayMode, GenerationConfig, API_KEY_ENV,
    BASE_URL_ENV, DEFAULT_BASE_URL,
};
use crate::manifest::RunManifest;
use crate::parser::parse_direct_ner_output;
use crate::pipeline::{
    self, merge_for_export, preset, AugmentPlan, Level, PipelineError, RatePreset,
};
use crate::prompts::{build_direct_ner_prompt, catalog_json, RewriteStrategy, MAX_NER_EXAMPLES};
use crate::quality::{self, HttpGrammarChecker};
use crate::sampler::{sample_k_shot, SampledSet};
use crate::tagger::{
    micro_f1, train_toy_tagger, GceParams, LossKind, MicroF1, ToyTagger, TrainConfig, TrainError,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_CASSETTE_MISS: i32 = 3;
pub const EXIT_TRANSPORT: i32 = 4;

/// Default `{format}` slot for zero-shot direct NER prompts.
pub const DEFAULT_NER_FORMAT_HINT: &str = "<entity>: <category>";

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn input(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<crate::corpus::CorpusError> for CliError {
    fn from(e: crate::corpus::CorpusError) -> Self {
        CliError::input(e.to_string())
    }
}

impl From<crate::prompts::PromptError> for CliError {
    fn from(e: crate::prompts::PromptError) -> Self {
        CliError::input(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        CliError::input(e.to_string())
    }
}

impl From<GatewayError> for CliError {
    fn from(e: GatewayError) -> Self {
        let code = match &e {
            GatewayError::CassetteMiss(_) => EXIT_CASSETTE_MISS,
            GatewayError::Transport { .. } | GatewayError::RateLimited { .. } => EXIT_TRANSPORT,
            _ => EXIT_INPUT,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Prompt(p) => p.into(),
            PipelineError::Gateway(g) => g.into(),
            PipelineError::CassetteMisses(fps) => CliError {
                code: EXIT_CASSETTE_MISS,
                message: format!(
                    "cassette is missing {} fingerprint(s):\n{}",
                    fps.len(),
                    fps.join("\n")
                ),
            },
        }
    }
}

fn read_input(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))
}

fn write_output(path: &Path, content: &str) -> Result<(), CliError> {
    std::fs::write(path, content)
        .map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))
}

/// Flat TOML config file; any present key supplies a default that flags
/// can override.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub cassette: Option<PathBuf>,
    pub mode: Option<String>,
    pub base_url: Option<String>,
    pub model: Option<String>,
    pub preset: Option<String>,
    pub rpm: Option<usize>,
    pub concurrency: Option<usize>,
    pub grammar_url: Option<String>,
}

impl FileConfig {
    fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = read_input(path)?;
        toml::from_str(&text).map_err(|e| CliError::input(format!("config file: {e}")))
    }
}

#[derive(Parser, Debug)]
#[command(name = "nerforge", version, about = "Few-shot NER sampling, augmentation, and evaluation")]
pub struct Cli {
    /// TOML config file supplying defaults; flags win
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Greedy k-shot sampling from a CoNLL corpus
    Sample(SampleArgs),
    /// Augment a sampled corpus (LLM levels or the classic baselines)
    Augment(AugmentArgs),
    /// Linguistic quality metrics and entity distribution
    Analyze(AnalyzeArgs),
    /// Train the linear token tagger
    Train(TrainArgs),
    /// Score predictions against gold with span-level micro-F1
    Eval(EvalArgs),
    /// Run NER directly through the model and score it against gold
    LlmNer(LlmNerArgs),
    /// Dump the prompt template catalog as JSON
    Prompts(PromptsArgs),
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    /// CoNLL input corpus
    #[arg(long)]
    pub input: PathBuf,
    /// Mentions per label to aim for (cap is 1.25k)
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// CoNLL output of the sampled sentences
    #[arg(long)]
    pub out: PathBuf,
    /// Manifest path (default: <out>.manifest.json)
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct ModeArgs {
    /// Serve responses from the cassette; never touch the network (default)
    #[arg(long, conflicts_with_all = ["record", "live"])]
    pub replay: bool,
    /// Call the endpoint and append every exchange to the cassette
    #[arg(long, conflicts_with = "live")]
    pub record: bool,
    /// Call the endpoint without recording
    #[arg(long)]
    pub live: bool,
}

impl ModeArgs {
    fn resolve(&self, cfg: &FileConfig) -> GatewayMode {
        if self.live {
            GatewayMode::Live
        } else if self.record {
            GatewayMode::Record
        } else if self.replay {
            GatewayMode::Replay
        } else {
            match cfg.mode.as_deref() {
                Some("live") => GatewayMode::Live,
                Some("record") => GatewayMode::Record,
                _ => GatewayMode::Replay,
            }
        }
    }
}

#[derive(Args, Debug)]
pub struct AugmentArgs {
    /// CoNLL input (typically the output of `sample`)
    #[arg(long)]
    pub input: PathBuf,
    /// context | entity | both | all | baseline
    #[arg(long)]
    pub level: String,
    /// Rate preset: conll03 | ontonotes5 | mit-movie | few-nerd
    #[arg(long)]
    pub preset: Option<String>,
    /// Override one rate, e.g. --rate context=3 (repeatable)
    #[arg(long = "rate", value_name = "LEVEL=N")]
    pub rates: Vec<String>,
    /// Restrict context strategies to a comma-separated id list
    #[arg(long)]
    pub strategies: Option<String>,
    #[arg(long)]
    pub cassette: Option<PathBuf>,
    #[command(flatten)]
    pub mode: ModeArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Chat model name
    #[arg(long)]
    pub model: Option<String>,
    /// Endpoint base URL (or set OPENAI_BASE_URL)
    #[arg(long)]
    pub base_url: Option<String>,
    /// Records output (JSONL)
    #[arg(long)]
    pub out: PathBuf,
    /// Merged originals + accepted records as CoNLL
    #[arg(long)]
    pub export_conll: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Baseline op: label-wise | synonym | mention | shuffle
    #[arg(long)]
    pub op: Option<String>,
    /// Baseline replacement probability
    #[arg(long, default_value_t = 0.3)]
    pub p: f64,
    /// Synonym lexicon file (word<TAB>synonym...)
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Baseline rounds: transformed copies per sentence
    #[arg(long, default_value_t = 1)]
    pub rounds: usize,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    /// CoNLL corpus or records JSONL
    #[arg(long)]
    pub input: PathBuf,
    /// conll | jsonl (default: by file extension)
    #[arg(long)]
    pub format: Option<String>,
    /// Grammar checker endpoint (LanguageTool-style)
    #[arg(long)]
    pub grammar_url: Option<String>,
    /// Report output (JSON)
    #[arg(long)]
    pub out: PathBuf,
    /// Entity histogram CSV (default: <out>.entity_hist.csv)
    #[arg(long)]
    pub histogram: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub dev: PathBuf,
    /// gce | ce
    #[arg(long, default_value = "gce")]
    pub loss: String,
    #[arg(long, default_value_t = 0.5)]
    pub q: f64,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    #[arg(long, default_value_t = 5)]
    pub patience: usize,
    #[arg(long, default_value_t = 65536)]
    pub feature_dim: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Checkpoint output (JSON)
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub gold: PathBuf,
    /// Predictions as CoNLL (mutually exclusive with --model)
    #[arg(long, conflicts_with = "model")]
    pub pred: Option<PathBuf>,
    /// Checkpoint to tag the gold tokens with
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// MicroF1 output (JSON)
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct LlmNerArgs {
    /// Gold CoNLL corpus
    #[arg(long)]
    pub input: PathBuf,
    /// Demonstrations to prepend (0 = zero-shot)
    #[arg(long, default_value_t = 0, value_parser = clap::value_parser!(u8).range(0..=MAX_NER_EXAMPLES as i64))]
    pub shots: u8,
    /// Zero-shot format hint
    #[arg(long, default_value = DEFAULT_NER_FORMAT_HINT)]
    pub format_hint: String,
    #[arg(long)]
    pub cassette: Option<PathBuf>,
    #[command(flatten)]
    pub mode: ModeArgs,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub base_url: Option<String>,
    /// Score + predictions output (JSON)
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PromptsArgs {
    /// Catalog output (JSON); stdout when omitted
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Entry point; returns the process exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    let file_config = match FileConfig::load(cli.config.as_deref()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return e.code;
        }
    };
    let result = match cli.command {
        Command::Sample(args) => cmd_sample(&args, &file_config),
        Command::Augment(args) => cmd_augment(&args, &file_config),
        Command::Analyze(args) => cmd_analyze(&args, &file_config),
        Command::Train(args) => cmd_train(&args, &file_config),
        Command::Eval(args) => cmd_eval(&args, &file_config),
        Command::LlmNer(args) => cmd_llm_ner(&args, &file_config),
        Command::Prompts(args) => cmd_prompts(&args),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}

fn manifest_path(out: &Path, explicit: Option<&Path>) -> PathBuf {
    explicit.map(Path::to_path_buf).unwrap_or_else(|| {
        let mut p = out.as_os_str().to_owned();
        p.push(".manifest.json");
        PathBuf::from(p)
    })
}

fn cmd_sample(args: &SampleArgs, cfg: &FileConfig) -> Result<(), CliError> {
    let seed = args.seed.or(cfg.seed).unwrap_or(0);
    if args.k == 0 {
        return Err(CliError::input("--k must be at least 1"));
    }
    let dataset = parse_conll(&read_input(&args.input)?)?;
    let set = sample_k_shot(&dataset, args.k, seed);
    let out_text = serialize_conll(&Dataset::from_sentences(set.sentences.clone()))?;
    write_output(&args.out, &out_text)?;

    let under = set.underfilled_labels();
    if !under.is_empty() {
        eprintln!(
            "warning: labels below k={}: {}",
            args.k,
            under.join(", ")
        );
    }
    eprintln!(
        "sampled {} sentences; counts: {:?}",
        set.sentences.len(),
        set.counts
    );

    let mut manifest = RunManifest::new(
        serde_json::json!({"k": args.k, "counts": set.counts}),
        seed,
    );
    manifest.record_input(&args.input).map_err(|e| CliError::input(e.to_string()))?;
    manifest.record_output(&args.out).map_err(|e| CliError::input(e.to_string()))?;
    manifest
        .write(manifest_path(&args.out, args.manifest.as_deref()))
        .map_err(|e| CliError::input(e.to_string()))?;
    Ok(())
}

fn build_gateway(
    mode: GatewayMode,
    cassette: Option<&Path>,
    base_url: &str,
    cfg: &FileConfig,
) -> Result<Gateway, CliError> {
    let api_key = std::env::var(API_KEY_ENV).ok();
    let mut gateway = match mode {
        GatewayMode::Replay => {
            let path = cassette
                .ok_or_else(|| CliError::input("replay mode needs --cassette"))?;
            if !path.exists() {
                return Err(CliError::input(format!(
                    "cassette {} does not exist",
                    path.display()
                )));
            }
            Gateway::replay(path)?
        }
        GatewayMode::Record => {
            let path = cassette
                .ok_or_else(|| CliError::input("record mode needs --cassette"))?;
            Gateway::record(path, base_url, api_key)?
        }
        GatewayMode::Live => Gateway::live(base_url, api_key),
    };
    if let Some(rpm) = cfg.rpm {
        gateway = gateway.with_rpm(rpm);
    }
    if let Some(n) = cfg.concurrency {
        gateway = gateway.with_concurrency(n);
    }
    Ok(gateway)
}

fn resolve_base_url(flag: Option<&str>, cfg: &FileConfig) -> String {
    flag.map(str::to_string)
        .or_else(|| std::env::var(BASE_URL_ENV).ok())
        .or_else(|| cfg.base_url.clone())
        .unwrap_or_else(|| DEFAULT_BASE_URL.to_string())
}

fn parse_rate(spec: &str) -> Result<(Level, u32), CliError> {
    let (level, value) = spec
        .split_once('=')
        .ok_or_else(|| CliError::input(format!("--rate wants LEVEL=N, got {spec:?}")))?;
    let level = Level::parse(level)
        .ok_or_else(|| CliError::input(format!("unknown rate level {level:?}")))?;
    let value: u32 = value
        .parse()
        .map_err(|_| CliError::input(format!("rate value {value:?} is not a number")))?;
    Ok((level, value))
}

fn verdict_summary(records: &[AugmentedRecord]) -> String {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for r in records {
        *counts.entry(r.verdict.reason.as_str()).or_insert(0) += 1;
    }
    let mut out = String::from("verdict                  count\n");
    for (reason, n) in counts {
        out.push_str(&format!("{reason:<24} {n}\n"));
    }
    out
}

fn cmd_augment(args: &AugmentArgs, cfg: &FileConfig) -> Result<(), CliError> {
    if args.level == "baseline" {
        return cmd_augment_baseline(args, cfg);
    }
    let level = Level::parse(&args.level)
        .ok_or_else(|| CliError::input(format!("unknown level {:?}", args.level)))?;
    let seed = args.seed.or(cfg.seed).unwrap_or(0);

    let dataset = parse_conll(&read_input(&args.input)?)?;
    let set = SampledSet::from_dataset(&dataset, 1, seed);

    let preset_name = args.preset.clone().or_else(|| cfg.preset.clone());
    let rate_preset: Option<RatePreset> = match preset_name.as_deref() {
        Some(name) => Some(
            preset(name)
                .ok_or_else(|| CliError::input(format!("unknown preset {name:?}")))?,
        ),
        None => Some(preset("conll03").expect("default preset exists")),
    };

    let mut plan = AugmentPlan::default();
    if let Some(p) = rate_preset {
        plan = plan.with_preset(p);
    }
    for spec in &args.rates {
        let (level, value) = parse_rate(spec)?;
        plan.target_rate.insert(level, value);
    }
    plan.levels = match level {
        Level::Context => [Level::Context].into(),
        Level::Entity | Level::Noise => [Level::Entity, Level::Noise].into(),
        Level::Both => [Level::Both].into(),
        Level::All => [Level::All, Level::Context, Level::Entity, Level::Both, Level::Noise].into(),
    };
    if let Some(list) = &args.strategies {
        let mut strategies = Vec::new();
        for id in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            strategies.push(
                RewriteStrategy::from_id(id)
                    .ok_or_else(|| CliError::input(format!("unknown strategy {id:?}")))?,
            );
        }
        if strategies.is_empty() {
            return Err(CliError::input("--strategies resolved to an empty list"));
        }
        plan.strategies = strategies;
    }
    plan.seed = seed;
    if let Some(model) = args.model.clone().or_else(|| cfg.model.clone()) {
        plan.config.model = model;
    }

    let mode = args.mode.resolve(cfg);
    let base_url = resolve_base_url(args.base_url.as_deref(), cfg);
    let cassette_path = args.cassette.clone().or_else(|| cfg.cassette.clone());
    let gateway = build_gateway(mode, cassette_path.as_deref(), &base_url, cfg)?;

    let records = pipeline::run_plan(&set, &plan, &gateway)?;
    write_output(&args.out, &crate::annotator::records_to_jsonl(&records))?;
    if let Some(export) = &args.export_conll {
        let merged = merge_for_export(&set, &records);
        write_output(export, &serialize_conll(&merged)?)?;
    }
    eprint!("{}", verdict_summary(&records));

    let rates_json: BTreeMap<String, u32> = plan
        .target_rate
        .iter()
        .map(|(l, v)| (format!("{l:?}").to_lowercase(), *v))
        .collect();
    let config_json = serde_json::json!({
        "level": args.level,
        "preset": preset_name.unwrap_or_else(|| "conll03".to_string()),
        "rates": rates_json,
        "mode": format!("{mode:?}").to_lowercase(),
        "model": plan.config.model,
        "strategies": plan.strategies.iter().map(|s| s.id()).collect::<Vec<_>>(),
        "max_noise_per_original": plan.max_noise_per_original,
        "both_stage2_temperature": plan.both_stage2_temperature,
        "both_stage2_retries": plan.both_stage2_retries,
    });
    let mut manifest = RunManifest::new(config_json, seed);
    manifest.record_input(&args.input).map_err(|e| CliError::input(e.to_string()))?;
    if let Some(c) = &cassette_path {
        if c.exists() {
            manifest.record_cassette(c).map_err(|e| CliError::input(e.to_string()))?;
        }
    }
    manifest.record_output(&args.out).map_err(|e| CliError::input(e.to_string()))?;
    if let Some(export) = &args.export_conll {
        manifest.record_output(export).map_err(|e| CliError::input(e.to_string()))?;
    }
    manifest
        .write(manifest_path(&args.out, args.manifest.as_deref()))
        .map_err(|e| CliError::input(e.to_string()))?;
    Ok(())
}

fn cmd_augment_baseline(args: &AugmentArgs, cfg: &FileConfig) -> Result<(), CliError> {
    let seed = args.seed.or(cfg.seed).unwrap_or(0);
    let op_name = args
        .op
        .as_deref()
        .ok_or_else(|| CliError::input("--level baseline needs --op"))?;
    let op = BaselineOp::parse(op_name)
        .ok_or_else(|| CliError::input(format!("unknown baseline op {op_name:?}")))?;
    if !(0.0..=1.0).contains(&args.p) {
        return Err(CliError::input("--p must lie in [0, 1]"));
    }
    let mut config = BaselineConfig::new(op, args.p, seed);
    if let Some(lex_path) = &args.lexicon {
        config.lexicon = baselines::parse_lexicon(&read_input(lex_path)?);
    }
    if op == BaselineOp::SynonymReplacement && config.lexicon.is_empty() {
        return Err(CliError::input(
            "synonym replacement needs a non-empty --lexicon",
        ));
    }

    let dataset = parse_conll(&read_input(&args.input)?)?;
    let mut rows = Vec::new();
    let mut augmented = Vec::new();
    for round in 0..args.rounds {
        for (i, sentence) in dataset.sentences.iter().enumerate() {
            let mut cfg_i = config.clone();
            cfg_i.seed = seed
                .wrapping_add((round as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
                .wrapping_add(i as u64);
            let mut out = baselines::apply(sentence, &dataset, &cfg_i);
            out.id = format!("{}.bl.{}.{}", sentence.id, op.id(), round);
            rows.push(RecordRow {
                id: Some(out.id.clone()),
                parent_id: sentence.id.clone(),
                kind: "baseline".to_string(),
                strategy: Some(op.id().to_string()),
                raw_text: out.text(),
                verdict: "Ok".to_string(),
                tokens: Some(out.token_texts()),
                labels: Some(out.labels()),
                entity_map: Vec::new(),
            });
            augmented.push(out);
        }
    }
    let mut jsonl = String::new();
    for row in &rows {
        jsonl.push_str(&serde_json::to_string(row).expect("row serializes"));
        jsonl.push('\n');
    }
    write_output(&args.out, &jsonl)?;
    if let Some(export) = &args.export_conll {
        let mut sentences = dataset.sentences.clone();
        sentences.extend(augmented);
        write_output(export, &serialize_conll(&Dataset::from_sentences(sentences))?)?;
    }

    let config_json = serde_json::json!({
        "level": "baseline",
        "op": op.id(),
        "p": args.p,
        "rounds": args.rounds,
        "lexicon": args.lexicon.as_ref().map(|p| p.display().to_string()),
    });
    let mut manifest = RunManifest::new(config_json, seed);
    manifest.record_input(&args.input).map_err(|e| CliError::input(e.to_string()))?;
    manifest.record_output(&args.out).map_err(|e| CliError::input(e.to_string()))?;
    if let Some(export) = &args.export_conll {
        manifest.record_output(export).map_err(|e| CliError::input(e.to_string()))?;
    }
    manifest
        .write(manifest_path(&args.out, args.manifest.as_deref()))
        .map_err(|e| CliError::input(e.to_string()))?;
    Ok(())
}

/// Reads sentences from CoNLL text or from accepted records in a JSONL file.
fn read_corpus(path: &Path, format: Option<&str>) -> Result<Vec<Sentence>, CliError> {
    let is_jsonl = match format {
        Some("jsonl") => true,
        Some("conll") => false,
        Some(other) => return Err(CliError::input(format!("unknown format {other:?}"))),
        None => path.extension().map(|e| e == "jsonl").unwrap_or(false),
    };
    let text = read_input(path)?;
    if !is_jsonl {
        return Ok(parse_conll(&text)?.sentences);
    }
    let mut sentences = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: RecordRow = serde_json::from_str(line)
            .map_err(|e| CliError::input(format!("{}:{}: {e}", path.display(), i + 1)))?;
        if let (Some(tokens), Some(labels)) = (row.tokens, row.labels) {
            if tokens.len() != labels.len() {
                return Err(CliError::input(format!(
                    "{}:{}: tokens/labels length mismatch",
                    path.display(),
                    i + 1
                )));
            }
            sentences.push(Sentence {
                id: row.id.unwrap_or_else(|| format!("r{i:05}")),
                tokens: tokens
                    .into_iter()
                    .zip(labels)
                    .map(|(t, l)| Token::new(t, l))
                    .collect(),
                provenance: Provenance::Original,
            });
        }
    }
    if sentences.is_empty() {
        return Err(CliError::input("no labeled sentences in input"));
    }
    Ok(sentences)
}

fn cmd_analyze(args: &AnalyzeArgs, cfg: &FileConfig) -> Result<(), CliError> {
    let corpus = read_corpus(&args.input, args.format.as_deref())?;
    let grammar_url = args.grammar_url.clone().or_else(|| cfg.grammar_url.clone());
    let checker = grammar_url.clone().map(HttpGrammarChecker::new);
    let report = quality::analyze(
        &corpus,
        checker.as_ref().map(|c| c as &dyn quality::GrammarCheck),
    )
    .map_err(|e| CliError::input(e.to_string()))?;
    let histogram = quality::entity_distribution(&corpus);

    write_output(
        &args.out,
        &(serde_json::to_string_pretty(&serde_json::json!({
            "report": report,
            "entity_distribution": histogram,
        }))
        .expect("report serializes")
            + "\n"),
    )?;
    let hist_path = args.histogram.clone().unwrap_or_else(|| {
        let mut p = args.out.as_os_str().to_owned();
        p.push(".entity_hist.csv");
        PathBuf::from(p)
    });
    write_output(&hist_path, &histogram.to_csv())?;
    println!("{}", report.to_table());

    let mut manifest = RunManifest::new(
        serde_json::json!({"grammar_url": grammar_url, "sentences": corpus.len()}),
        cfg.seed.unwrap_or(0),
    );
    manifest.record_input(&args.input).map_err(|e| CliError::input(e.to_string()))?;
    manifest.record_output(&args.out).map_err(|e| CliError::input(e.to_string()))?;
    manifest.record_output(&hist_path).map_err(|e| CliError::input(e.to_string()))?;
    manifest
        .write(manifest_path(&args.out, args.manifest.as_deref()))
        .map_err(|e| CliError::input(e.to_string()))?;
    Ok(())
}

fn cmd_train(args: &TrainArgs, cfg: &FileConfig) -> Result<(), CliError> {
    let seed = args.seed.or(cfg.seed).unwrap_or(0);
    let loss = match args.loss.as_str() {
        "gce" => LossKind::Gce(GceParams::new(args.q)?),
        "ce" => LossKind::Ce,
        other => return Err(CliError::input(format!("unknown loss {other:?}"))),
    };
    if !args.feature_dim.is_power_of_two() {
        return Err(CliError::input("--feature-dim must be a power of two"));
    }
    let train = parse_conll(&read_input(&args.train)?)?.sentences;
    let dev = parse_conll(&read_input(&args.dev)?)?.sentences;
    let config = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch_size,
        learning_rate: args.lr,
        patience: args.patience,
        loss,
        seed,
        feature_dim: args.feature_dim,
    };
    let outcome = train_toy_tagger(&train, &dev, &config)?;
    for (epoch, f1) in outcome.history.iter().enumerate() {
        eprintln!("epoch {epoch}: dev micro-F1 {f1:.4}");
    }
    eprintln!(
        "best dev micro-F1 {:.4} at epoch {} ({} epochs run)",
        outcome.best_f1, outcome.best_epoch, outcome.epochs_run
    );
    outcome.tagger.save(&args.out)?;

    let config_json = serde_json::json!({
        "loss": args.loss,
        "q": args.q,
        "epochs": args.epochs,
        "batch_size": args.batch_size,
        "learning_rate": args.lr,
        "patience": args.patience,
        "feature_dim": args.feature_dim,
        "best_epoch": outcome.best_epoch,
        "best_dev_f1": outcome.best_f1,
        "epochs_run": outcome.epochs_run,
    });
    let mut manifest = RunManifest::new(config_json, seed);
    manifest.record_input(&args.train).map_err(|e| CliError::input(e.to_string()))?;
    manifest.record_input(&args.dev).map_err(|e| CliError::input(e.to_string()))?;
    manifest.record_output(&args.out).map_err(|e| CliError::input(e.to_string()))?;
    manifest
        .write(manifest_path(&args.out, args.manifest.as_deref()))
        .map_err(|e| CliError::input(e.to_string()))?;
    Ok(())
}

fn cmd_eval(args: &EvalArgs, cfg: &FileConfig) -> Result<(), CliError> {
    let gold = parse_conll(&read_input(&args.gold)?)?.sentences;
    let (pred, source): (Vec<Sentence>, String) = match (&args.pred, &args.model) {
        (Some(pred_path), None) => (
            parse_conll(&read_input(pred_path)?)?.sentences,
            pred_path.display().to_string(),
        ),
        (None, Some(model_path)) => {
            let tagger = ToyTagger::load(model_path)?;
            (tagger.tag(&gold), model_path.display().to_string())
        }
        _ => return Err(CliError::input("eval needs exactly one of --pred or --model")),
    };
    let score = micro_f1(&gold, &pred)?;
    write_output(
        &args.out,
        &(serde_json::to_string_pretty(&score).expect("score serializes") + "\n"),
    )?;
    println!(
        "precision {:.4}  recall {:.4}  f1 {:.4}  (tp {} fp {} fn {})",
        score.precision, score.recall, score.f1, score.tp, score.fp, score.fn_
    );

    let mut manifest = RunManifest::new(
        serde_json::json!({"pred_source": source}),
        cfg.seed.unwrap_or(0),
    );
    manifest.record_input(&args.gold).map_err(|e| CliError::input(e.to_string()))?;
    manifest.record_output(&args.out).map_err(|e| CliError::input(e.to_string()))?;
    manifest
        .write(manifest_path(&args.out, args.manifest.as_deref()))
        .map_err(|e| CliError::input(e.to_string()))?;
    Ok(())
}

/// Direct-NER evaluation: predictions per target sentence plus the score.
#[derive(Debug, Clone, serde::Serialize)]
pub struct DirectNerOutcome {
    pub shots: usize,
    pub micro_f1: MicroF1,
    pub predictions: Vec<DirectNerPrediction>,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct DirectNerPrediction {
    pub id: String,
    pub pairs: Vec<(String, String)>,
}

/// Runs direct NER over every sentence of `dataset` except the first
/// `shots` mention-bearing ones, which serve as demonstrations.
pub fn llm_ner_eval(
    dataset: &Dataset,
    shots: usize,
    format_hint: &str,
    config: &GenerationConfig,
    source: &dyn CompletionSource,
) -> Result<DirectNerOutcome, PipelineError> {
    let categories: Vec<String> = dataset.label_set.iter().cloned().collect();
    let mut demos: Vec<Sentence> = Vec::new();
    let mut targets: Vec<&Sentence> = Vec::new();
    for s in &dataset.sentences {
        if demos.len() < shots && !crate::corpus::extract_mentions(s).is_empty() {
            demos.push(s.clone());
        } else {
            targets.push(s);
        }
    }

    let mut misses = Vec::new();
    let mut gold = Vec::new();
    let mut pred = Vec::new();
    let mut predictions = Vec::new();
    for target in targets {
        let prompt = build_direct_ner_prompt(&categories, target, &demos, format_hint)?;
        let response = match source.complete(&prompt, config) {
            Ok(r) => r,
            Err(GatewayError::CassetteMiss(fp)) => {
                misses.push(fp);
                continue;
            }
            Err(e) => return Err(PipelineError::Gateway(e)),
        };
        let pairs = parse_direct_ner_output(&response.content, &categories);
        let texts = target.token_texts();
        let labels = crate::annotator::label_spans_lenient(&texts, &pairs);
        pred.push(Sentence {
            id: target.id.clone(),
            tokens: texts
                .into_iter()
                .zip(labels)
                .map(|(t, l)| Token::new(t, l))
                .collect(),
            provenance: Provenance::Original,
        });
        gold.push(target.clone());
        predictions.push(DirectNerPrediction {
            id: target.id.clone(),
            pairs,
        });
    }
    if !misses.is_empty() {
        return Err(PipelineError::CassetteMisses(misses));
    }
    let micro = micro_f1(&gold, &pred).expect("gold/pred built aligned");
    Ok(DirectNerOutcome {
        shots,
        micro_f1: micro,
        predictions,
    })
}

fn cmd_llm_ner(args: &LlmNerArgs, cfg: &FileConfig) -> Result<(), CliError> {
    let dataset = parse_conll(&read_input(&args.input)?)?;
    let mode = args.mode.resolve(cfg);
    let base_url = resolve_base_url(args.base_url.as_deref(), cfg);
    let cassette_path = args.cassette.clone().or_else(|| cfg.cassette.clone());
    let gateway = build_gateway(mode, cassette_path.as_deref(), &base_url, cfg)?;
    let mut config = GenerationConfig::default();
    if let Some(model) = args.model.clone().or_else(|| cfg.model.clone()) {
        config.model = model;
    }

    let outcome = llm_ner_eval(
        &dataset,
        args.shots as usize,
        &args.format_hint,
        &config,
        &gateway,
    )?;
    write_output(
        &args.out,
        &(serde_json::to_string_pretty(&outcome).expect("outcome serializes") + "\n"),
    )?;
    println!(
        "direct NER ({} shots): precision {:.4} recall {:.4} f1 {:.4}",
        outcome.shots, outcome.micro_f1.precision, outcome.micro_f1.recall, outcome.micro_f1.f1
    );

    let config_json = serde_json::json!({
        "shots": args.shots,
        "format_hint": args.format_hint,
        "model": config.model,
        "mode": format!("{mode:?}").to_lowercase(),
    });
    let mut manifest = RunManifest::new(config_json, cfg.seed.unwrap_or(0));
    manifest.record_input(&args.input).map_err(|e| CliError::input(e.to_string()))?;
    if let Some(c) = &cassette_path {
        if c.exists() {
            manifest.record_cassette(c).map_err(|e| CliError::input(e.to_string()))?;
        }
    }
    manifest.record_output(&args.out).map_err(|e| CliError::input(e.to_string()))?;
    manifest
        .write(manifest_path(&args.out, args.manifest.as_deref()))
        .map_err(|e| CliError::input(e.to_string()))?;
    Ok(())
}

fn cmd_prompts(args: &PromptsArgs) -> Result<(), CliError> {
    let json = catalog_json() + "\n";
    match &args.out {
        Some(path) => {
            write_output(path, &json)?;
            let mut manifest =
                RunManifest::new(serde_json::json!({"templates": catalog_json().len()}), 0);
            manifest.record_output(path).map_err(|e| CliError::input(e.to_string()))?;
            manifest
                .write(manifest_path(path, None))
                .map_err(|e| CliError::input(e.to_string()))?;
        }
        None => print!("{json}"),
    }
    Ok(())
}
