//! Few-shot NER data tooling: CoNLL corpus I/O, relaxed greedy k-shot
//! sampling, LLM-backed augmentation with rule-based filtering and
//! re-annotation, classic sentence-transformation baselines, linguistic
//! quality metrics, and a small linear token tagger with span-level
//! micro-F1 evaluation.
//!
//! LLM traffic goes through a record/replay cassette gateway so every
//! pipeline run is reproducible offline; see [`gateway`].

pub mod annotator;
pub mod baselines;
pub mod cli;
pub mod corpus;
pub mod gateway;
pub mod manifest;
pub mod parser;
pub mod pipeline;
pub mod prompts;
pub mod quality;
pub mod sampler;
pub mod tagger;
