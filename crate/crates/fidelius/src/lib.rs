//! Confidence calibration toolkit for multiple-choice question answering.
//!
//! Confidence is split into two parts: question-level *uncertainty* (the
//! normalized entropy of the sampled answer distribution) and answer-level
//! *fidelity* (how stubbornly the model sticks to an answer when that
//! answer's content is replaced by a sentinel and the model is re-queried).
//! Their product calibrates noticeably better than raw sampling frequency on
//! overconfident models, and the crate ships the standard baselines and
//! metrics (ECE, IPR, CE, Brier) to measure exactly that.
//!
//! The pieces:
//! - [`dataset`]: MCQA data model and JSONL ingestion
//! - [`backend`]: OpenAI-compatible HTTP client, deterministic mock, cache
//! - [`sampler`]: K-sample answer distributions
//! - [`fidelity`]: option-replacement chains and their scores
//! - [`confidence`]: uncertainty, combination, per-question records
//! - [`baselines`]: Verb, Ling, Sampled, Token comparison methods
//! - [`metrics`]: reliability diagrams and calibration metrics
//! - [`report`]: run-record files, CSV/SVG diagrams, comparison tables
//! - [`runner`]: configuration and end-to-end experiment execution
//! - [`synthetic`]: deterministic fixtures

pub mod backend;
pub mod baselines;
pub mod confidence;
pub mod dataset;
pub mod fidelity;
pub mod metrics;
pub mod prompt;
pub mod report;
pub mod runner;
pub mod sampler;
pub mod synthetic;

pub use backend::{
    BackendError, CachedBackend, CompletionRequest, CompletionResult, DecodeMode, DecodeParams,
    HttpBackend, HttpBackendConfig, LanguageModelBackend, MockBackend, MockModelSpec,
    ScriptedBackend,
};
pub use confidence::{ConfidenceRecord, Method, RecordFlag};
pub use dataset::{
    load_question_set, save_question_set, McqaItem, McqaOption, QuestionSet, SENTINEL_OPTION,
};
pub use fidelity::{chain_fidelity, elicit_chain, fidelity_scores, FidelityChain, FidelityScores};
pub use metrics::{MetricReport, ReliabilityDiagram};
pub use runner::{BackendConfig, RunConfig, RunError, RunOutcome};
pub use sampler::{final_answer, parse_label, sample_answers, AnswerDistribution};
