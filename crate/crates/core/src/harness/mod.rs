// SPDX-License-Identifier: MIT OR Apache-2.0

//! Datasets, answer matching, response/document dependence analyses, and
//! end-to-end evaluation.

mod answer;
mod contingency;
mod dataset;
mod eval;
mod synth;
mod tfidf;

pub use answer::{answer_match, answer_match_with, normalize, MatchMode};
pub use contingency::{attention_usage_contingency, ContingencyTable, ODD_K_RULE};
pub use dataset::{place_gold, Document, MultiDocExample};
pub use eval::{
    aggregate, evaluate, evaluate_example, expand_instances, reorder_by_scores, ConfigSnapshot,
    EvalConfig, EvalMode, EvalReport, ExampleOutcome, Placement, PositionAccuracy,
};
pub use synth::{
    contamination_free, default_name_pool, synth_generate, SynthConfig, DEFAULT_FACT_TEMPLATE,
};
pub use tfidf::{tfidf_dependence, word_tokens, TfIdfModel, TfIdfVector};

