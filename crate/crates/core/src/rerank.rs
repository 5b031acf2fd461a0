// SPDX-License-Identifier: MIT OR Apache-2.0

//! Document ranking by vanilla attention, calibrated attention, and the two
//! prompting baselines, plus Recall@k.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::backend::Backend;
use crate::calibration::RelevanceScores;
use crate::error::{Error, Result};
use crate::harness::{Document, MultiDocExample};
use crate::math::argsort_descending;
use crate::model::{sequence_logprob, Model};
use crate::probe::AttentionProfile;
use crate::prompt::substitute;
use crate::tokenizer::tokenize;

/// A per-document scoring prompt: `context` is conditioned on and
/// `continuation` is scored. Both may use `{doc_title}`, `{doc_text}` and
/// `{question}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoringTemplate {
    pub id: String,
    pub context: String,
    pub continuation: String,
}

impl ScoringTemplate {
    pub fn query_generation() -> Self {
        Self {
            id: "querygen-v1".into(),
            context: "Document: {doc_text}\nQuestion:".into(),
            continuation: " {question}".into(),
        }
    }

    pub fn relevance_generation() -> Self {
        Self {
            id: "relgen-v1".into(),
            context: "Document: {doc_text}\nQuestion: {question}\nDoes the document answer the question? Answer yes or no.\nAnswer:".into(),
            continuation: " yes".into(),
        }
    }

    fn render(&self, s: &str, question: &str, doc: &Document) -> String {
        substitute(
            s,
            &[
                ("{question}", question),
                ("{doc_title}", &doc.title),
                ("{doc_text}", &doc.text),
            ],
        )
    }

    pub fn score(&self, model: &Model, question: &str, doc: &Document) -> Result<f64> {
        let ctx = tokenize(&self.render(&self.context, question, doc));
        let cont = tokenize(&self.render(&self.continuation, question, doc));
        sequence_logprob(model, &ctx, &cont)
    }
}

/// `log p(question | document)` for one document in isolation.
pub fn query_generation_logprob(
    model: &Model,
    question: &str,
    doc: &Document,
    template: &ScoringTemplate,
) -> Result<f64> {
    template.score(model, question, doc)
}

/// `log p(" yes" | document, question, relevance prompt)`.
pub fn relevance_generation_logprob(
    model: &Model,
    question: &str,
    doc: &Document,
    template: &ScoringTemplate,
) -> Result<f64> {
    template.score(model, question, doc)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RankMethod {
    VanillaAttention,
    CalibratedAttention,
    QueryGeneration,
    RelevanceGeneration,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankingResult {
    pub method: RankMethod,
    /// Document indices, best first.
    pub permutation: Vec<usize>,
    pub scores: Vec<f64>,
}

impl RankingResult {
    pub fn from_scores(method: RankMethod, scores: Vec<f64>) -> Self {
        Self {
            method,
            permutation: argsort_descending(&scores),
            scores,
        }
    }

    /// 0-based rank of document `doc`.
    pub fn rank_of(&self, doc: usize) -> Option<usize> {
        self.permutation.iter().position(|&d| d == doc)
    }
}

pub fn score_vanilla(profile: &AttentionProfile) -> RankingResult {
    RankingResult::from_scores(RankMethod::VanillaAttention, profile.per_doc.clone())
}

pub fn score_calibrated(relevance: &RelevanceScores) -> RankingResult {
    RankingResult::from_scores(RankMethod::CalibratedAttention, relevance.per_doc.clone())
}

/// One independent pass per document; other documents never enter the
/// prompt.
pub fn score_query_generation<B: Backend + ?Sized>(
    backend: &B,
    example: &MultiDocExample,
) -> Result<RankingResult> {
    let scores = example
        .docs
        .iter()
        .map(|d| backend.query_generation_score(&example.question, d))
        .collect::<Result<Vec<_>>>()?;
    Ok(RankingResult::from_scores(RankMethod::QueryGeneration, scores))
}

pub fn score_relevance_generation<B: Backend + ?Sized>(
    backend: &B,
    example: &MultiDocExample,
) -> Result<RankingResult> {
    let scores = example
        .docs
        .iter()
        .map(|d| backend.relevance_generation_score(&example.question, d))
        .collect::<Result<Vec<_>>>()?;
    Ok(RankingResult::from_scores(RankMethod::RelevanceGeneration, scores))
}

/// Fraction of `(ranking, gold index)` pairs whose gold document is in the
/// top `k`.
pub fn recall_at_k(results: &[(RankingResult, usize)], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::ZeroK);
    }
    if results.is_empty() {
        return Err(Error::EmptyResults);
    }
    let mut hits = 0usize;
    for (r, gold) in results {
        if *gold >= r.permutation.len() {
            return Err(Error::PositionOutOfRange {
                position: *gold,
                k: r.permutation.len(),
            });
        }
        if r.permutation.iter().take(k).any(|d| d == gold) {
            hits += 1;
        }
    }
    Ok(hits as f64 / results.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn profile(v: &[f64]) -> AttentionProfile {
        AttentionProfile {
            per_doc: v.to_vec(),
            layer_head_detail: None,
            measured_at: 0,
            layer_set: vec![],
            span_lens: vec![1; v.len()],
        }
    }

    #[test]
    fn vanilla_sorts() {
        assert_eq!(score_vanilla(&profile(&[0.1, 0.4, 0.2])).permutation, vec![1, 2, 0]);
        assert_eq!(score_vanilla(&profile(&[0.3; 4])).permutation, vec![0, 1, 2, 3]);
    }

    #[test]
    fn recall_counts() {
        let r = RankingResult::from_scores(RankMethod::VanillaAttention, vec![0.9, 0.8, 0.7, 0.6]);
        assert_eq!(recall_at_k(&[(r.clone(), 0)], 3).unwrap(), 1.0);
        assert_eq!(recall_at_k(&[(r.clone(), 3)], 3).unwrap(), 0.0);
        assert_eq!(recall_at_k(&[(r.clone(), 3), (r.clone(), 1)], 3).unwrap(), 0.5);
        assert_eq!(recall_at_k(&[], 3), Err(Error::EmptyResults));
        assert_eq!(recall_at_k(&[(r.clone(), 0)], 0), Err(Error::ZeroK));
        assert!(recall_at_k(&[(r, 9)], 1).is_err());
    }
}
