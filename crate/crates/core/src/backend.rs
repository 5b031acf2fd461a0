// SPDX-License-Identifier: MIT OR Apache-2.0

//! The surface the calibration and evaluation pipelines run against.
//!
//! [`ModelBackend`] drives the transformer. [`PlantedBackend`] is a
//! ground-truth oracle whose document attention is exactly
//! `link(rel(doc) + bias(position) + noise)`, so every downstream quantity
//! has a known answer.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicUsize, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bias::{cell_noise, doc_key, u_shape, Link};
use crate::calibration::DUMMY_DOC_ID;
use crate::error::{Error, Result};
use crate::harness::{Document, MultiDocExample};
use crate::intervention::{generate_with_plan, CalibrationPlan};
use crate::math::argsort_descending;
use crate::model::{generate_greedy, LayerSet, Model};
use crate::probe::{doc_attention, AttentionProfile};
use crate::prompt::SegmentedPrompt;
use crate::rerank::{query_generation_logprob, relevance_generation_logprob, ScoringTemplate};
use crate::tokenizer::detokenize;

pub trait Backend {
    /// One forward pass; per-document attention at the final prompt token.
    fn doc_attention(&self, prompt: &SegmentedPrompt) -> Result<AttentionProfile>;

    /// Greedy answer, with the plan's attention rewrite when given.
    fn generate(
        &self,
        prompt: &SegmentedPrompt,
        plan: Option<&CalibrationPlan>,
        max_new: usize,
    ) -> Result<String>;

    /// Log-likelihood of the question given the document alone.
    fn query_generation_score(&self, question: &str, doc: &Document) -> Result<f64>;

    /// Log-likelihood of a positive answer to "is this document relevant?".
    fn relevance_generation_score(&self, question: &str, doc: &Document) -> Result<f64>;

    fn max_seq_len(&self) -> Option<usize> {
        None
    }
}

impl<B: Backend + ?Sized> Backend for &B {
    fn doc_attention(&self, prompt: &SegmentedPrompt) -> Result<AttentionProfile> {
        (**self).doc_attention(prompt)
    }
    fn generate(
        &self,
        prompt: &SegmentedPrompt,
        plan: Option<&CalibrationPlan>,
        max_new: usize,
    ) -> Result<String> {
        (**self).generate(prompt, plan, max_new)
    }
    fn query_generation_score(&self, question: &str, doc: &Document) -> Result<f64> {
        (**self).query_generation_score(question, doc)
    }
    fn relevance_generation_score(&self, question: &str, doc: &Document) -> Result<f64> {
        (**self).relevance_generation_score(question, doc)
    }
    fn max_seq_len(&self) -> Option<usize> {
        (**self).max_seq_len()
    }
}

#[derive(Clone, Debug)]
pub struct ModelBackend<'m> {
    model: &'m Model,
    measure_layers: LayerSet,
    query_template: ScoringTemplate,
    relevance_template: ScoringTemplate,
}

impl<'m> ModelBackend<'m> {
    pub fn new(model: &'m Model) -> Self {
        Self {
            model,
            measure_layers: LayerSet::All,
            query_template: ScoringTemplate::query_generation(),
            relevance_template: ScoringTemplate::relevance_generation(),
        }
    }

    pub fn with_measure_layers(mut self, layers: LayerSet) -> Self {
        self.measure_layers = layers;
        self
    }

    pub fn with_scoring_templates(mut self, query: ScoringTemplate, relevance: ScoringTemplate) -> Self {
        self.query_template = query;
        self.relevance_template = relevance;
        self
    }

    pub fn model(&self) -> &'m Model {
        self.model
    }
}

impl Backend for ModelBackend<'_> {
    fn doc_attention(&self, prompt: &SegmentedPrompt) -> Result<AttentionProfile> {
        doc_attention(self.model, prompt, &self.measure_layers, false)
    }

    fn generate(
        &self,
        prompt: &SegmentedPrompt,
        plan: Option<&CalibrationPlan>,
        max_new: usize,
    ) -> Result<String> {
        let tokens = match plan {
            Some(plan) => generate_with_plan(self.model, prompt, plan, max_new, false)?.0,
            None => generate_greedy(self.model, &prompt.tokens, max_new, None)?,
        };
        Ok(detokenize(&tokens))
    }

    fn query_generation_score(&self, question: &str, doc: &Document) -> Result<f64> {
        query_generation_logprob(self.model, question, doc, &self.query_template)
    }

    fn relevance_generation_score(&self, question: &str, doc: &Document) -> Result<f64> {
        relevance_generation_logprob(self.model, question, doc, &self.relevance_template)
    }

    fn max_seq_len(&self) -> Option<usize> {
        Some(self.model.config().max_seq_len)
    }
}

/// Parameters of the planted attention oracle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedConfig {
    /// Height of the U-shaped bias at the first and last position, above
    /// its minimum.
    pub amplitude: f64,
    pub offset: f64,
    pub sigma: f64,
    pub link: Link,
    pub seed: u64,
    /// Relevance assigned to the dummy document.
    pub dummy_rel: f64,
    /// Gold documents get this relevance; distractors draw from
    /// `[0, rel_spread)`.
    pub rel_spread: f64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self {
            amplitude: 2.0,
            offset: 0.0,
            sigma: 0.0,
            link: Link::Linear,
            seed: 0,
            dummy_rel: 0.0,
            rel_spread: 1.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PlantedBackend {
    pub config: PlantedConfig,
    rel: BTreeMap<String, f64>,
    answers: BTreeMap<String, String>,
}

pub const PLANTED_NO_ANSWER: &str = "unknown";

impl PlantedBackend {
    pub fn new(config: PlantedConfig) -> Self {
        Self {
            config,
            rel: BTreeMap::new(),
            answers: BTreeMap::new(),
        }
    }

    /// Gold documents get `rel_spread` and answer with the example's first
    /// answer string; distractors get a seeded draw below `rel_spread`.
    pub fn from_dataset(dataset: &[MultiDocExample], config: PlantedConfig) -> Self {
        let mut backend = Self::new(config);
        let spread = backend.config.rel_spread;
        let seed = backend.config.seed;
        for ex in dataset {
            for doc in &ex.docs {
                let rel = if doc.is_gold {
                    if let Some(answer) = ex.answers.first() {
                        backend.answers.insert(doc.id.clone(), answer.clone());
                    }
                    spread
                } else {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ doc_key(&doc.id));
                    rng.random::<f64>() * spread
                };
                backend.rel.insert(doc.id.clone(), rel);
            }
        }
        backend
    }

    pub fn insert_doc(&mut self, id: impl Into<String>, rel: f64) {
        self.rel.insert(id.into(), rel);
    }

    pub fn insert_answer(&mut self, doc_id: impl Into<String>, answer: impl Into<String>) {
        self.answers.insert(doc_id.into(), answer.into());
    }

    pub fn rel_of(&self, id: &str) -> Option<f64> {
        if id == DUMMY_DOC_ID {
            Some(self.config.dummy_rel)
        } else {
            self.rel.get(id).copied()
        }
    }

    fn rel_checked(&self, id: &str) -> Result<f64> {
        self.rel_of(id)
            .ok_or_else(|| Error::Unsupported(format!("planted backend has no document `{id}`")))
    }

    pub fn bias(&self, k: usize) -> Vec<f64> {
        u_shape(k, self.config.amplitude, self.config.offset)
    }
}

impl Backend for PlantedBackend {
    fn doc_attention(&self, prompt: &SegmentedPrompt) -> Result<AttentionProfile> {
        let c = &self.config;
        if !(c.sigma >= 0.0) {
            return Err(Error::NegativeSigma(c.sigma));
        }
        let bias = self.bias(prompt.k());
        let per_doc = prompt
            .doc_spans
            .iter()
            .enumerate()
            .map(|(pos, span)| {
                let rel = self.rel_checked(&span.doc_id)?;
                let noise = cell_noise(c.seed, doc_key(&span.doc_id), pos as u64, c.sigma);
                Ok(c.link.apply(rel, bias[pos], noise))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(AttentionProfile {
            per_doc,
            layer_head_detail: None,
            measured_at: prompt.tokens.len().saturating_sub(1),
            layer_set: Vec::new(),
            span_lens: prompt.doc_spans.iter().map(|s| s.len()).collect(),
        })
    }

    /// Answers iff a gold document is among the top half (rounded up) of
    /// documents by effective attention: the plan's alpha when calibrated,
    /// the planted attention otherwise.
    fn generate(
        &self,
        prompt: &SegmentedPrompt,
        plan: Option<&CalibrationPlan>,
        _max_new: usize,
    ) -> Result<String> {
        let weights = match plan {
            Some(p) => p.alpha.clone(),
            None => self.doc_attention(prompt)?.per_doc,
        };
        let order = argsort_descending(&weights);
        let half = weights.len().div_ceil(2);
        let answer = order[..half]
            .iter()
            .find_map(|&i| self.answers.get(&prompt.doc_spans[i].doc_id));
        Ok(answer.cloned().unwrap_or_else(|| PLANTED_NO_ANSWER.into()))
    }

    fn query_generation_score(&self, _question: &str, doc: &Document) -> Result<f64> {
        let noise = cell_noise(self.config.seed, doc_key(&doc.id), u64::MAX, self.config.sigma);
        Ok(self.rel_checked(&doc.id)? + noise)
    }

    fn relevance_generation_score(&self, _question: &str, doc: &Document) -> Result<f64> {
        let noise = cell_noise(
            self.config.seed,
            doc_key(&doc.id),
            u64::MAX - 1,
            self.config.sigma,
        );
        Ok(self.rel_checked(&doc.id)? + noise)
    }
}

/// Counts attention forward passes made through it.
#[derive(Debug)]
pub struct CountingBackend<B> {
    inner: B,
    passes: AtomicUsize,
}

impl<B> CountingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            passes: AtomicUsize::new(0),
        }
    }

    pub fn forward_passes(&self) -> usize {
        self.passes.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.passes.store(0, Ordering::Relaxed);
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }
}

impl<B: Backend> Backend for CountingBackend<B> {
    fn doc_attention(&self, prompt: &SegmentedPrompt) -> Result<AttentionProfile> {
        self.passes.fetch_add(1, Ordering::Relaxed);
        self.inner.doc_attention(prompt)
    }
    fn generate(
        &self,
        prompt: &SegmentedPrompt,
        plan: Option<&CalibrationPlan>,
        max_new: usize,
    ) -> Result<String> {
        self.inner.generate(prompt, plan, max_new)
    }
    fn query_generation_score(&self, question: &str, doc: &Document) -> Result<f64> {
        self.inner.query_generation_score(question, doc)
    }
    fn relevance_generation_score(&self, question: &str, doc: &Document) -> Result<f64> {
        self.inner.relevance_generation_score(question, doc)
    }
    fn max_seq_len(&self) -> Option<usize> {
        self.inner.max_seq_len()
    }
}
