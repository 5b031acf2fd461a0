// SPDX-License-Identifier: MIT OR Apache-2.0

//! Dummy-document probing of positional attention bias and calibrated
//! relevance (`attention - dummy attention` at the same position).

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::backend::Backend;
use crate::error::{Error, Result};
use crate::harness::{Document, MultiDocExample};
use crate::math::argsort_descending;
use crate::probe::AttentionProfile;
use crate::prompt::{build_prompt_from_parts, PromptTemplate};

pub const DUMMY_DOC_ID: &str = "__dummy__";
pub const DEFAULT_FILLER: &str = "lorem ipsum ";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DummyDocSpec {
    pub filler_text: String,
    pub target_token_length: usize,
    pub repeat_to_fill: bool,
}

impl DummyDocSpec {
    /// Filler repeated to the mean token length of the example's documents.
    pub fn matched_to(example: &MultiDocExample, filler: &str) -> Self {
        let total: usize = example.docs.iter().map(|d| d.text.len()).sum();
        let mean = libm::round(total as f64 / example.k().max(1) as f64) as usize;
        Self {
            filler_text: filler.into(),
            target_token_length: mean.max(1),
            repeat_to_fill: true,
        }
    }
}

/// Renders the dummy document. With `repeat_to_fill` the filler is cycled
/// and cut at the target length (backing off to a character boundary);
/// otherwise the filler is used as is and must land within 10% of target.
pub fn make_dummy(spec: &DummyDocSpec) -> Result<Document> {
    if spec.filler_text.is_empty() {
        return Err(Error::EmptyFiller);
    }
    let target = spec.target_token_length;
    if target == 0 {
        return Err(Error::ZeroDummyLength);
    }
    let text = if spec.repeat_to_fill {
        let mut s = String::with_capacity(target + 4);
        while s.len() < target {
            s.push_str(&spec.filler_text);
        }
        let mut cut = target;
        while !s.is_char_boundary(cut) {
            cut -= 1;
        }
        if cut == 0 {
            cut = s.chars().next().map_or(0, char::len_utf8);
        }
        s.truncate(cut);
        s
    } else {
        let len = spec.filler_text.len();
        if len.abs_diff(target) as f64 > 0.1 * target as f64 {
            return Err(Error::DummyLength {
                target,
                actual: len,
            });
        }
        spec.filler_text.clone()
    };
    Ok(Document {
        id: DUMMY_DOC_ID.into(),
        title: String::new(),
        text,
        is_gold: false,
    })
}

/// Baseline attention a content-free document receives at each position.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasProfile {
    pub per_position: Vec<f64>,
    pub dummy_spec: DummyDocSpec,
    pub probe_passes: usize,
    pub layer_set: Vec<usize>,
    pub template_id: String,
}

/// One pass per position `k`, with document `k` replaced in place by the
/// dummy and every other document left where it is.
pub fn estimate_bias_profile<B: Backend + ?Sized>(
    backend: &B,
    example: &MultiDocExample,
    template: &PromptTemplate,
    spec: &DummyDocSpec,
) -> Result<BiasProfile> {
    let dummy = make_dummy(spec)?;
    let k = example.k();
    let mut per_position = Vec::with_capacity(k);
    let mut layer_set = Vec::new();
    for pos in 0..k {
        let mut docs = example.docs.clone();
        docs[pos] = dummy.clone();
        let prompt =
            build_prompt_from_parts(&example.question, &docs, template, backend.max_seq_len())?;
        let profile = backend.doc_attention(&prompt)?;
        per_position.push(profile.per_doc[pos]);
        layer_set = profile.layer_set;
    }
    Ok(BiasProfile {
        per_position,
        dummy_spec: spec.clone(),
        probe_passes: k,
        layer_set,
        template_id: template.id.clone(),
    })
}

/// Experimental: a single profile averaged over several examples with the
/// same K, each probed separately.
pub fn estimate_global_bias_profile<B: Backend + ?Sized>(
    backend: &B,
    examples: &[MultiDocExample],
    template: &PromptTemplate,
    spec: &DummyDocSpec,
) -> Result<BiasProfile> {
    let first = examples.first().ok_or(Error::EmptyResults)?;
    let mut acc = estimate_bias_profile(backend, first, template, spec)?;
    for ex in &examples[1..] {
        let p = estimate_bias_profile(backend, ex, template, spec)?;
        if p.per_position.len() != acc.per_position.len() {
            return Err(Error::LengthMismatch {
                expected: acc.per_position.len(),
                actual: p.per_position.len(),
            });
        }
        acc.per_position
            .iter_mut()
            .zip(&p.per_position)
            .for_each(|(a, b)| *a += b);
        acc.probe_passes += p.probe_passes;
    }
    let n = examples.len() as f64;
    acc.per_position.iter_mut().for_each(|a| *a /= n);
    Ok(acc)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreSource {
    Calibrated,
    Vanilla,
    QueryGen,
    RelevanceGen,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelevanceScores {
    pub per_doc: Vec<f64>,
    pub source: ScoreSource,
}

/// `profile - bias` per position. The dummy's own relevance is taken as 0;
/// it would shift every score by the same constant.
pub fn calibrated_relevance(
    profile: &AttentionProfile,
    bias: &BiasProfile,
) -> Result<RelevanceScores> {
    if profile.per_doc.len() != bias.per_position.len() {
        return Err(Error::LengthMismatch {
            expected: profile.per_doc.len(),
            actual: bias.per_position.len(),
        });
    }
    if profile.layer_set != bias.layer_set {
        return Err(Error::LayerSetMismatch);
    }
    Ok(RelevanceScores {
        per_doc: profile
            .per_doc
            .iter()
            .zip(&bias.per_position)
            .map(|(a, b)| a - b)
            .collect(),
        source: ScoreSource::Calibrated,
    })
}

/// Document indices by descending score; lower original position wins ties.
pub fn rank_documents(scores: &RelevanceScores) -> Vec<usize> {
    argsort_descending(&scores.per_doc)
}
