// SPDX-License-Identifier: MIT OR Apache-2.0

//! Per-document averaged attention at the final prompt position, and
//! rotation sweeps that place every document at every position once.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::backend::Backend;
use crate::error::{Error, Result};
use crate::harness::MultiDocExample;
use crate::model::{forward, AttentionTensor, Capture, LayerSet, Model};
use crate::prompt::{build_prompt, PromptTemplate, SegmentedPrompt};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadProfile {
    pub layer: usize,
    pub head: usize,
    pub per_doc: Vec<f64>,
}

/// Mean attention per document body, measured at one query position.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionProfile {
    pub per_doc: Vec<f64>,
    pub layer_head_detail: Option<Vec<HeadProfile>>,
    pub measured_at: usize,
    /// Layers averaged over; empty for providers without layers.
    pub layer_set: Vec<usize>,
    pub span_lens: Vec<usize>,
}

impl AttentionProfile {
    pub fn k(&self) -> usize {
        self.per_doc.len()
    }
}

/// Averages a captured tensor's row at `prompt`'s final position over
/// `layers` and all heads, then over each document's tokens.
pub fn profile_from_tensor(
    tensor: &AttentionTensor,
    prompt: &SegmentedPrompt,
    layers: &[usize],
    detail: bool,
) -> Result<AttentionProfile> {
    if layers.is_empty() {
        return Err(Error::EmptyLayerSet);
    }
    if let Some(&bad) = layers.iter().find(|&&l| l >= tensor.n_layers()) {
        return Err(Error::LayerOutOfRange {
            layer: bad,
            n_layers: tensor.n_layers(),
        });
    }
    let query = prompt
        .tokens
        .len()
        .checked_sub(1)
        .ok_or(Error::EmptyContext)?;
    let n_heads = tensor.n_heads();
    let mut averaged = vec![0.0f64; query + 1];
    let mut heads = Vec::new();
    for &l in layers {
        for h in 0..n_heads {
            let row = &tensor.row(l, h, query)[..=query];
            for (a, &r) in averaged.iter_mut().zip(row) {
                *a += r as f64;
            }
            if detail {
                heads.push(HeadProfile {
                    layer: l,
                    head: h,
                    per_doc: span_means(row.iter().map(|&r| r as f64), prompt),
                });
            }
        }
    }
    let denom = (layers.len() * n_heads) as f64;
    averaged.iter_mut().for_each(|a| *a /= denom);
    Ok(AttentionProfile {
        per_doc: span_means(averaged.iter().copied(), prompt),
        layer_head_detail: detail.then_some(heads),
        measured_at: query,
        layer_set: layers.to_vec(),
        span_lens: prompt.doc_spans.iter().map(|s| s.len()).collect(),
    })
}

fn span_means(row: impl Iterator<Item = f64> + Clone, prompt: &SegmentedPrompt) -> Vec<f64> {
    let row: Vec<f64> = row.collect();
    prompt
        .doc_spans
        .iter()
        .map(|s| row[s.start..s.end].iter().sum::<f64>() / s.len() as f64)
        .collect()
}

/// One forward pass; attention read at the final prompt token.
pub fn doc_attention(
    model: &Model,
    prompt: &SegmentedPrompt,
    layer_set: &LayerSet,
    detail: bool,
) -> Result<AttentionProfile> {
    let layers = layer_set.resolve(model.config().n_layers)?;
    let out = forward(model, &prompt.tokens, Capture::LastPosition)?;
    let tensor = out.attention.ok_or(Error::EmptyContext)?;
    profile_from_tensor(&tensor, prompt, &layers, detail)
}

/// `matrix[d][k]`: attention to document `d` (original index) when placed
/// at position `k`. Pass `r` places document `(k + r) mod K` at position
/// `k`, so K passes cover every (document, position) pair once.
pub fn position_sweep<B: Backend + ?Sized>(
    backend: &B,
    example: &MultiDocExample,
    template: &PromptTemplate,
) -> Result<Vec<Vec<f64>>> {
    let k = example.k();
    if k < 2 {
        return Err(Error::TooFewDocuments { need: 2, got: k });
    }
    let mut matrix = vec![vec![0.0; k]; k];
    for r in 0..k {
        let order: Vec<usize> = (0..k).map(|pos| (pos + r) % k).collect();
        let rotated = example.permuted(&order)?;
        let prompt = build_prompt(&rotated, template, backend.max_seq_len())?;
        let profile = backend.doc_attention(&prompt)?;
        for (pos, &doc) in order.iter().enumerate() {
            matrix[doc][pos] = profile.per_doc[pos];
        }
    }
    Ok(matrix)
}
