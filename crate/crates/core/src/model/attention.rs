// SPDX-License-Identifier: MIT OR Apache-2.0

use alloc::boxed::Box;
use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

/// What attention to keep from a forward pass.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Capture {
    Off,
    /// Only the row of the final input position.
    #[default]
    LastPosition,
    Full,
}

/// Post-softmax attention probabilities indexed by
/// `(layer, head, query_position, key_position)`.
///
/// Rows are stored for query positions `first_query..first_query + n_queries`
/// and always span `seq_len` keys; keys after the query are exactly zero.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionTensor {
    n_layers: usize,
    n_heads: usize,
    seq_len: usize,
    first_query: usize,
    n_queries: usize,
    data: Vec<f32>,
}

impl AttentionTensor {
    pub fn zeros(
        n_layers: usize,
        n_heads: usize,
        seq_len: usize,
        first_query: usize,
        n_queries: usize,
    ) -> Self {
        assert!(first_query + n_queries <= seq_len);
        Self {
            n_layers,
            n_heads,
            seq_len,
            first_query,
            n_queries,
            data: vec![0.0; n_layers * n_heads * n_queries * seq_len],
        }
    }

    pub fn n_layers(&self) -> usize {
        self.n_layers
    }

    pub fn n_heads(&self) -> usize {
        self.n_heads
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    /// Captured query positions.
    pub fn query_positions(&self) -> core::ops::Range<usize> {
        self.first_query..self.first_query + self.n_queries
    }

    fn offset(&self, layer: usize, head: usize, query: usize) -> usize {
        assert!(layer < self.n_layers && head < self.n_heads);
        assert!(
            self.query_positions().contains(&query),
            "query position {query} was not captured"
        );
        ((layer * self.n_heads + head) * self.n_queries + (query - self.first_query)) * self.seq_len
    }

    pub fn row(&self, layer: usize, head: usize, query: usize) -> &[f32] {
        let o = self.offset(layer, head, query);
        &self.data[o..o + self.seq_len]
    }

    pub fn row_mut(&mut self, layer: usize, head: usize, query: usize) -> &mut [f32] {
        let o = self.offset(layer, head, query);
        &mut self.data[o..o + self.seq_len]
    }

    pub fn get(&self, layer: usize, head: usize, query: usize, key: usize) -> f32 {
        self.row(layer, head, query)[key]
    }
}

/// Where an attention row was produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RowSite {
    pub layer: usize,
    pub head: usize,
    pub query_pos: usize,
    /// Decode step; step 0 is the row of the final prompt position.
    pub step: usize,
}

type RowTransform<'a> = dyn FnMut(RowSite, &mut [f32]) + 'a;

/// Rewrites post-softmax attention rows in selected layers during decoding,
/// before they mix the value vectors. Rows passed to the transform have
/// length `query_pos + 1`; the result must stay nonnegative and sum to
/// 1 ± 1e-5.
pub struct AttentionHook<'a> {
    target_layers: BTreeSet<usize>,
    transform: Box<RowTransform<'a>>,
}

impl<'a> AttentionHook<'a> {
    pub fn new(
        target_layers: impl IntoIterator<Item = usize>,
        transform: impl FnMut(RowSite, &mut [f32]) + 'a,
    ) -> Self {
        Self {
            target_layers: target_layers.into_iter().collect(),
            transform: Box::new(transform),
        }
    }

    pub fn identity(target_layers: impl IntoIterator<Item = usize>) -> Self {
        Self::new(target_layers, |_, _| {})
    }

    pub fn targets(&self, layer: usize) -> bool {
        self.target_layers.contains(&layer)
    }

    pub fn target_layers(&self) -> &BTreeSet<usize> {
        &self.target_layers
    }

    pub(crate) fn apply(&mut self, site: RowSite, row: &mut [f32]) {
        (self.transform)(site, row)
    }
}

impl core::fmt::Debug for AttentionHook<'_> {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("AttentionHook")
            .field("target_layers", &self.target_layers)
            .finish_non_exhaustive()
    }
}
