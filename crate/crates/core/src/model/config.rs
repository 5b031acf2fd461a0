// SPDX-License-Identifier: MIT OR Apache-2.0

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tokenizer::VOCAB_SIZE;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PositionalScheme {
    #[default]
    LearnedAbsolute,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ff: usize,
    pub max_seq_len: usize,
    #[serde(default)]
    pub positional_scheme: PositionalScheme,
}

impl Default for ModelConfig {
    /// The 4-layer, 4-head, 64-wide toy configuration used throughout the
    /// tests and as the CLI default.
    fn default() -> Self {
        Self {
            vocab_size: VOCAB_SIZE,
            d_model: 64,
            n_heads: 4,
            n_layers: 4,
            d_ff: 256,
            max_seq_len: 1024,
            positional_scheme: PositionalScheme::LearnedAbsolute,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("vocab_size", self.vocab_size),
            ("d_model", self.d_model),
            ("n_heads", self.n_heads),
            ("n_layers", self.n_layers),
            ("d_ff", self.d_ff),
            ("max_seq_len", self.max_seq_len),
        ];
        for (name, value) in counts {
            if value == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be >= 1")));
            }
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::InvalidConfig(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    /// Names and shapes of every parameter tensor, in storage order.
    pub fn tensor_specs(&self) -> Vec<(String, Vec<usize>)> {
        let d = self.d_model;
        let mut specs = vec![
            ("tok_emb".into(), vec![self.vocab_size, d]),
            ("pos_emb".into(), vec![self.max_seq_len, d]),
        ];
        for i in 0..self.n_layers {
            let p = |s: &str| format!("layers.{i}.{s}");
            specs.extend([
                (p("ln1.gain"), vec![d]),
                (p("ln1.bias"), vec![d]),
                (p("attn.wq"), vec![d, d]),
                (p("attn.wk"), vec![d, d]),
                (p("attn.wv"), vec![d, d]),
                (p("attn.wo"), vec![d, d]),
                (p("ln2.gain"), vec![d]),
                (p("ln2.bias"), vec![d]),
                (p("mlp.w1"), vec![d, self.d_ff]),
                (p("mlp.b1"), vec![self.d_ff]),
                (p("mlp.w2"), vec![self.d_ff, d]),
                (p("mlp.b2"), vec![d]),
            ]);
        }
        specs.extend([
            ("ln_f.gain".into(), vec![d]),
            ("ln_f.bias".into(), vec![d]),
            ("lm_head".into(), vec![d, self.vocab_size]),
        ]);
        specs
    }
}

/// Which decoder layers a measurement or intervention covers.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayerSet {
    All,
    /// The second half of the stack, `n_layers / 2 ..`.
    LastHalf,
    Explicit(Vec<usize>),
}

impl LayerSet {
    pub fn resolve(&self, n_layers: usize) -> Result<Vec<usize>> {
        let layers: Vec<usize> = match self {
            LayerSet::All => (0..n_layers).collect(),
            LayerSet::LastHalf => (n_layers / 2..n_layers).collect(),
            LayerSet::Explicit(ls) => {
                let mut ls = ls.clone();
                ls.sort_unstable();
                ls.dedup();
                ls
            }
        };
        if layers.is_empty() {
            return Err(Error::EmptyLayerSet);
        }
        if let Some(&bad) = layers.iter().find(|&&l| l >= n_layers) {
            return Err(Error::LayerOutOfRange {
                layer: bad,
                n_layers,
            });
        }
        Ok(layers)
    }

    /// Parses `all`, `last-half`, or a comma-separated index list.
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "all" => Ok(LayerSet::All),
            "last-half" => Ok(LayerSet::LastHalf),
            list => list
                .split(',')
                .map(|p| {
                    p.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::InvalidConfig(format!("bad layer index `{p}`")))
                })
                .collect::<Result<Vec<_>>>()
                .map(LayerSet::Explicit),
        }
    }
}
