// SPDX-License-Identifier: MIT OR Apache-2.0

//! A small pre-LayerNorm decoder-only transformer over a byte vocabulary.
//!
//! Weights are immutable once built; every forward or generation call owns
//! its own [`Session`] (KV cache plus scratch buffers), so a `&Model` can be
//! shared freely between threads.

mod attention;
mod config;
mod engine;

use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub use attention::{AttentionHook, AttentionTensor, Capture, RowSite};
pub use config::{LayerSet, ModelConfig, PositionalScheme};
pub use engine::{
    forward, generate_greedy, generate_greedy_observed, sequence_logprob, ForwardOutput, Session,
};

use crate::error::{Error, Result};

/// A named row-major f32 array.
#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Layer {
    pub ln1_gain: Vec<f32>,
    pub ln1_bias: Vec<f32>,
    pub wq: Vec<f32>,
    pub wk: Vec<f32>,
    pub wv: Vec<f32>,
    pub wo: Vec<f32>,
    pub ln2_gain: Vec<f32>,
    pub ln2_bias: Vec<f32>,
    pub w1: Vec<f32>,
    pub b1: Vec<f32>,
    pub w2: Vec<f32>,
    pub b2: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    config: ModelConfig,
    pub(crate) tok_emb: Vec<f32>,
    pub(crate) pos_emb: Vec<f32>,
    pub(crate) layers: Vec<Layer>,
    pub(crate) lnf_gain: Vec<f32>,
    pub(crate) lnf_bias: Vec<f32>,
    pub(crate) lm_head: Vec<f32>,
}

impl Model {
    /// Reproducible random weights for a named seed.
    ///
    /// Projections are drawn from N(0, 1/fan_in) so attention logits have
    /// roughly unit scale and rows are visibly non-uniform.
    pub fn seeded(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tensors = config
            .tensor_specs()
            .into_iter()
            .map(|(name, shape)| {
                let len = shape.iter().product();
                let data = if name.ends_with("gain") {
                    alloc::vec![1.0; len]
                } else if name.ends_with("bias") || name.ends_with(".b1") || name.ends_with(".b2") {
                    alloc::vec![0.0; len]
                } else {
                    let std = if name.ends_with("emb") {
                        1.0
                    } else {
                        1.0 / libm::sqrtf(shape[0] as f32)
                    };
                    let normal = Normal::new(0.0f32, std).expect("finite std");
                    (0..len).map(|_| normal.sample(&mut rng)).collect()
                };
                NamedTensor { name, shape, data }
            })
            .collect();
        Self::from_tensors(config, tensors)
    }

    /// Builds a model from tensors in [`ModelConfig::tensor_specs`] order.
    pub fn from_tensors(config: ModelConfig, tensors: Vec<NamedTensor>) -> Result<Self> {
        config.validate()?;
        let specs = config.tensor_specs();
        if specs.len() != tensors.len() {
            return Err(Error::LengthMismatch {
                expected: specs.len(),
                actual: tensors.len(),
            });
        }
        for ((name, shape), t) in specs.iter().zip(&tensors) {
            let expected: usize = shape.iter().product();
            if &t.name != name || &t.shape != shape || t.data.len() != expected {
                return Err(Error::TensorShape {
                    name: t.name.clone(),
                    expected,
                    actual: t.data.len(),
                });
            }
        }
        let mut it = tensors.into_iter().map(|t| t.data);
        let mut next = || it.next().expect("counted above");
        let tok_emb = next();
        let pos_emb = next();
        let layers = (0..config.n_layers)
            .map(|_| Layer {
                ln1_gain: next(),
                ln1_bias: next(),
                wq: next(),
                wk: next(),
                wv: next(),
                wo: next(),
                ln2_gain: next(),
                ln2_bias: next(),
                w1: next(),
                b1: next(),
                w2: next(),
                b2: next(),
            })
            .collect();
        Ok(Self {
            tok_emb,
            pos_emb,
            layers,
            lnf_gain: next(),
            lnf_bias: next(),
            lm_head: next(),
            config,
        })
    }

    /// All parameters, named and ordered as in [`ModelConfig::tensor_specs`].
    pub fn tensors(&self) -> Vec<NamedTensor> {
        let mut data: Vec<&Vec<f32>> = alloc::vec![&self.tok_emb, &self.pos_emb];
        for l in &self.layers {
            data.extend([
                &l.ln1_gain, &l.ln1_bias, &l.wq, &l.wk, &l.wv, &l.wo, &l.ln2_gain, &l.ln2_bias,
                &l.w1, &l.b1, &l.w2, &l.b2,
            ]);
        }
        data.extend([&self.lnf_gain, &self.lnf_bias, &self.lm_head]);
        self.config
            .tensor_specs()
            .into_iter()
            .zip(data)
            .map(|((name, shape), d)| NamedTensor {
                name,
                shape,
                data: d.clone(),
            })
            .collect()
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }
}
