// SPDX-License-Identifier: MIT OR Apache-2.0

//! Attention-bias laboratory core.
//!
//! A small deterministic decoder-only transformer with attention capture and
//! an attention rewrite hook, together with everything needed to measure
//! per-document attention in multi-document prompts, isolate positional
//! (U-shaped) attention bias with a dummy-document probe, recover calibrated
//! document relevance, rerank documents, and rescale attention during greedy
//! decoding so per-document attention follows relevance instead of position.
//!
//! ```text
//! build_prompt ─► doc_attention ─► estimate_bias_profile (K probe passes)
//!                       │                    │
//!                       └──► calibrated_relevance ◄┘
//!                                   │
//!                             compute_alpha(t)
//!                                   │
//!                     generate_greedy + CalibrationHook
//! ```
//!
//! The crate is `no_std` and only needs `alloc`. File formats, dataset IO,
//! reporting and the command-line front end live in the `fim-lab` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod backend;
pub mod bias;
pub mod calibration;
pub mod error;
pub mod harness;
pub mod intervention;
pub mod math;
pub mod model;
pub mod probe;
pub mod prompt;
pub mod rerank;
pub mod tokenizer;

pub use backend::{Backend, CountingBackend, ModelBackend, PlantedBackend};
pub use error::{Error, Result};
pub use model::{AttentionHook, AttentionTensor, Capture, Model, ModelConfig};
pub use prompt::{PromptTemplate, SegmentedPrompt};
