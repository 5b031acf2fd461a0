// SPDX-License-Identifier: MIT OR Apache-2.0

//! File formats, reports, parallel evaluation, and the `fim` command line
//! on top of `fim-core`.

pub mod checkpoint;
pub mod cli;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod pipeline;
pub mod report;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError};
pub use config::{RunConfig, Settings};
pub use dataset::{load_jsonl, save_jsonl};
pub use error::{LabError, Result};
pub use pipeline::evaluate_parallel;
