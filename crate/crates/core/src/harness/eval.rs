// SPDX-License-Identifier: MIT OR Apache-2.0

//! End-to-end accuracy by gold-document position for vanilla decoding,
//! calibrated decoding, and the reordering pipelines.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::answer::{answer_match_with, MatchMode};
use super::dataset::{place_gold, MultiDocExample};
use crate::backend::Backend;
use crate::error::{Error, Result};
use crate::intervention::{calibrate, CalibrationConfig, DummyChoice};
use crate::math::argsort_descending;
use crate::model::LayerSet;
use crate::prompt::build_prompt;
use crate::rerank::{score_query_generation, score_relevance_generation};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EvalMode {
    #[serde(rename = "vanilla")]
    Vanilla,
    #[serde(rename = "calibrated")]
    Calibrated,
    /// Reorder by vanilla attention.
    #[serde(rename = "attention-sorting")]
    AttentionSorting,
    /// Reorder by prompted relevance (relevance-generation score).
    #[serde(rename = "prompt-reorder")]
    PromptReorder,
    /// Reorder by query-generation likelihood.
    #[serde(rename = "querygen-reorder")]
    QuerygenReorder,
    #[serde(rename = "querygen-reorder+calibrated")]
    QuerygenReorderCalibrated,
}

impl EvalMode {
    pub const ALL: [EvalMode; 6] = [
        EvalMode::Vanilla,
        EvalMode::Calibrated,
        EvalMode::AttentionSorting,
        EvalMode::PromptReorder,
        EvalMode::QuerygenReorder,
        EvalMode::QuerygenReorderCalibrated,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EvalMode::Vanilla => "vanilla",
            EvalMode::Calibrated => "calibrated",
            EvalMode::AttentionSorting => "attention-sorting",
            EvalMode::PromptReorder => "prompt-reorder",
            EvalMode::QuerygenReorder => "querygen-reorder",
            EvalMode::QuerygenReorderCalibrated => "querygen-reorder+calibrated",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }
}

/// Where reordering pipelines put their best-scored documents.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Placement {
    /// Best document last, nearest to generation.
    #[default]
    End,
    Beginning,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub calibration: CalibrationConfig,
    /// Recorded in reports; the backend decides what it measures.
    pub measure_layers: LayerSet,
    pub max_new: usize,
    /// Evaluate every example once per listed gold position; `None` keeps
    /// each example's own order.
    pub gold_positions: Option<Vec<usize>>,
    pub placement: Placement,
    pub sort_iterations: usize,
    pub match_mode: MatchMode,
    pub seeds: Vec<u64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            calibration: CalibrationConfig::default(),
            measure_layers: LayerSet::All,
            max_new: 16,
            gold_positions: None,
            placement: Placement::End,
            sort_iterations: 1,
            match_mode: MatchMode::Substring,
            seeds: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExampleOutcome {
    /// Gold position as presented, before any reordering.
    pub gold_position: usize,
    pub correct: bool,
    pub response: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositionAccuracy {
    pub position: usize,
    pub accuracy: f64,
    pub correct: usize,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigSnapshot {
    pub template_id: String,
    pub temperature: f64,
    pub measure_layers: LayerSet,
    pub target_layers: LayerSet,
    pub dummy: DummyChoice,
    pub max_new: usize,
    pub placement: Placement,
    pub sort_iterations: usize,
    pub match_mode: MatchMode,
    pub seeds: Vec<u64>,
    pub measurement: String,
}

impl ConfigSnapshot {
    pub fn of(config: &EvalConfig) -> Self {
        Self {
            template_id: config.calibration.template.id.clone(),
            temperature: config.calibration.temperature,
            measure_layers: config.measure_layers.clone(),
            target_layers: config.calibration.target_layers.clone(),
            dummy: config.calibration.dummy.clone(),
            max_new: config.max_new,
            placement: config.placement,
            sort_iterations: config.sort_iterations,
            match_mode: config.match_mode,
            seeds: config.seeds.clone(),
            measurement: "attention read at the final prompt token (first decode step)".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: EvalMode,
    /// Sorted by position.
    pub accuracy_by_gold_position: Vec<PositionAccuracy>,
    pub overall: f64,
    pub n_examples: usize,
    pub config: ConfigSnapshot,
}

/// The examples actually evaluated: each input once per configured gold
/// position, or as given.
pub fn expand_instances(
    dataset: &[MultiDocExample],
    config: &EvalConfig,
) -> Result<Vec<MultiDocExample>> {
    match &config.gold_positions {
        None => Ok(dataset.to_vec()),
        Some(positions) => {
            let mut out = Vec::with_capacity(dataset.len() * positions.len());
            for ex in dataset {
                for &p in positions {
                    out.push(place_gold(ex, p)?);
                }
            }
            Ok(out)
        }
    }
}

/// Puts documents in order of `scores` per `placement`.
pub fn reorder_by_scores(
    example: &MultiDocExample,
    scores: &[f64],
    placement: Placement,
) -> Result<MultiDocExample> {
    let mut order = argsort_descending(scores);
    if placement == Placement::End {
        order.reverse();
    }
    example.permuted(&order)
}

pub fn evaluate_example<B: Backend + ?Sized>(
    backend: &B,
    example: &MultiDocExample,
    mode: EvalMode,
    config: &EvalConfig,
) -> Result<ExampleOutcome> {
    let template = &config.calibration.template;
    let max_len = backend.max_seq_len().map(|m| m.saturating_sub(config.max_new));
    let vanilla = |ex: &MultiDocExample| -> Result<String> {
        let prompt = build_prompt(ex, template, max_len)?;
        backend.generate(&prompt, None, config.max_new)
    };
    let calibrated = |ex: &MultiDocExample| -> Result<String> {
        build_prompt(ex, template, max_len)?;
        let cal = calibrate(backend, ex, &config.calibration)?;
        backend.generate(&cal.prompt, Some(&cal.plan), config.max_new)
    };
    let response = match mode {
        EvalMode::Vanilla => vanilla(example)?,
        EvalMode::Calibrated => calibrated(example)?,
        EvalMode::AttentionSorting => {
            let mut ex = example.clone();
            for _ in 0..config.sort_iterations.max(1) {
                let prompt = build_prompt(&ex, template, max_len)?;
                let profile = backend.doc_attention(&prompt)?;
                ex = reorder_by_scores(&ex, &profile.per_doc, config.placement)?;
            }
            vanilla(&ex)?
        }
        EvalMode::PromptReorder => {
            let r = score_relevance_generation(backend, example)?;
            vanilla(&reorder_by_scores(example, &r.scores, config.placement)?)?
        }
        EvalMode::QuerygenReorder => {
            let r = score_query_generation(backend, example)?;
            vanilla(&reorder_by_scores(example, &r.scores, config.placement)?)?
        }
        EvalMode::QuerygenReorderCalibrated => {
            let r = score_query_generation(backend, example)?;
            calibrated(&reorder_by_scores(example, &r.scores, config.placement)?)?
        }
    };
    Ok(ExampleOutcome {
        gold_position: example.gold_position,
        correct: answer_match_with(&response, &example.answers, config.match_mode),
        response,
    })
}

/// Order-independent reduction of per-example outcomes.
pub fn aggregate(
    mode: EvalMode,
    outcomes: &[ExampleOutcome],
    config: &EvalConfig,
) -> Result<EvalReport> {
    if outcomes.is_empty() {
        return Err(Error::EmptyResults);
    }
    let mut by_pos: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for o in outcomes {
        let e = by_pos.entry(o.gold_position).or_insert((0, 0));
        e.0 += usize::from(o.correct);
        e.1 += 1;
    }
    let correct: usize = by_pos.values().map(|v| v.0).sum();
    Ok(EvalReport {
        mode,
        accuracy_by_gold_position: by_pos
            .into_iter()
            .map(|(position, (c, n))| PositionAccuracy {
                position,
                accuracy: c as f64 / n as f64,
                correct: c,
                n,
            })
            .collect(),
        overall: correct as f64 / outcomes.len() as f64,
        n_examples: outcomes.len(),
        config: ConfigSnapshot::of(config),
    })
}

pub fn evaluate<B: Backend + ?Sized>(
    backend: &B,
    dataset: &[MultiDocExample],
    mode: EvalMode,
    config: &EvalConfig,
) -> Result<EvalReport> {
    if dataset.is_empty() {
        return Err(Error::EmptyResults);
    }
    let outcomes = expand_instances(dataset, config)?
        .iter()
        .map(|ex| evaluate_example(backend, ex, mode, config))
        .collect::<Result<Vec<_>>>()?;
    aggregate(mode, &outcomes, config)
}
