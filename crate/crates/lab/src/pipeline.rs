// SPDX-License-Identifier: MIT OR Apache-2.0

//! Backend selection, dataset acquisition, and order-preserving parallel maps.

use std::path::PathBuf;

use fim_core::backend::PlantedConfig;
use fim_core::calibration::{DummyDocSpec, DEFAULT_FILLER};
use fim_core::harness::{
    aggregate, evaluate_example, expand_instances, synth_generate, Document, EvalConfig, EvalMode,
    EvalReport, MultiDocExample, SynthConfig,
};
use fim_core::intervention::{CalibrationConfig, CalibrationPlan, DummyChoice};
use fim_core::probe::AttentionProfile;
use fim_core::{Backend, Model, ModelBackend, ModelConfig, PlantedBackend, SegmentedPrompt};
use rayon::prelude::*;

use crate::checkpoint::load_checkpoint;
use crate::config::{GoldPositions, RunConfig};
use crate::dataset::load_jsonl;
use crate::error::{LabError, Result};

/// Either attention source behind one type, so commands stay monomorphic.
pub enum AnyBackend<'m> {
    Model(ModelBackend<'m>),
    Planted(PlantedBackend),
}

macro_rules! delegate {
    ($self:ident, $b:ident => $e:expr) => {
        match $self {
            AnyBackend::Model($b) => $e,
            AnyBackend::Planted($b) => $e,
        }
    };
}

impl Backend for AnyBackend<'_> {
    fn doc_attention(&self, prompt: &SegmentedPrompt) -> fim_core::Result<AttentionProfile> {
        delegate!(self, b => b.doc_attention(prompt))
    }

    fn generate(
        &self,
        prompt: &SegmentedPrompt,
        plan: Option<&CalibrationPlan>,
        max_new: usize,
    ) -> fim_core::Result<String> {
        delegate!(self, b => b.generate(prompt, plan, max_new))
    }

    fn query_generation_score(&self, question: &str, doc: &Document) -> fim_core::Result<f64> {
        delegate!(self, b => b.query_generation_score(question, doc))
    }

    fn relevance_generation_score(&self, question: &str, doc: &Document) -> fim_core::Result<f64> {
        delegate!(self, b => b.relevance_generation_score(question, doc))
    }

    fn max_seq_len(&self) -> Option<usize> {
        delegate!(self, b => b.max_seq_len())
    }
}

pub fn toy_model_config(max_seq_len: usize) -> ModelConfig {
    ModelConfig {
        max_seq_len,
        ..ModelConfig::default()
    }
}

/// The checkpoint named by `--model`, else a toy model seeded with `--seed`.
pub fn load_model(cfg: &RunConfig) -> Result<Model> {
    match &cfg.model_path {
        Some(p) => load_checkpoint(p),
        None => Ok(Model::seeded(toy_model_config(cfg.max_seq_len), cfg.seed)?),
    }
}

pub fn planted_backend(cfg: &RunConfig, dataset: &[MultiDocExample]) -> PlantedBackend {
    PlantedBackend::from_dataset(
        dataset,
        PlantedConfig {
            amplitude: cfg.amplitude,
            sigma: cfg.sigma,
            link: cfg.link,
            seed: cfg.seed,
            rel_spread: cfg.rel_spread,
            ..PlantedConfig::default()
        },
    )
}

/// Runs `f` with the configured backend. The planted backend needs the
/// dataset to assign relevance; the model backend owns its weights for the
/// duration of the call.
pub fn with_backend<R>(
    cfg: &RunConfig,
    dataset: &[MultiDocExample],
    f: impl FnOnce(&AnyBackend) -> Result<R>,
) -> Result<R> {
    if cfg.planted {
        f(&AnyBackend::Planted(planted_backend(cfg, dataset)))
    } else {
        let model = load_model(cfg)?;
        let backend = ModelBackend::new(&model).with_measure_layers(cfg.measure_layers.clone());
        f(&AnyBackend::Model(backend))
    }
}

pub fn load_dataset(cfg: &RunConfig) -> Result<Vec<MultiDocExample>> {
    let ds = match &cfg.dataset_path {
        Some(p) => load_jsonl(p)?,
        None => synth_generate(&SynthConfig::new(cfg.synth_n, cfg.synth_k, cfg.seed))?,
    };
    if ds.is_empty() {
        return Err(LabError::EmptyInput("dataset has no examples".into()));
    }
    if let Some(GoldPositions::List(_)) = &cfg.gold_positions {
        for ex in &ds {
            gold_positions_for(cfg, ex.k())?;
        }
    }
    Ok(ds)
}

fn gold_positions_for(cfg: &RunConfig, k: usize) -> Result<Option<Vec<usize>>> {
    cfg.gold_positions.as_ref().map(|g| g.resolve(k)).transpose()
}

/// Each example once per configured gold position, or as given.
pub fn instances(cfg: &RunConfig, dataset: &[MultiDocExample]) -> Result<Vec<MultiDocExample>> {
    let mut out = Vec::new();
    for ex in dataset {
        let ec = EvalConfig {
            gold_positions: gold_positions_for(cfg, ex.k())?,
            ..EvalConfig::default()
        };
        out.extend(expand_instances(std::slice::from_ref(ex), &ec)?);
    }
    Ok(out)
}

pub fn calibration_config(cfg: &RunConfig) -> CalibrationConfig {
    CalibrationConfig {
        temperature: cfg.temperature,
        target_layers: cfg.target_layers.clone(),
        dummy: match cfg.dummy_len {
            Some(n) => DummyChoice::Fixed(DummyDocSpec {
                filler_text: DEFAULT_FILLER.into(),
                target_token_length: n,
                repeat_to_fill: true,
            }),
            None => DummyChoice::default(),
        },
        ..CalibrationConfig::default()
    }
}

pub fn eval_config(cfg: &RunConfig) -> EvalConfig {
    EvalConfig {
        calibration: calibration_config(cfg),
        measure_layers: cfg.measure_layers.clone(),
        max_new: cfg.max_new,
        placement: cfg.placement,
        seeds: vec![cfg.seed],
        ..EvalConfig::default()
    }
}

pub fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| LabError::Usage(format!("cannot start {workers} workers: {e}")))
}

/// Applies `f` to every item on `workers` threads; results keep input order.
pub fn par_map<T, R, F>(workers: usize, items: &[T], f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> Result<R> + Sync + Send,
{
    thread_pool(workers)?.install(|| {
        items
            .par_iter()
            .enumerate()
            .map(|(i, t)| f(i, t))
            .collect()
    })
}

/// `evaluate` with examples spread over `workers` threads. Aggregation is
/// order-independent, so the report matches the sequential one exactly.
pub fn evaluate_parallel<B: Backend + Sync + ?Sized>(
    backend: &B,
    dataset: &[MultiDocExample],
    mode: EvalMode,
    config: &EvalConfig,
    workers: usize,
) -> Result<EvalReport> {
    if dataset.is_empty() {
        return Err(LabError::EmptyInput("dataset has no examples".into()));
    }
    let instances = expand_instances(dataset, config)?;
    let outcomes = par_map(workers, &instances, |_, ex| {
        Ok(evaluate_example(backend, ex, mode, config)?)
    })?;
    Ok(aggregate(mode, &outcomes, config)?)
}

pub fn out_path(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.out.join(name)
}

