// SPDX-License-Identifier: MIT OR Apache-2.0

//! One function per subcommand. Each writes its files under the output
//! directory and returns a JSON summary for stdout.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use fim_core::bias::{check_condition, model_fit_correlation, Condition, ConditionReport, Link};
use fim_core::calibration::{calibrated_relevance, estimate_bias_profile};
use fim_core::harness::{evaluate_example, EvalConfig, EvalMode, EvalReport, MultiDocExample};
use fim_core::intervention::{calibrate, calibrated_generate, GenerateConfig, RowDiagnostic};
use fim_core::probe::position_sweep;
use fim_core::prompt::build_prompt;
use fim_core::rerank::{
    recall_at_k, score_calibrated, score_query_generation, score_relevance_generation,
    score_vanilla, RankMethod, RankingResult,
};
use fim_core::{Backend, Model};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::checkpoint::save_checkpoint;
use crate::config::{GoldPositions, RunConfig};
use crate::dataset::save_jsonl;
use crate::error::{LabError, Result};
use crate::pipeline::{
    calibration_config, eval_config, evaluate_parallel, instances, load_dataset,
    out_path, par_map, toy_model_config, with_backend, AnyBackend,
};
use crate::report::{
    render_curve_csv, render_json, render_jsonl, render_matrix_csv, render_probe_csv,
    render_svg, LineChart, ProbeRecord, RankingLine, Series,
};

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(LabError::io(dir))
}

/// Renders everything first so a failure leaves no partial output set.
fn write_all(files: Vec<(PathBuf, String)>) -> Result<Vec<PathBuf>> {
    let mut written = Vec::with_capacity(files.len());
    for (path, content) in files {
        fs::write(&path, content).map_err(LabError::io(&path))?;
        written.push(path);
    }
    Ok(written)
}

fn paths(written: &[PathBuf]) -> Value {
    json!(written.iter().map(|p| p.display().to_string()).collect::<Vec<_>>())
}

pub fn synth(cfg: &RunConfig) -> Result<Value> {
    let ds = load_dataset(&RunConfig {
        dataset_path: None,
        ..cfg.clone()
    })?;
    prepare_out(&cfg.out)?;
    let path = out_path(cfg, "dataset.jsonl");
    save_jsonl(&ds, &path)?;
    let written = write_all(vec![(
        out_path(cfg, "config.json"),
        serde_json::to_string_pretty(&cfg.snapshot())? + "\n",
    )])?;
    Ok(json!({
        "examples": ds.len(),
        "k": cfg.synth_k,
        "dataset": path.display().to_string(),
        "files": paths(&written),
    }))
}

pub fn init_model(cfg: &RunConfig) -> Result<Value> {
    let model = Model::seeded(toy_model_config(cfg.max_seq_len), cfg.seed)?;
    prepare_out(&cfg.out)?;
    let path = out_path(cfg, "model.ckpt");
    save_checkpoint(&model, &path)?;
    Ok(json!({ "model": path.display().to_string(), "config": model.config() }))
}

pub fn estimate_bias(cfg: &RunConfig) -> Result<Value> {
    let ds = load_dataset(cfg)?;
    let items = instances(cfg, &ds)?;
    let cal = calibration_config(cfg);
    let records = with_backend(cfg, &ds, |backend| {
        par_map(cfg.workers, &items, |i, ex| {
            let prompt = build_prompt(ex, &cal.template, backend.max_seq_len())?;
            let profile = backend.doc_attention(&prompt)?;
            let bias = estimate_bias_profile(backend, ex, &cal.template, &cal.dummy.resolve(ex))?;
            let relevance = calibrated_relevance(&profile, &bias)?;
            Ok(ProbeRecord {
                example: i,
                attention: profile.per_doc,
                bias,
                relevance,
            })
        })
    })?;

    let snap = cfg.snapshot();
    let mean = mean_by_position(records.iter().map(|r| r.bias.per_position.as_slice()));
    let mut files = vec![
        (
            out_path(cfg, "bias_profiles.json"),
            render_json("profiles", &records, &snap)?,
        ),
        (
            out_path(cfg, "bias_profiles.csv"),
            render_probe_csv(&records, &snap)?,
        ),
    ];
    if let Some(mean) = &mean {
        let chart = LineChart {
            title: "dummy-document attention by position".into(),
            x_label: "position".into(),
            y_label: "mean attention".into(),
            series: vec![Series {
                label: "bias".into(),
                points: mean.iter().enumerate().map(|(p, &v)| (p as f64, v)).collect(),
            }],
            y_range: None,
        };
        files.push((out_path(cfg, "bias_mean.svg"), render_svg(&chart, &snap)?));
    }
    prepare_out(&cfg.out)?;
    let written = write_all(files)?;
    Ok(json!({
        "examples": records.len(),
        "mean_bias_by_position": mean,
        "files": paths(&written),
    }))
}

/// Position-wise mean when every row has the same length.
fn mean_by_position<'a>(rows: impl Iterator<Item = &'a [f64]>) -> Option<Vec<f64>> {
    let mut acc: Option<Vec<f64>> = None;
    let mut n = 0usize;
    for r in rows {
        match &mut acc {
            None => acc = Some(r.to_vec()),
            Some(a) if a.len() == r.len() => a.iter_mut().zip(r).for_each(|(a, b)| *a += b),
            Some(_) => return None,
        }
        n += 1;
    }
    acc.map(|a| a.into_iter().map(|v| v / n as f64).collect())
}

pub fn rerank(cfg: &RunConfig) -> Result<Value> {
    let ds = load_dataset(cfg)?;
    let items = instances(cfg, &ds)?;
    let cal = calibration_config(cfg);
    let per_example = with_backend(cfg, &ds, |backend| {
        par_map(cfg.workers, &items, |_, ex| {
            let c = calibrate(backend, ex, &cal)?;
            Ok(vec![
                score_vanilla(&c.profile),
                score_calibrated(&c.relevance),
                score_query_generation(backend, ex)?,
                score_relevance_generation(backend, ex)?,
            ])
        })
    })?;

    let mut lines = Vec::new();
    let mut by_method: BTreeMap<&'static str, Vec<(RankingResult, usize)>> = BTreeMap::new();
    for (i, (results, ex)) in per_example.iter().zip(&items).enumerate() {
        for r in results {
            lines.push(RankingLine::new(i, r, ex.gold_position));
            by_method
                .entry(method_name(r.method))
                .or_default()
                .push((r.clone(), ex.gold_position));
        }
    }
    let k_min = items.iter().map(|e| e.k()).min().unwrap_or(0);
    let cutoffs: Vec<usize> = [1, 3, 5].into_iter().filter(|&k| k <= k_min).collect();
    let mut recall = BTreeMap::new();
    let mut csv = String::from("method,k,recall\n");
    for (m, rs) in &by_method {
        let mut row = BTreeMap::new();
        for &k in &cutoffs {
            let r = recall_at_k(rs, k)?;
            csv += &format!("{m},{k},{r}\n");
            row.insert(format!("recall@{k}"), r);
        }
        recall.insert(*m, row);
    }

    let snap = cfg.snapshot();
    let files = vec![
        (out_path(cfg, "rankings.jsonl"), render_jsonl(&lines, &snap)?),
        (
            out_path(cfg, "recall.csv"),
            format!("{}{snap}\n{csv}", crate::report::CONFIG_PREFIX),
        ),
    ];
    prepare_out(&cfg.out)?;
    let written = write_all(files)?;
    Ok(json!({ "examples": items.len(), "recall": recall, "files": paths(&written) }))
}

fn method_name(m: RankMethod) -> &'static str {
    match m {
        RankMethod::VanillaAttention => "vanilla-attention",
        RankMethod::CalibratedAttention => "calibrated-attention",
        RankMethod::QueryGeneration => "query-generation",
        RankMethod::RelevanceGeneration => "relevance-generation",
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HypothesisRow {
    pub example: usize,
    pub condition1: ConditionReport,
    pub condition2: ConditionReport,
    pub fit_linear: Option<f64>,
    pub fit_log_linear: Option<f64>,
}

pub fn hypothesis(cfg: &RunConfig) -> Result<Value> {
    let ds = load_dataset(cfg)?;
    let template = calibration_config(cfg).template;
    let matrices = with_backend(cfg, &ds, |backend| {
        par_map(cfg.workers, &ds, |_, ex| Ok(position_sweep(backend, ex, &template)?))
    })?;
    let rows = matrices
        .iter()
        .enumerate()
        .map(|(i, m)| {
            Ok(HypothesisRow {
                example: i,
                condition1: check_condition(m, Condition::PositionAgreement)?,
                condition2: check_condition(m, Condition::RelevanceAgreement)?,
                fit_linear: model_fit_correlation(m, Link::Linear).ok(),
                fit_log_linear: model_fit_correlation(m, Link::LogLinear).ok(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mean = |f: &dyn Fn(&HypothesisRow) -> Option<f64>| -> Option<f64> {
        let v: Vec<f64> = rows.iter().filter_map(f).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    let summary = json!({
        "examples": rows.len(),
        "condition1": mean(&|r| Some(r.condition1.fraction)),
        "condition2": mean(&|r| Some(r.condition2.fraction)),
        "fit_linear": mean(&|r| r.fit_linear),
        "fit_log_linear": mean(&|r| r.fit_log_linear),
    });

    let snap = cfg.snapshot();
    let files = vec![
        (
            out_path(cfg, "hypothesis.json"),
            render_json("results", &json!({ "mean": summary, "per_example": rows }), &snap)?,
        ),
        (
            out_path(cfg, "attention_matrix.csv"),
            render_matrix_csv(&matrices[0], &snap)?,
        ),
    ];
    prepare_out(&cfg.out)?;
    let written = write_all(files)?;
    let mut out = summary;
    out["files"] = paths(&written);
    Ok(out)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GenerationLine {
    pub example: usize,
    pub mode: EvalMode,
    pub gold_position: usize,
    pub correct: bool,
    pub response: String,
}

pub fn generate(cfg: &RunConfig) -> Result<Value> {
    let ds = load_dataset(cfg)?;
    let items = instances(cfg, &ds)?;
    let ec = eval_config(cfg);
    let want_diag = cfg.diagnostics && cfg.modes.contains(&EvalMode::Calibrated);
    let (lines, diagnostics) = with_backend(cfg, &ds, |backend| {
        let mut lines = Vec::new();
        for &mode in &cfg.modes {
            let outcomes = par_map(cfg.workers, &items, |_, ex| {
                Ok(evaluate_example(backend, ex, mode, &ec)?)
            })?;
            lines.extend(outcomes.into_iter().enumerate().map(|(i, o)| GenerationLine {
                example: i,
                mode,
                gold_position: o.gold_position,
                correct: o.correct,
                response: o.response,
            }));
        }
        let diagnostics = match (want_diag, backend) {
            (true, AnyBackend::Model(b)) => Some(diagnose(b.model(), &items, &ec, cfg.workers)?),
            (true, AnyBackend::Planted(_)) => {
                return Err(LabError::Usage(
                    "--diagnostics needs a transformer backend".into(),
                ))
            }
            _ => None,
        };
        Ok((lines, diagnostics))
    })?;

    let snap = cfg.snapshot();
    let mut files = vec![(out_path(cfg, "generations.jsonl"), render_jsonl(&lines, &snap)?)];
    if let Some(d) = &diagnostics {
        files.push((
            out_path(cfg, "diagnostics.json"),
            render_json("diagnostics", d, &snap)?,
        ));
    }
    prepare_out(&cfg.out)?;
    let written = write_all(files)?;
    let correct = lines.iter().filter(|l| l.correct).count();
    Ok(json!({
        "generations": lines.len(),
        "correct": correct,
        "files": paths(&written),
    }))
}

fn diagnose(
    model: &Model,
    items: &[MultiDocExample],
    ec: &EvalConfig,
    workers: usize,
) -> Result<Vec<Vec<RowDiagnostic>>> {
    let gc = GenerateConfig {
        calibration: ec.calibration.clone(),
        measure_layers: ec.measure_layers.clone(),
        max_new: ec.max_new,
        record_diagnostics: true,
    };
    par_map(workers, items, |_, ex| {
        Ok(calibrated_generate(model, ex, &gc)?.diagnostics)
    })
}

pub fn eval(cfg: &RunConfig) -> Result<Value> {
    let cfg = &RunConfig {
        gold_positions: Some(cfg.gold_positions.clone().unwrap_or(GoldPositions::All)),
        ..cfg.clone()
    };
    let ds = load_dataset(cfg)?;
    let items = instances(cfg, &ds)?;
    let ec = eval_config(cfg);
    let reports = with_backend(cfg, &ds, |backend| {
        cfg.modes
            .iter()
            .map(|&m| evaluate_parallel(backend, &items, m, &ec, cfg.workers))
            .collect::<Result<Vec<_>>>()
    })?;

    let snap = cfg.snapshot();
    let mut files = Vec::new();
    for r in &reports {
        let name = r.mode.name();
        files.push((out_path(cfg, &format!("eval_{name}.json")), render_json("report", r, &snap)?));
        files.push((out_path(cfg, &format!("curve_{name}.csv")), render_curve_csv(r, &snap)?));
    }
    let refs: Vec<&EvalReport> = reports.iter().collect();
    files.push((
        out_path(cfg, "curves.svg"),
        render_svg(&LineChart::accuracy("accuracy by gold position", &refs), &snap)?,
    ));
    prepare_out(&cfg.out)?;
    let written = write_all(files)?;
    let summary: BTreeMap<&str, Value> = reports
        .iter()
        .map(|r| {
            (
                r.mode.name(),
                json!({
                    "overall": r.overall,
                    "by_position": r.accuracy_by_gold_position.iter().map(|p| p.accuracy).collect::<Vec<_>>(),
                }),
            )
        })
        .collect();
    Ok(json!({ "modes": summary, "files": paths(&written) }))
}

#[derive(Deserialize)]
struct StoredReport {
    config: Value,
    report: EvalReport,
}

/// Re-renders saved `eval_*.json` files as CSV curves and/or one SVG chart.
pub fn report(cfg: &RunConfig, inputs: &[PathBuf]) -> Result<Value> {
    if inputs.is_empty() {
        return Err(LabError::Usage("report needs at least one input file".into()));
    }
    let stored = inputs
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).map_err(LabError::io(p))?;
            Ok(serde_json::from_str::<StoredReport>(&text)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let snap = json!({
        "report": cfg.snapshot(),
        "sources": stored.iter().map(|s| &s.config).collect::<Vec<_>>(),
    });
    let format = cfg.format.as_deref();
    let mut files = Vec::new();
    if format != Some("svg") {
        for s in &stored {
            files.push((
                out_path(cfg, &format!("curve_{}.csv", s.report.mode.name())),
                render_curve_csv(&s.report, &snap)?,
            ));
        }
    }
    if format != Some("csv") {
        let refs: Vec<&EvalReport> = stored.iter().map(|s| &s.report).collect();
        files.push((
            out_path(cfg, "curves.svg"),
            render_svg(&LineChart::accuracy("accuracy by gold position", &refs), &snap)?,
        ));
    }
    prepare_out(&cfg.out)?;
    let written = write_all(files)?;
    Ok(json!({ "files": paths(&written) }))
}
