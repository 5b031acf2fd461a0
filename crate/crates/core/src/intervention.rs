// SPDX-License-Identifier: MIT OR Apache-2.0

//! Generation-time attention rescaling.
//!
//! Calibrated relevance becomes target weights `alpha = softmax(rel / t)`.
//! Within each rewritten attention row, every token of document `k` is
//! scaled by `alpha_k / mean_k * C`, where `mean_k` is the document's mean
//! attention in that row and `C` keeps the total document mass unchanged.
//! Afterwards the per-document means are proportional to `alpha`.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::backend::{Backend, ModelBackend};
use crate::calibration::{
    calibrated_relevance, estimate_bias_profile, BiasProfile, DummyDocSpec, RelevanceScores,
    DEFAULT_FILLER,
};
use crate::error::{Error, Result};
use crate::harness::MultiDocExample;
use crate::math::softmax_with_temperature;
use crate::model::{generate_greedy_observed, AttentionHook, LayerSet, Model};
use crate::probe::AttentionProfile;
use crate::prompt::{build_prompt, PromptTemplate, SegmentedPrompt};
use crate::tokenizer::{detokenize, Token};

pub const DEFAULT_TEMPERATURE: f64 = 5e-5;
pub const DEFAULT_EPSILON_FLOOR: f64 = 1e-12;

/// What a document's current attention is divided by.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScaleMode {
    /// The document's mean attention within the row being rewritten.
    #[default]
    PerRow,
    /// Fixed per-document means (e.g. the layer/head-averaged profile),
    /// shared by every row. Proportionality then holds only on average.
    Global(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPlan {
    pub alpha: Vec<f64>,
    pub temperature: f64,
    pub target_layers: LayerSet,
    pub epsilon_floor: f64,
    pub doc_spans: Vec<(usize, usize)>,
    pub scale: ScaleMode,
}

impl CalibrationPlan {
    pub fn new(
        alpha: Vec<f64>,
        temperature: f64,
        target_layers: LayerSet,
        doc_spans: Vec<(usize, usize)>,
    ) -> Result<Self> {
        let plan = Self {
            alpha,
            temperature,
            target_layers,
            epsilon_floor: DEFAULT_EPSILON_FLOOR,
            doc_spans,
            scale: ScaleMode::PerRow,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha.len() != self.doc_spans.len() {
            return Err(Error::LengthMismatch {
                expected: self.doc_spans.len(),
                actual: self.alpha.len(),
            });
        }
        let sum: f64 = self.alpha.iter().sum();
        if self.alpha.iter().any(|a| !(*a >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::NonFiniteScores);
        }
        if let LayerSet::Explicit(ls) = &self.target_layers {
            if ls.is_empty() {
                return Err(Error::EmptyLayerSet);
            }
        }
        if let ScaleMode::Global(g) = &self.scale {
            if g.len() != self.alpha.len() {
                return Err(Error::LengthMismatch {
                    expected: self.alpha.len(),
                    actual: g.len(),
                });
            }
        }
        Ok(())
    }
}

/// `softmax(rel / t)` with max subtraction.
pub fn compute_alpha(rel: &RelevanceScores, temperature: f64) -> Result<Vec<f64>> {
    softmax_with_temperature(&rel.per_doc, temperature)
}

pub fn doc_masses(row: &[f32], spans: &[(usize, usize)]) -> Result<Vec<f64>> {
    spans
        .iter()
        .map(|&(start, end)| {
            if end > row.len() || start > end {
                return Err(Error::SpanOutOfRow {
                    start,
                    end,
                    len: row.len(),
                });
            }
            Ok(row[start..end].iter().map(|&v| v as f64).sum())
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlanEffect {
    pub pre_mass: Vec<f64>,
    /// Documents that were rescaled; the rest kept their values.
    pub rescaled: Vec<bool>,
    /// No document had mass above the floor, so the row was left unchanged.
    pub all_below_floor: bool,
}

/// Rewrites `row` in place. Tokens outside every document span are never
/// touched. Documents whose mass is at or below `epsilon_floor` keep their
/// values and are left out of the normalisation.
pub fn apply_plan_in_place(row: &mut [f32], plan: &CalibrationPlan) -> Result<PlanEffect> {
    let masses = doc_masses(row, &plan.doc_spans)?;
    let floor = plan.epsilon_floor;
    let rescaled: Vec<bool> = masses.iter().map(|&m| m > floor).collect();
    let unchanged = |rescaled: Vec<bool>, all_below_floor| PlanEffect {
        pre_mass: masses.clone(),
        rescaled,
        all_below_floor,
    };
    if !rescaled.iter().any(|&r| r) {
        return Ok(unchanged(vec![false; masses.len()], true));
    }

    // divisor_k: the attention level alpha_k is measured against
    let divisors: Vec<f64> = plan
        .doc_spans
        .iter()
        .enumerate()
        .map(|(k, &(s, e))| match &plan.scale {
            ScaleMode::PerRow => (masses[k] / (e - s) as f64).max(floor),
            ScaleMode::Global(g) => g[k].max(floor),
        })
        .collect();
    let mut total = 0.0;
    let mut target = 0.0;
    for k in 0..masses.len() {
        if rescaled[k] {
            total += masses[k];
            target += plan.alpha[k] / divisors[k] * masses[k];
        }
    }
    if !(target > 0.0) {
        // every active document has alpha 0: nothing to redistribute onto
        return Ok(unchanged(vec![false; masses.len()], false));
    }
    let c = total / target;
    for (k, &(s, e)) in plan.doc_spans.iter().enumerate() {
        if !rescaled[k] {
            continue;
        }
        let factor = plan.alpha[k] / divisors[k] * c;
        for v in &mut row[s..e] {
            *v = (*v as f64 * factor) as f32;
        }
    }
    Ok(unchanged(rescaled, false))
}

pub fn apply_plan(row: &[f32], plan: &CalibrationPlan) -> Result<(Vec<f32>, PlanEffect)> {
    let mut out = row.to_vec();
    let effect = apply_plan_in_place(&mut out, plan)?;
    Ok((out, effect))
}

/// Pre- and post-rewrite per-document means for one hooked row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowDiagnostic {
    pub step: usize,
    pub layer: usize,
    pub head: usize,
    pub pre_means: Vec<f64>,
    pub post_means: Vec<f64>,
    pub all_below_floor: bool,
}

/// Greedy decoding with the plan applied to every row of its target layers
/// at every decode step.
pub fn generate_with_plan(
    model: &Model,
    prompt: &SegmentedPrompt,
    plan: &CalibrationPlan,
    max_new: usize,
    record: bool,
) -> Result<(Vec<Token>, Vec<RowDiagnostic>)> {
    plan.validate()?;
    if plan.doc_spans.len() != prompt.k() {
        return Err(Error::LengthMismatch {
            expected: prompt.k(),
            actual: plan.doc_spans.len(),
        });
    }
    if let Some(&(start, end)) = plan
        .doc_spans
        .iter()
        .find(|&&(s, e)| s > e || e > prompt.tokens.len())
    {
        return Err(Error::SpanOutOfRow {
            start,
            end,
            len: prompt.tokens.len(),
        });
    }
    let layers = plan.target_layers.resolve(model.config().n_layers)?;
    let mut diagnostics = Vec::new();
    let means = |row: &[f32]| -> Vec<f64> {
        plan.doc_spans
            .iter()
            .map(|&(s, e)| row[s..e].iter().map(|&v| v as f64).sum::<f64>() / (e - s) as f64)
            .collect()
    };
    let tokens = {
        let diag = &mut diagnostics;
        let mut hook = AttentionHook::new(layers, |site, row: &mut [f32]| {
            let pre = record.then(|| means(row));
            // spans were checked against the prompt, and decode rows cover it
            let effect = apply_plan_in_place(row, plan).expect("spans inside decode rows");
            if let Some(pre_means) = pre {
                diag.push(RowDiagnostic {
                    step: site.step,
                    layer: site.layer,
                    head: site.head,
                    pre_means,
                    post_means: means(row),
                    all_below_floor: effect.all_below_floor,
                });
            }
        });
        generate_greedy_observed(model, &prompt.tokens, max_new, Some(&mut hook), &mut |_, _| {})?
    };
    Ok((tokens, diagnostics))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DummyChoice {
    /// Filler repeated to the example's mean document length.
    Matched { filler: String },
    Fixed(DummyDocSpec),
}

impl Default for DummyChoice {
    fn default() -> Self {
        DummyChoice::Matched {
            filler: DEFAULT_FILLER.into(),
        }
    }
}

impl DummyChoice {
    pub fn resolve(&self, example: &MultiDocExample) -> DummyDocSpec {
        match self {
            DummyChoice::Matched { filler } => DummyDocSpec::matched_to(example, filler),
            DummyChoice::Fixed(spec) => spec.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConfig {
    pub template: PromptTemplate,
    pub temperature: f64,
    pub target_layers: LayerSet,
    pub dummy: DummyChoice,
    pub epsilon_floor: f64,
    /// Divide by the profile's averaged means instead of each row's own.
    pub global_scale: bool,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            template: PromptTemplate::default(),
            temperature: DEFAULT_TEMPERATURE,
            target_layers: LayerSet::LastHalf,
            dummy: DummyChoice::default(),
            epsilon_floor: DEFAULT_EPSILON_FLOOR,
            global_scale: false,
        }
    }
}

/// Everything computed before decoding starts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub prompt: SegmentedPrompt,
    pub profile: AttentionProfile,
    pub bias: BiasProfile,
    pub relevance: RelevanceScores,
    pub plan: CalibrationPlan,
}

/// Measures, probes the bias (K extra passes), and builds the plan for
/// `example` in its current document order.
pub fn calibrate<B: Backend + ?Sized>(
    backend: &B,
    example: &MultiDocExample,
    config: &CalibrationConfig,
) -> Result<Calibration> {
    let prompt = build_prompt(example, &config.template, backend.max_seq_len())?;
    let profile = backend.doc_attention(&prompt)?;
    let bias = estimate_bias_profile(
        backend,
        example,
        &config.template,
        &config.dummy.resolve(example),
    )?;
    let relevance = calibrated_relevance(&profile, &bias)?;
    let alpha = compute_alpha(&relevance, config.temperature)?;
    let mut plan = CalibrationPlan::new(
        alpha,
        config.temperature,
        config.target_layers.clone(),
        prompt.span_ranges(),
    )?;
    plan.epsilon_floor = config.epsilon_floor;
    if config.global_scale {
        plan.scale = ScaleMode::Global(profile.per_doc.clone());
    }
    Ok(Calibration {
        prompt,
        profile,
        bias,
        relevance,
        plan,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerateConfig {
    pub calibration: CalibrationConfig,
    pub measure_layers: LayerSet,
    pub max_new: usize,
    pub record_diagnostics: bool,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            calibration: CalibrationConfig::default(),
            measure_layers: LayerSet::All,
            max_new: 16,
            record_diagnostics: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibratedGeneration {
    pub text: String,
    pub tokens: Vec<Token>,
    pub calibration: Calibration,
    pub diagnostics: Vec<RowDiagnostic>,
}

/// The full pipeline on the transformer: measure, probe, calibrate, then
/// decode greedily with the attention rewrite hooked in.
pub fn calibrated_generate(
    model: &Model,
    example: &MultiDocExample,
    config: &GenerateConfig,
) -> Result<CalibratedGeneration> {
    let backend = ModelBackend::new(model).with_measure_layers(config.measure_layers.clone());
    let calibration = calibrate(&backend, example, &config.calibration)?;
    let (tokens, diagnostics) = generate_with_plan(
        model,
        &calibration.prompt,
        &calibration.plan,
        config.max_new,
        config.record_diagnostics,
    )?;
    Ok(CalibratedGeneration {
        text: detokenize(&tokens),
        tokens,
        calibration,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::ScoreSource;

    fn plan(alpha: Vec<f64>, spans: Vec<(usize, usize)>) -> CalibrationPlan {
        CalibrationPlan::new(alpha, 1.0, LayerSet::All, spans).unwrap()
    }

    #[test]
    fn hand_evaluated_two_doc_case() {
        // N = [4, 2], M = [0.2, 0.1]; tokens 0 and 7 are outside documents
        let row: Vec<f32> = vec![0.3, 0.05, 0.05, 0.05, 0.05, 0.05, 0.05, 0.4];
        let p = plan(vec![0.25, 0.75], vec![(1, 5), (5, 7)]);
        let (out, effect) = apply_plan(&row, &p).unwrap();
        let m = doc_masses(&out, &p.doc_spans).unwrap();
        assert!((m[0] - 0.12).abs() < 1e-7);
        assert!((m[1] - 0.18).abs() < 1e-7);
        assert!((m[0] / 4.0 - 0.03).abs() < 1e-7 && (m[1] / 2.0 - 0.09).abs() < 1e-7);
        assert_eq!((out[0], out[7]), (row[0], row[7]));
        assert_eq!(effect.rescaled, vec![true, true]);
    }

    #[test]
    fn uniform_alpha_equal_means_is_fixed_point() {
        let row: Vec<f32> = vec![0.1, 0.2, 0.2, 0.2, 0.2, 0.1];
        let p = plan(vec![0.5, 0.5], vec![(1, 3), (3, 5)]);
        let (out, _) = apply_plan(&row, &p).unwrap();
        for (a, b) in out.iter().zip(&row) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn floor_and_span_errors() {
        let row: Vec<f32> = vec![1.0, 0.0, 0.0];
        let p = plan(vec![0.5, 0.5], vec![(1, 2), (2, 3)]);
        let (out, effect) = apply_plan(&row, &p).unwrap();
        assert!(effect.all_below_floor);
        assert_eq!(out, row);
        let p = plan(vec![0.5, 0.5], vec![(1, 2), (2, 9)]);
        assert!(matches!(apply_plan(&row, &p), Err(Error::SpanOutOfRow { .. })));
    }

    #[test]
    fn zero_mass_doc_keeps_values() {
        let row: Vec<f32> = vec![0.5, 0.0, 0.0, 0.25, 0.25];
        let p = plan(vec![0.9, 0.1], vec![(1, 3), (3, 5)]);
        let (out, effect) = apply_plan(&row, &p).unwrap();
        assert_eq!(effect.rescaled, vec![false, true]);
        assert_eq!(&out[1..3], &[0.0, 0.0]);
        assert!((out[3] + out[4] - 0.5).abs() < 1e-7);
    }

    #[test]
    fn alpha_examples() {
        let rel = |v: &[f64]| RelevanceScores {
            per_doc: v.to_vec(),
            source: ScoreSource::Calibrated,
        };
        let a = compute_alpha(&rel(&[0.7, 0.7, 0.7]), 3.0).unwrap();
        assert!(a.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-15));
        let sharp = compute_alpha(&rel(&[1.0, 0.0]), 1e-6).unwrap();
        assert_eq!(sharp, vec![1.0, 0.0]);
        assert!(compute_alpha(&rel(&[1.0]), 0.0).is_err());
    }

    #[test]
    fn plan_validation() {
        assert!(CalibrationPlan::new(vec![0.5, 0.6], 1.0, LayerSet::All, vec![(0, 1), (1, 2)]).is_err());
        assert!(CalibrationPlan::new(vec![1.0], 1.0, LayerSet::All, vec![(0, 1), (1, 2)]).is_err());
        assert!(CalibrationPlan::new(vec![1.0], 1.0, LayerSet::Explicit(vec![]), vec![(0, 1)]).is_err());
    }
}
