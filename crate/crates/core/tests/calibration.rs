// SPDX-License-Identifier: MIT OR Apache-2.0

mod common;

use common::{distinct_rel, example, planted, small_model};
use fim_core::backend::PlantedConfig;
use fim_core::bias::{u_shape, Link};
use fim_core::calibration::{
    calibrated_relevance, estimate_bias_profile, make_dummy, rank_documents, BiasProfile,
    DummyDocSpec, RelevanceScores, ScoreSource, DEFAULT_FILLER,
};
use fim_core::math::argsort_descending;
use fim_core::probe::AttentionProfile;
use fim_core::prompt::build_prompt;
use fim_core::tokenizer::tokenize;
use fim_core::{Backend, CountingBackend, Error, ModelBackend, PlantedBackend, PromptTemplate};
use proptest::prelude::*;

fn spec(target: usize) -> DummyDocSpec {
    DummyDocSpec {
        filler_text: DEFAULT_FILLER.into(),
        target_token_length: target,
        repeat_to_fill: true,
    }
}

fn profile(per_doc: Vec<f64>) -> AttentionProfile {
    AttentionProfile {
        span_lens: vec![1; per_doc.len()],
        per_doc,
        layer_head_detail: None,
        measured_at: 0,
        layer_set: vec![0],
    }
}

fn bias(per_position: Vec<f64>) -> BiasProfile {
    BiasProfile {
        probe_passes: per_position.len(),
        per_position,
        dummy_spec: spec(4),
        layer_set: vec![0],
        template_id: "qa-v1".into(),
    }
}

#[test]
fn dummy_examples() {
    let d = make_dummy(&spec(24)).unwrap();
    assert!(tokenize(&d.text).len().abs_diff(24) <= 2);
    assert!(d.text.starts_with("lorem ipsum lorem"));
    assert_eq!(make_dummy(&spec(24)).unwrap(), d);
    assert_eq!(tokenize(&make_dummy(&spec(1)).unwrap().text).len(), 1);
    let empty = DummyDocSpec {
        filler_text: String::new(),
        ..spec(3)
    };
    assert_eq!(make_dummy(&empty), Err(Error::EmptyFiller));
    let exact = DummyDocSpec {
        filler_text: "0123456789".into(),
        target_token_length: 11,
        repeat_to_fill: false,
    };
    assert_eq!(make_dummy(&exact).unwrap().text, "0123456789");
    let far = DummyDocSpec {
        target_token_length: 20,
        ..exact
    };
    assert!(matches!(make_dummy(&far), Err(Error::DummyLength { .. })));
}

proptest! {
    #[test]
    fn dummy_length_within_ten_percent(target in 1usize..400, filler in "[a-zé ]{1,12}") {
        let d = make_dummy(&DummyDocSpec {
            filler_text: filler,
            target_token_length: target,
            repeat_to_fill: true,
        }).unwrap();
        let n = tokenize(&d.text).len();
        prop_assert!(n >= 1);
        prop_assert!(n.abs_diff(target) as f64 <= (0.1 * target as f64).max(1.0));
    }
}

#[test]
fn planted_probe_is_dummy_rel_plus_bias() {
    let r0 = 0.25;
    let mut b = planted(&[0.1, 0.9, 0.3, 0.5], 0.0, 2.0, Link::Linear, 0);
    b.config.dummy_rel = r0;
    let prof = estimate_bias_profile(&b, &example(4, 1), &PromptTemplate::default(), &spec(20)).unwrap();
    let u = u_shape(4, 2.0, 0.0);
    for (got, b) in prof.per_position.iter().zip(&u) {
        assert_eq!(*got, r0 + b);
    }
    assert_eq!(prof.probe_passes, 4);
    assert_eq!(prof.template_id, "qa-v1");
}

#[test]
fn probing_costs_exactly_k_passes() {
    for k in [2, 5, 10] {
        let b = CountingBackend::new(planted(&vec![0.5; k], 0.0, 1.0, Link::Linear, 0));
        estimate_bias_profile(&b, &example(k, 0), &PromptTemplate::default(), &spec(16)).unwrap();
        assert_eq!(b.forward_passes(), k);
    }
    let m = small_model(2, 2, 1024);
    let b = CountingBackend::new(ModelBackend::new(&m));
    estimate_bias_profile(&b, &example(10, 4), &PromptTemplate::default(), &spec(30)).unwrap();
    assert_eq!(b.forward_passes(), 10);
}

#[test]
fn model_probe_is_reproducible() {
    let m = small_model(6, 2, 1024);
    let b = ModelBackend::new(&m);
    let ex = example(5, 2);
    let a = estimate_bias_profile(&b, &ex, &PromptTemplate::default(), &spec(30)).unwrap();
    let c = estimate_bias_profile(&b, &ex, &PromptTemplate::default(), &spec(30)).unwrap();
    assert_eq!(a, c);
    assert!(a.per_position.iter().all(|&v| v >= 0.0));
}

#[test]
fn calibrated_relevance_examples() {
    let r = calibrated_relevance(&profile(vec![0.5, 0.2, 0.4]), &bias(vec![0.3, 0.1, 0.3])).unwrap();
    for (got, want) in r.per_doc.iter().zip([0.2, 0.1, 0.1]) {
        assert!((got - want).abs() < 1e-15);
    }
    assert_eq!(r.source, ScoreSource::Calibrated);
    let same = calibrated_relevance(&profile(vec![0.3, 0.2]), &bias(vec![0.3, 0.2])).unwrap();
    assert_eq!(same.per_doc, vec![0.0, 0.0]);
    assert!(matches!(
        calibrated_relevance(&profile(vec![0.3, 0.2]), &bias(vec![0.3])),
        Err(Error::LengthMismatch { .. })
    ));
    let mut other_layers = bias(vec![0.3, 0.2]);
    other_layers.layer_set = vec![1];
    assert_eq!(
        calibrated_relevance(&profile(vec![0.3, 0.2]), &other_layers),
        Err(Error::LayerSetMismatch)
    );
}

#[test]
fn ranking_examples() {
    let s = |v: Vec<f64>| RelevanceScores {
        per_doc: v,
        source: ScoreSource::Calibrated,
    };
    assert_eq!(rank_documents(&s(vec![0.2, 0.1, 0.1])), vec![0, 1, 2]);
    assert_eq!(rank_documents(&s(vec![0.4; 5])), vec![0, 1, 2, 3, 4]);
}

fn recover(backend: &PlantedBackend, k: usize, gold: usize) -> Vec<f64> {
    let ex = example(k, gold);
    let t = PromptTemplate::default();
    let p = build_prompt(&ex, &t, None).unwrap();
    let prof = backend.doc_attention(&p).unwrap();
    let b = estimate_bias_profile(backend, &ex, &t, &DummyDocSpec::matched_to(&ex, DEFAULT_FILLER)).unwrap();
    calibrated_relevance(&prof, &b).unwrap().per_doc
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn zero_noise_recovers_true_ranking(
        seed in any::<u64>(),
        k in prop::sample::select(vec![3usize, 10, 20]),
        amp in 0.1f64..5.0,
    ) {
        let rel = distinct_rel(k, 1.0, seed);
        let b = planted(&rel, 0.0, amp, Link::Linear, seed);
        let got = recover(&b, k, (seed % k as u64) as usize);
        prop_assert_eq!(argsort_descending(&got), argsort_descending(&rel));
        for (g, r) in got.iter().zip(&rel) {
            prop_assert!((g - r).abs() < 1e-12);
        }
    }

    #[test]
    fn shifting_profile_and_bias_keeps_ranking(
        cells in prop::collection::vec((0u32..1024, 0u32..1024), 2..12),
        shift in -64i32..64,
    ) {
        // multiples of 1/1024 plus an integer shift: every sum is exact
        let att: Vec<f64> = cells.iter().map(|c| c.0 as f64 / 1024.0).collect();
        let bv: Vec<f64> = cells.iter().map(|c| c.1 as f64 / 1024.0).collect();
        let c = shift as f64;
        let base = calibrated_relevance(&profile(att.clone()), &bias(bv.clone())).unwrap();
        let shifted = calibrated_relevance(
            &profile(att.iter().map(|a| a + c).collect()),
            &bias(bv.iter().map(|b| b + c).collect()),
        ).unwrap();
        prop_assert_eq!(rank_documents(&base), rank_documents(&shifted));
    }
}

#[test]
fn calibration_beats_vanilla_under_noise() {
    // amplitude = spread, sigma = 0.1 spread, 200 examples, gold swept
    let (k, spread) = (10, 1.0);
    let mut hits = (0usize, 0usize);
    for i in 0..200u64 {
        let gold = (i % k as u64) as usize;
        let mut rel = distinct_rel(k, 0.9 * spread, 1000 + i);
        rel[gold] = spread;
        let mut b = PlantedBackend::new(PlantedConfig {
            amplitude: spread,
            sigma: 0.1 * spread,
            seed: i,
            ..PlantedConfig::default()
        });
        for (d, &r) in rel.iter().enumerate() {
            b.insert_doc(format!("d{d}"), r);
        }
        let ex = example(k, gold);
        let p = build_prompt(&ex, &PromptTemplate::default(), None).unwrap();
        let vanilla = b.doc_attention(&p).unwrap().per_doc;
        let calibrated = recover(&b, k, gold);
        hits.0 += usize::from(argsort_descending(&calibrated)[..3].contains(&gold));
        hits.1 += usize::from(argsort_descending(&vanilla)[..3].contains(&gold));
    }
    assert!(hits.0 > hits.1, "calibrated {} vs vanilla {}", hits.0, hits.1);
}
