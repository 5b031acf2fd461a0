// SPDX-License-Identifier: MIT OR Apache-2.0

mod common;

use common::{distinct_rel, doc, example, planted, small_model};
use fim_core::bias::{u_shape, Link};
use fim_core::calibration::{calibrated_relevance, estimate_bias_profile, DummyDocSpec, DEFAULT_FILLER};
use fim_core::harness::MultiDocExample;
use fim_core::math::argsort_descending;
use fim_core::model::{forward, sequence_logprob, Capture};
use fim_core::probe::AttentionProfile;
use fim_core::prompt::build_prompt;
use fim_core::rerank::{
    recall_at_k, score_calibrated, score_query_generation, score_relevance_generation,
    score_vanilla, RankMethod, RankingResult,
};
use fim_core::tokenizer::tokenize;
use fim_core::{Backend, Error, ModelBackend, PromptTemplate};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn profile(per_doc: Vec<f64>) -> AttentionProfile {
    AttentionProfile {
        span_lens: vec![1; per_doc.len()],
        per_doc,
        layer_head_detail: None,
        measured_at: 0,
        layer_set: vec![],
    }
}

fn walk_logprob(m: &fim_core::Model, ctx: &str, cont: &str) -> f64 {
    let (c, x) = (tokenize(ctx), tokenize(cont));
    let all: Vec<u32> = c.iter().chain(&x).copied().collect();
    let out = forward(m, &all, Capture::Off).unwrap();
    x.iter()
        .enumerate()
        .map(|(i, &t)| {
            let row = out.logits_at(c.len() - 1 + i);
            let mx = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b as f64));
            let z: f64 = row.iter().map(|&l| (l as f64 - mx).exp()).sum();
            row[t as usize] as f64 - mx - z.ln()
        })
        .sum()
}

#[test]
fn query_generation_matches_logit_walk() {
    let m = small_model(31, 2, 512);
    let b = ModelBackend::new(&m);
    let ex = example(3, 1);
    let r = score_query_generation(&b, &ex).unwrap();
    assert_eq!(r.method, RankMethod::QueryGeneration);
    for (k, d) in ex.docs.iter().enumerate() {
        let ctx = format!("Document: {}\nQuestion:", d.text);
        let cont = format!(" {}", ex.question);
        assert!((r.scores[k] - walk_logprob(&m, &ctx, &cont)).abs() < 1e-6);
        assert_eq!(r.scores[k], sequence_logprob(&m, &tokenize(&ctx), &tokenize(&cont)).unwrap());
    }
}

#[test]
fn identical_documents_score_identically() {
    let m = small_model(3, 2, 512);
    let b = ModelBackend::new(&m);
    let docs = (0..3).map(|i| doc(&format!("d{i}"), "Same words.", i == 0)).collect();
    let ex = MultiDocExample::new("Q?".into(), vec!["a".into()], docs).unwrap();
    for r in [score_query_generation(&b, &ex).unwrap(), score_relevance_generation(&b, &ex).unwrap()] {
        assert!(r.scores.windows(2).all(|w| w[0] == w[1]));
        assert_eq!(r.permutation, vec![0, 1, 2]);
    }
}

#[test]
fn per_document_scores_ignore_the_other_documents() {
    let m = small_model(8, 2, 512);
    let b = ModelBackend::new(&m);
    let ex = example(4, 1);
    let swapped = ex.permuted(&[3, 1, 2, 0]).unwrap();
    let a = score_relevance_generation(&b, &ex).unwrap();
    let s = score_relevance_generation(&b, &swapped).unwrap();
    assert_eq!((s.scores[0], s.scores[3]), (a.scores[3], a.scores[0]));
    assert_eq!((s.scores[1], s.scores[2]), (a.scores[1], a.scores[2]));
    assert_eq!(score_relevance_generation(&b, &ex).unwrap(), a);
}

#[test]
fn vanilla_ranking_examples() {
    assert_eq!(score_vanilla(&profile(vec![0.1, 0.4, 0.2])).permutation, vec![1, 2, 0]);
    assert_eq!(score_vanilla(&profile(vec![0.3; 4])).permutation, vec![0, 1, 2, 3]);
    // flat relevance: the planted bias alone orders the documents
    let b = planted(&[0.5; 6], 0.0, 1.0, Link::Linear, 0);
    let p = build_prompt(&example(6, 0), &PromptTemplate::default(), None).unwrap();
    let v = score_vanilla(&b.doc_attention(&p).unwrap());
    assert_eq!(v.permutation, argsort_descending(&u_shape(6, 1.0, 0.0)));
}

#[test]
fn recall_examples() {
    let r = RankingResult::from_scores(RankMethod::VanillaAttention, vec![0.9, 0.1, 0.5, 0.7]);
    assert_eq!(recall_at_k(&[(r.clone(), 0)], 3).unwrap(), 1.0);
    assert_eq!(recall_at_k(&[(r.clone(), 1)], 3).unwrap(), 0.0);
    assert_eq!(recall_at_k(&[], 3), Err(Error::EmptyResults));
    assert_eq!(recall_at_k(&[(r, 0)], 0), Err(Error::ZeroK));
}

#[test]
fn recall_matches_exhaustive_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let mut results = Vec::new();
    for i in 0..50 {
        let k = 3 + i % 8;
        let mut perm: Vec<usize> = (0..k).collect();
        perm.shuffle(&mut rng);
        // scores that sort into `perm`
        let mut scores = vec![0.0; k];
        for (rank, &d) in perm.iter().enumerate() {
            scores[d] = (k - rank) as f64;
        }
        let r = RankingResult::from_scores(RankMethod::QueryGeneration, scores);
        assert_eq!(r.permutation, perm);
        results.push((r, (i * 7) % k));
    }
    for k in 1..=10 {
        let mut hits = 0;
        for (r, gold) in &results {
            for (rank, &d) in r.permutation.iter().enumerate() {
                if d == *gold && rank < k {
                    hits += 1;
                }
            }
        }
        assert_eq!(recall_at_k(&results, k).unwrap(), hits as f64 / 50.0);
    }
}

proptest! {
    #[test]
    fn recall_is_monotone_in_k(
        rows in prop::collection::vec((prop::collection::vec(0.0f64..1.0, 5), 0usize..5), 1..20)
    ) {
        let results: Vec<_> = rows
            .into_iter()
            .map(|(s, g)| (RankingResult::from_scores(RankMethod::VanillaAttention, s), g))
            .collect();
        let mut prev = 0.0;
        for k in 1..=5 {
            let r = recall_at_k(&results, k).unwrap();
            prop_assert!(r >= prev);
            prev = r;
        }
        prop_assert_eq!(prev, 1.0);
    }
}

#[test]
fn planted_recall_at_zero_noise() {
    let (k, template) = (10, PromptTemplate::default());
    let bias = u_shape(k, 2.0, 0.0);
    let (mut cal, mut van, mut expected_vanilla_hits) = (Vec::new(), Vec::new(), 0);
    for i in 0..200u64 {
        let gold = (i % k as u64) as usize;
        let mut rel = distinct_rel(k, 0.9, i);
        rel[gold] = 1.0;
        let b = planted(&rel, 0.0, 2.0, Link::Linear, i);
        let ex = example(k, gold);
        let p = build_prompt(&ex, &template, None).unwrap();
        let prof = b.doc_attention(&p).unwrap();
        let bp = estimate_bias_profile(&b, &ex, &template, &DummyDocSpec::matched_to(&ex, DEFAULT_FILLER)).unwrap();
        cal.push((score_calibrated(&calibrated_relevance(&prof, &bp).unwrap()), gold));
        van.push((score_vanilla(&prof), gold));
        // brute force: is the gold among the three largest rel + bias?
        let beaten = (0..k).filter(|&d| rel[d] + bias[d] > rel[gold] + bias[gold]).count();
        expected_vanilla_hits += usize::from(beaten < 3);
    }
    assert_eq!(recall_at_k(&cal, 3).unwrap(), 1.0);
    assert_eq!(recall_at_k(&van, 3).unwrap(), expected_vanilla_hits as f64 / 200.0);
    assert!(recall_at_k(&van, 3).unwrap() < 1.0);
}
