// SPDX-License-Identifier: MIT OR Apache-2.0
#![allow(dead_code)]

use fim_core::backend::PlantedConfig;
use fim_core::bias::Link;
use fim_core::harness::{Document, MultiDocExample};
use fim_core::{Model, ModelConfig, PlantedBackend};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn small_model(seed: u64, n_layers: usize, max_seq_len: usize) -> Model {
    let cfg = ModelConfig {
        d_model: 32,
        n_heads: 4,
        n_layers,
        d_ff: 64,
        max_seq_len,
        ..ModelConfig::default()
    };
    Model::seeded(cfg, seed).unwrap()
}

pub fn doc(id: &str, text: &str, gold: bool) -> Document {
    Document {
        id: id.into(),
        title: format!("Title {id}"),
        text: text.into(),
        is_gold: gold,
    }
}

/// `k` short documents with ids `d0..`; the gold one carries the answer.
pub fn example(k: usize, gold: usize) -> MultiDocExample {
    let docs = (0..k)
        .map(|i| {
            let text = if i == gold {
                "The colour of the gate is teal.".to_string()
            } else {
                format!("Filler sentence number {i} about nothing.")
            };
            doc(&format!("d{i}"), &text, i == gold)
        })
        .collect();
    MultiDocExample::new("What colour is the gate?".into(), vec!["teal".into()], docs).unwrap()
}

/// A planted backend knowing documents `d0..d{k-1}` with relevance `rel`.
pub fn planted(rel: &[f64], sigma: f64, amplitude: f64, link: Link, seed: u64) -> PlantedBackend {
    let mut b = PlantedBackend::new(PlantedConfig {
        amplitude,
        sigma,
        link,
        seed,
        ..PlantedConfig::default()
    });
    for (i, &r) in rel.iter().enumerate() {
        b.insert_doc(format!("d{i}"), r);
    }
    b
}

/// Distinct relevance values drawn uniformly from `[0, spread)`.
pub fn distinct_rel(k: usize, spread: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let v: Vec<f64> = (0..k).map(|_| rng.random::<f64>() * spread).collect();
        let mut s = v.clone();
        s.sort_by(f64::total_cmp);
        if s.windows(2).all(|w| w[0] != w[1]) {
            return v;
        }
    }
}
