// SPDX-License-Identifier: MIT OR Apache-2.0

use fim_core::model::{
    forward, generate_greedy, generate_greedy_observed, sequence_logprob, AttentionHook, Capture,
    Model, ModelConfig, RowSite,
};
use fim_core::tokenizer::{detokenize_bytes, tokenize, Token};
use fim_core::Error;
use proptest::prelude::*;

fn tiny(seed: u64) -> Model {
    let cfg = ModelConfig {
        d_model: 16,
        n_heads: 2,
        n_layers: 2,
        d_ff: 32,
        max_seq_len: 48,
        ..ModelConfig::default()
    };
    Model::seeded(cfg, seed).unwrap()
}

fn tokens(max: usize) -> impl Strategy<Value = Vec<Token>> {
    prop::collection::vec(0u32..256, 1..max)
}

/// Log-softmax in f64 straight from a logit row.
fn log_softmax_f64(logits: &[f32], idx: usize) -> f64 {
    let m = logits.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b as f64));
    let z: f64 = logits.iter().map(|&l| (l as f64 - m).exp()).sum();
    logits[idx] as f64 - m - z.ln()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn captured_rows_are_causal_and_stochastic(seed in any::<u64>(), toks in tokens(24)) {
        let m = tiny(seed);
        let out = forward(&m, &toks, Capture::Full).unwrap();
        let t = out.attention.unwrap();
        for l in 0..t.n_layers() {
            for h in 0..t.n_heads() {
                for q in t.query_positions() {
                    let row = t.row(l, h, q);
                    let sum: f32 = row.iter().sum();
                    prop_assert!((sum - 1.0).abs() <= 1e-5);
                    for (k, &a) in row.iter().enumerate() {
                        prop_assert!((0.0..=1.0).contains(&a));
                        if k > q {
                            prop_assert_eq!(a, 0.0);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn forward_is_deterministic(seed in any::<u64>(), toks in tokens(24)) {
        let a = forward(&tiny(seed), &toks, Capture::LastPosition).unwrap();
        let b = forward(&tiny(seed), &toks, Capture::LastPosition).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn logprob_chain_rule(seed in any::<u64>(), ctx in tokens(12), a in tokens(8), b in tokens(8)) {
        let m = tiny(seed);
        let ab: Vec<Token> = a.iter().chain(&b).copied().collect();
        let ca: Vec<Token> = ctx.iter().chain(&a).copied().collect();
        let whole = sequence_logprob(&m, &ctx, &ab).unwrap();
        let split = sequence_logprob(&m, &ctx, &a).unwrap() + sequence_logprob(&m, &ca, &b).unwrap();
        prop_assert!((whole - split).abs() <= 1e-5, "{whole} vs {split}");
        prop_assert!(whole <= 0.0);
    }

    #[test]
    fn logprob_matches_logit_walk(seed in any::<u64>(), ctx in tokens(16), cont in tokens(10)) {
        let m = tiny(seed);
        let all: Vec<Token> = ctx.iter().chain(&cont).copied().collect();
        let out = forward(&m, &all, Capture::Off).unwrap();
        let mut oracle = 0.0;
        for (i, &tok) in cont.iter().enumerate() {
            oracle += log_softmax_f64(out.logits_at(ctx.len() - 1 + i), tok as usize);
        }
        let got = sequence_logprob(&m, &ctx, &cont).unwrap();
        prop_assert!((got - oracle).abs() <= 1e-6, "{got} vs {oracle}");
    }

    #[test]
    fn identity_hook_is_neutral(seed in any::<u64>(), prompt in tokens(24)) {
        let m = tiny(seed);
        let plain = generate_greedy(&m, &prompt, 8, None).unwrap();
        let mut hook = AttentionHook::identity([0, 1]);
        let hooked = generate_greedy(&m, &prompt, 8, Some(&mut hook)).unwrap();
        prop_assert_eq!(plain, hooked);
    }

    #[test]
    fn renormalising_hook_keeps_rows_stochastic(seed in any::<u64>(), prompt in tokens(24)) {
        let m = tiny(seed);
        let mut hook = AttentionHook::new([1], |_, row: &mut [f32]| {
            let n = row.len();
            for (i, a) in row.iter_mut().enumerate() {
                *a *= 1.0 + (i as f32) / n as f32;
            }
            let s: f32 = row.iter().sum();
            row.iter_mut().for_each(|a| *a /= s);
        });
        let mut sums = Vec::new();
        generate_greedy_observed(&m, &prompt, 6, Some(&mut hook), &mut |site: RowSite, row: &[f32]| {
            sums.push((site.layer, row.iter().sum::<f32>()));
        }).unwrap();
        prop_assert_eq!(sums.len(), 6 * 2 * 2);
        for (_, s) in sums {
            prop_assert!((s - 1.0).abs() <= 1e-5);
        }
    }

    #[test]
    fn tokenizer_round_trips(bytes in prop::collection::vec(any::<u8>(), 0..64)) {
        let toks: Vec<Token> = bytes.iter().map(|&b| b as Token).collect();
        prop_assert_eq!(detokenize_bytes(&toks), bytes);
    }
}

#[test]
fn tokenizer_examples() {
    assert_eq!(tokenize("ab"), vec![97, 98]);
    assert!(tokenize("").is_empty());
    assert_eq!(tokenize(std::str::from_utf8(&detokenize_bytes(&[0, 10, 65])).unwrap()), vec![0, 10, 65]);
}

#[test]
fn greedy_tokens_are_argmax_of_logits() {
    let m = tiny(3);
    let prompt = tokenize("hello there");
    let gen = generate_greedy(&m, &prompt, 5, None).unwrap();
    let mut seq = prompt.clone();
    for &t in &gen {
        let out = forward(&m, &seq, Capture::Off).unwrap();
        let last = out.logits_at(seq.len() - 1);
        let best = (0..last.len()).fold(0, |b, i| if last[i] > last[b] { i } else { b });
        assert_eq!(t as usize, best);
        seq.push(t);
    }
}

#[test]
fn single_token_logprob_is_log_softmax() {
    let m = tiny(9);
    let ctx = tokenize("xyz");
    let out = forward(&m, &ctx, Capture::Off).unwrap();
    let want = log_softmax_f64(out.logits_at(2), 42);
    assert!((sequence_logprob(&m, &ctx, &[42]).unwrap() - want).abs() < 1e-6);
}

#[test]
fn hook_that_breaks_normalisation_is_rejected() {
    let m = tiny(1);
    let mut hook = AttentionHook::new([0], |_, row: &mut [f32]| row[0] += 0.5);
    let err = generate_greedy(&m, &tokenize("abc"), 2, Some(&mut hook)).unwrap_err();
    assert!(matches!(err, Error::HookViolation { layer: 0, .. }));
}

#[test]
fn length_limits() {
    let m = tiny(1);
    let long = vec![1; 49];
    assert!(matches!(forward(&m, &long, Capture::Off), Err(Error::SequenceTooLong { .. })));
    assert!(matches!(generate_greedy(&m, &[1; 40], 9, None), Err(Error::SequenceTooLong { .. })));
    assert!(matches!(sequence_logprob(&m, &[1], &[]), Err(Error::EmptyContinuation)));
}

#[test]
fn hook_rows_cover_only_decode_steps() {
    let m = tiny(2);
    let mut steps = Vec::new();
    let mut hook = AttentionHook::new([0, 1], |site: RowSite, row: &mut [f32]| {
        steps.push((site.step, site.query_pos, row.len()));
    });
    generate_greedy(&m, &tokenize("abcd"), 3, Some(&mut hook)).unwrap();
    drop(hook);
    // 3 decode rows (final prompt position + 2 fed-back tokens) x 2 layers x 2 heads
    assert_eq!(steps.len(), 12);
    assert!(steps.iter().all(|&(s, q, n)| q == 3 + s && n == q + 1));
}
