// SPDX-License-Identifier: MIT OR Apache-2.0

use alloc::vec;
use alloc::vec::Vec;

use super::attention::{AttentionHook, AttentionTensor, Capture, RowSite};
use super::Model;
use crate::error::{Error, Result};
use crate::math::{argmax, log_softmax_at, softmax_in_place};
use crate::tokenizer::Token;

const LN_EPS: f32 = 1e-5;

/// Per-call decode state: the KV cache and the residual stream of the most
/// recent position.
pub struct Session<'m> {
    model: &'m Model,
    keys: Vec<Vec<f32>>,
    values: Vec<Vec<f32>>,
    len: usize,
    hidden: Vec<f32>,
}

impl<'m> Session<'m> {
    pub fn new(model: &'m Model) -> Self {
        let n = model.config().n_layers;
        Self {
            model,
            keys: vec![Vec::new(); n],
            values: vec![Vec::new(); n],
            len: 0,
            hidden: Vec::new(),
        }
    }

    /// Number of positions processed so far.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Runs one position through the stack.
    ///
    /// When `decode_step` is set, `hook` rewrites the rows of its target
    /// layers and `observe` sees every layer's post-hook row. Without a
    /// decode step neither is consulted.
    pub fn step(
        &mut self,
        token: Token,
        decode_step: Option<usize>,
        mut hook: Option<&mut AttentionHook<'_>>,
        observe: &mut dyn FnMut(RowSite, &[f32]),
    ) -> Result<()> {
        let cfg = self.model.config();
        let (d, n_heads, hd) = (cfg.d_model, cfg.n_heads, cfg.head_dim());
        if token as usize >= cfg.vocab_size {
            return Err(Error::TokenOutOfVocab(token));
        }
        if self.len >= cfg.max_seq_len {
            return Err(Error::SequenceTooLong {
                len: self.len + 1,
                max: cfg.max_seq_len,
            });
        }
        let pos = self.len;
        let t = token as usize;
        let mut x: Vec<f32> = self.model.tok_emb[t * d..(t + 1) * d]
            .iter()
            .zip(&self.model.pos_emb[pos * d..(pos + 1) * d])
            .map(|(a, b)| a + b)
            .collect();

        let scale = 1.0 / libm::sqrtf(hd as f32);
        let mut h = vec![0.0; d];
        let mut q = vec![0.0; d];
        let mut k = vec![0.0; d];
        let mut v = vec![0.0; d];
        let mut mixed = vec![0.0; d];
        let mut proj = vec![0.0; d];
        let mut ff = vec![0.0; cfg.d_ff];
        let mut row = vec![0.0f32; pos + 1];

        for (li, layer) in self.model.layers.iter().enumerate() {
            layer_norm(&x, &layer.ln1_gain, &layer.ln1_bias, &mut h);
            matvec(&h, &layer.wq, &mut q);
            matvec(&h, &layer.wk, &mut k);
            matvec(&h, &layer.wv, &mut v);
            self.keys[li].extend_from_slice(&k);
            self.values[li].extend_from_slice(&v);
            let keys = &self.keys[li];
            let values = &self.values[li];

            mixed.iter_mut().for_each(|m| *m = 0.0);
            for head in 0..n_heads {
                let off = head * hd;
                let qh = &q[off..off + hd];
                for (j, r) in row.iter_mut().enumerate() {
                    let kj = &keys[j * d + off..j * d + off + hd];
                    *r = dot(qh, kj) * scale;
                }
                softmax_in_place(&mut row);

                if let Some(step) = decode_step {
                    let site = RowSite {
                        layer: li,
                        head,
                        query_pos: pos,
                        step,
                    };
                    if let Some(hook) = hook.as_deref_mut() {
                        if hook.targets(li) {
                            hook.apply(site, &mut row);
                            check_row(&row, li, head)?;
                        }
                    }
                    observe(site, &row);
                }

                let out = &mut mixed[off..off + hd];
                for (j, &a) in row.iter().enumerate() {
                    let vj = &values[j * d + off..j * d + off + hd];
                    for (o, &vv) in out.iter_mut().zip(vj) {
                        *o += a * vv;
                    }
                }
            }
            matvec(&mixed, &layer.wo, &mut proj);
            x.iter_mut().zip(&proj).for_each(|(a, b)| *a += b);

            layer_norm(&x, &layer.ln2_gain, &layer.ln2_bias, &mut h);
            matvec(&h, &layer.w1, &mut ff);
            ff.iter_mut()
                .zip(&layer.b1)
                .for_each(|(f, b)| *f = gelu(*f + b));
            matvec(&ff, &layer.w2, &mut proj);
            x.iter_mut()
                .zip(proj.iter().zip(&layer.b2))
                .for_each(|(a, (p, b))| *a += p + b);
        }
        self.hidden = x;
        self.len += 1;
        Ok(())
    }

    /// Next-token logits at the most recent position.
    pub fn logits(&self) -> Vec<f32> {
        let cfg = self.model.config();
        assert!(self.len > 0, "no position processed yet");
        let mut h = vec![0.0; cfg.d_model];
        layer_norm(&self.hidden, &self.model.lnf_gain, &self.model.lnf_bias, &mut h);
        let mut logits = vec![0.0; cfg.vocab_size];
        matvec(&h, &self.model.lm_head, &mut logits);
        logits
    }
}

fn check_row(row: &[f32], layer: usize, head: usize) -> Result<()> {
    let sum: f32 = row.iter().sum();
    let bad = row.iter().any(|&a| !(a >= 0.0) || !a.is_finite());
    if bad || (sum - 1.0).abs() > 1e-5 {
        return Err(Error::HookViolation { layer, head, sum });
    }
    Ok(())
}

fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `out = x · w` for row-major `w` of shape `[x.len(), out.len()]`.
fn matvec(x: &[f32], w: &[f32], out: &mut [f32]) {
    let n = out.len();
    out.iter_mut().for_each(|o| *o = 0.0);
    for (i, &xi) in x.iter().enumerate() {
        let wr = &w[i * n..(i + 1) * n];
        for (o, &wv) in out.iter_mut().zip(wr) {
            *o += xi * wv;
        }
    }
}

fn layer_norm(x: &[f32], gain: &[f32], bias: &[f32], out: &mut [f32]) {
    let n = x.len() as f32;
    let mean = x.iter().sum::<f32>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / n;
    let inv = 1.0 / libm::sqrtf(var + LN_EPS);
    for i in 0..x.len() {
        out[i] = (x[i] - mean) * inv * gain[i] + bias[i];
    }
}

fn gelu(x: f32) -> f32 {
    const C: f32 = 0.797_884_6; // sqrt(2/pi)
    0.5 * x * (1.0 + libm::tanhf(C * (x + 0.044_715 * x * x * x)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForwardOutput {
    vocab_size: usize,
    /// `positions × vocab` row-major.
    pub logits: Vec<f32>,
    pub attention: Option<AttentionTensor>,
}

impl ForwardOutput {
    pub fn logits_at(&self, position: usize) -> &[f32] {
        &self.logits[position * self.vocab_size..(position + 1) * self.vocab_size]
    }

    pub fn positions(&self) -> usize {
        self.logits.len() / self.vocab_size
    }
}

/// Runs `tokens` through the model, returning logits for every position and
/// optionally the attention probabilities.
pub fn forward(model: &Model, tokens: &[Token], capture: Capture) -> Result<ForwardOutput> {
    let cfg = model.config();
    let n = tokens.len();
    if n > cfg.max_seq_len {
        return Err(Error::SequenceTooLong {
            len: n,
            max: cfg.max_seq_len,
        });
    }
    let mut tensor = match (capture, n) {
        (_, 0) | (Capture::Off, _) => None,
        (Capture::LastPosition, _) => Some(AttentionTensor::zeros(
            cfg.n_layers,
            cfg.n_heads,
            n,
            n - 1,
            1,
        )),
        (Capture::Full, _) => Some(AttentionTensor::zeros(cfg.n_layers, cfg.n_heads, n, 0, n)),
    };
    let mut session = Session::new(model);
    let mut logits = Vec::with_capacity(n * cfg.vocab_size);
    for (pos, &tok) in tokens.iter().enumerate() {
        let wanted = tensor
            .as_ref()
            .is_some_and(|t| t.query_positions().contains(&pos));
        if wanted {
            let t = tensor.as_mut().expect("checked");
            session.step(tok, Some(0), None, &mut |site, row| {
                t.row_mut(site.layer, site.head, site.query_pos)[..row.len()]
                    .copy_from_slice(row);
            })?;
        } else {
            session.step(tok, None, None, &mut |_, _| {})?;
        }
        logits.extend(session.logits());
    }
    Ok(ForwardOutput {
        vocab_size: cfg.vocab_size,
        logits,
        attention: tensor,
    })
}

/// Natural-log probability of `continuation` following `context`.
pub fn sequence_logprob(model: &Model, context: &[Token], continuation: &[Token]) -> Result<f64> {
    if continuation.is_empty() {
        return Err(Error::EmptyContinuation);
    }
    if context.is_empty() {
        return Err(Error::EmptyContext);
    }
    let max = model.config().max_seq_len;
    let total = context.len() + continuation.len();
    if total > max {
        return Err(Error::SequenceTooLong { len: total, max });
    }
    let mut session = Session::new(model);
    for &tok in context {
        session.step(tok, None, None, &mut |_, _| {})?;
    }
    let mut logprob = 0.0;
    for (i, &tok) in continuation.iter().enumerate() {
        if tok as usize >= model.config().vocab_size {
            return Err(Error::TokenOutOfVocab(tok));
        }
        logprob += log_softmax_at(&session.logits(), tok as usize);
        if i + 1 < continuation.len() {
            session.step(tok, None, None, &mut |_, _| {})?;
        }
    }
    Ok(logprob)
}

/// Greedy decoding of `max_new` tokens.
///
/// A hook is applied to the decode rows only: the final prompt position
/// (step 0) and each generated token fed back in (steps 1..max_new).
pub fn generate_greedy(
    model: &Model,
    prompt: &[Token],
    max_new: usize,
    hook: Option<&mut AttentionHook<'_>>,
) -> Result<Vec<Token>> {
    generate_greedy_observed(model, prompt, max_new, hook, &mut |_, _| {})
}

/// [`generate_greedy`] that also reports every layer's post-hook attention
/// row at each decode step.
pub fn generate_greedy_observed(
    model: &Model,
    prompt: &[Token],
    max_new: usize,
    mut hook: Option<&mut AttentionHook<'_>>,
    observe: &mut dyn FnMut(RowSite, &[f32]),
) -> Result<Vec<Token>> {
    if prompt.is_empty() {
        return Err(Error::EmptyContext);
    }
    let max = model.config().max_seq_len;
    if prompt.len() + max_new > max {
        return Err(Error::SequenceTooLong {
            len: prompt.len() + max_new,
            max,
        });
    }
    let mut session = Session::new(model);
    let last = prompt.len() - 1;
    for (i, &tok) in prompt.iter().enumerate() {
        if i == last {
            session.step(tok, Some(0), hook.as_deref_mut(), observe)?;
        } else {
            session.step(tok, None, None, &mut |_, _| {})?;
        }
    }
    let mut out = Vec::with_capacity(max_new);
    for step in 0..max_new {
        let next = argmax(&session.logits()) as Token;
        out.push(next);
        if step + 1 < max_new {
            session.step(next, Some(step + 1), hook.as_deref_mut(), observe)?;
        }
    }
    Ok(out)
}
