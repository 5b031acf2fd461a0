// SPDX-License-Identifier: MIT OR Apache-2.0

//! Serialization of a multi-document example into `[question, doc_1 … doc_K,
//! question]` with exact token spans for every document body and both
//! question copies.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{Document, MultiDocExample};
use crate::tokenizer::{tokenize, Token};

/// A named, versioned prompt layout.
///
/// `header` and `footer` each hold exactly one `{question}`; `document` holds
/// exactly one `{doc_text}` and may use `{doc_title}` and `{index}` (1-based).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub id: String,
    pub header: String,
    pub document: String,
    pub footer: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self {
            id: "qa-v1".into(),
            header: "Question: {question}\n\n".into(),
            document: "Document [{index}] (Title: {doc_title}) {doc_text}\n".into(),
            footer: "\nQuestion: {question}\nAnswer:".into(),
        }
    }
}

impl PromptTemplate {
    pub fn validate(&self) -> Result<()> {
        let once = |part: &str, what: &str, mark: &str| {
            if part.matches(mark).count() == 1 {
                Ok(())
            } else {
                Err(Error::InvalidTemplate(format!(
                    "{what} must contain exactly one {mark}"
                )))
            }
        };
        once(&self.header, "header", "{question}")?;
        once(&self.footer, "footer", "{question}")?;
        once(&self.document, "document", "{doc_text}")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocSpan {
    pub doc_id: String,
    pub start: usize,
    pub end: usize,
}

impl DocSpan {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentedPrompt {
    pub tokens: Vec<Token>,
    /// In prompt order; ranges exclude headers and separators.
    pub doc_spans: Vec<DocSpan>,
    pub question_spans: Vec<(usize, usize)>,
    pub template_id: String,
}

impl SegmentedPrompt {
    pub fn k(&self) -> usize {
        self.doc_spans.len()
    }

    pub fn span_ranges(&self) -> Vec<(usize, usize)> {
        self.doc_spans.iter().map(|s| (s.start, s.end)).collect()
    }
}

pub fn build_prompt(
    example: &MultiDocExample,
    template: &PromptTemplate,
    max_seq_len: Option<usize>,
) -> Result<SegmentedPrompt> {
    build_prompt_from_parts(&example.question, &example.docs, template, max_seq_len)
}

/// [`build_prompt`] over a bare question and document list (the documents
/// need not satisfy the gold-flag invariant, e.g. during dummy probing).
pub fn build_prompt_from_parts(
    question: &str,
    docs: &[Document],
    template: &PromptTemplate,
    max_seq_len: Option<usize>,
) -> Result<SegmentedPrompt> {
    template.validate()?;
    if docs.is_empty() {
        return Err(Error::TooFewDocuments { need: 1, got: 0 });
    }
    if question.is_empty() {
        return Err(Error::InvalidExample("question is empty".into()));
    }
    let mut text = String::new();
    let mut question_spans = Vec::with_capacity(2);
    let mut doc_spans = Vec::with_capacity(docs.len());

    let q = [("{question}", question)];
    question_spans.push(push_with_slot(&mut text, &template.header, "{question}", question, &q));
    for (i, doc) in docs.iter().enumerate() {
        if doc.text.is_empty() {
            return Err(Error::EmptyDocument(i));
        }
        let index = (i + 1).to_string();
        let subs = [("{doc_title}", doc.title.as_str()), ("{index}", index.as_str())];
        let (start, end) = push_with_slot(&mut text, &template.document, "{doc_text}", &doc.text, &subs);
        doc_spans.push(DocSpan {
            doc_id: doc.id.clone(),
            start,
            end,
        });
    }
    question_spans.push(push_with_slot(&mut text, &template.footer, "{question}", question, &q));

    let tokens = tokenize(&text);
    if let Some(max) = max_seq_len {
        if tokens.len() > max {
            return Err(Error::SequenceTooLong {
                len: tokens.len(),
                max,
            });
        }
    }
    Ok(SegmentedPrompt {
        tokens,
        doc_spans,
        question_spans,
        template_id: template.id.clone(),
    })
}

/// Appends `part` with `slot` replaced by `value`, substituting `others` in
/// the surrounding text only. Returns the byte range `value` occupies.
fn push_with_slot(
    out: &mut String,
    part: &str,
    slot: &str,
    value: &str,
    others: &[(&str, &str)],
) -> (usize, usize) {
    let (before, after) = part.split_once(slot).expect("template validated");
    let fill = |s: &str| substitute(s, others);
    out.push_str(&fill(before));
    let start = out.len();
    out.push_str(value);
    let end = out.len();
    out.push_str(&fill(after));
    (start, end)
}

/// Single-pass placeholder substitution; substituted values are never
/// rescanned.
pub(crate) fn substitute(template: &str, pairs: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    'scan: while !rest.is_empty() {
        for (mark, value) in pairs {
            if let Some(tail) = rest.strip_prefix(mark) {
                out.push_str(value);
                rest = tail;
                continue 'scan;
            }
        }
        let ch = rest.chars().next().expect("nonempty");
        out.push(ch);
        rest = &rest[ch.len_utf8()..];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::place_gold;
    use crate::tokenizer::detokenize;
    use alloc::vec;

    fn abc() -> MultiDocExample {
        let docs = ["A", "B", "C"]
            .iter()
            .enumerate()
            .map(|(i, t)| Document {
                id: format!("d{i}"),
                title: format!("t{i}"),
                text: t.to_string(),
                is_gold: i == 0,
            })
            .collect();
        MultiDocExample::new("q?".into(), vec!["A".into()], docs).unwrap()
    }

    #[test]
    fn structure_and_span_exactness() {
        let ex = abc();
        let p = build_prompt(&ex, &PromptTemplate::default(), None).unwrap();
        assert_eq!(p.k(), 3);
        assert_eq!(p.question_spans.len(), 2);
        let (q0, q1) = (p.question_spans[0], p.question_spans[1]);
        assert!(q0.1 <= p.doc_spans[0].start && p.doc_spans[2].end <= q1.0);
        for (span, doc) in p.doc_spans.iter().zip(&ex.docs) {
            assert_eq!(detokenize(&p.tokens[span.start..span.end]), doc.text);
            assert_eq!(span.doc_id, doc.id);
        }
        assert_eq!(detokenize(&p.tokens[q1.0..q1.1]), "q?");
        assert!(detokenize(&p.tokens).ends_with("Answer:"));
    }

    #[test]
    fn swap_recomputes_spans() {
        let ex = abc();
        let swapped = ex.permuted(&[2, 1, 0]).unwrap();
        let p = build_prompt(&swapped, &PromptTemplate::default(), None).unwrap();
        let ids: Vec<_> = p.doc_spans.iter().map(|s| s.doc_id.as_str()).collect();
        assert_eq!(ids, vec!["d2", "d1", "d0"]);
        assert_eq!(detokenize(&p.tokens[p.doc_spans[0].start..p.doc_spans[0].end]), "C");
        let moved = place_gold(&ex, 1).unwrap();
        let p = build_prompt(&moved, &PromptTemplate::default(), None).unwrap();
        assert_eq!(p.doc_spans[1].doc_id, "d0");
    }

    #[test]
    fn errors() {
        let mut ex = abc();
        assert!(matches!(
            build_prompt(&ex, &PromptTemplate::default(), Some(10)),
            Err(Error::SequenceTooLong { .. })
        ));
        ex.docs[1].text.clear();
        assert_eq!(
            build_prompt(&ex, &PromptTemplate::default(), None),
            Err(Error::EmptyDocument(1))
        );
        let bad = PromptTemplate {
            header: "no slot".into(),
            ..PromptTemplate::default()
        };
        assert!(matches!(
            build_prompt(&abc(), &bad, None),
            Err(Error::InvalidTemplate(_))
        ));
    }

    #[test]
    fn placeholder_text_in_values_is_literal() {
        let mut ex = abc();
        ex.docs[0].title = "{index}".into();
        ex.docs[0].text = "{index}".into();
        let p = build_prompt(&ex, &PromptTemplate::default(), None).unwrap();
        let s = &p.doc_spans[0];
        assert_eq!(detokenize(&p.tokens[s.start..s.end]), "{index}");
        assert!(detokenize(&p.tokens).contains("Document [1] (Title: {index}) {index}"));
    }
}
