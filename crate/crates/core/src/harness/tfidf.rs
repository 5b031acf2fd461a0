// SPDX-License-Identifier: MIT OR Apache-2.0

//! TF-IDF similarity between a model response and each document, using the
//! K documents themselves as the corpus.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "been", "but", "by", "did", "do", "does", "for",
    "from", "had", "has", "have", "he", "her", "his", "i", "in", "into", "is", "it", "its", "of",
    "on", "or", "she", "so", "than", "that", "the", "their", "them", "then", "there", "these",
    "they", "this", "to", "was", "we", "were", "what", "when", "where", "which", "who", "whom",
    "why", "will", "with", "you",
];

/// Lowercase alphanumeric runs with stopwords removed.
pub fn word_tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| w.to_lowercase())
        .filter(|w| !STOPWORDS.contains(&w.as_str()))
        .collect()
}

fn term_counts(text: &str) -> BTreeMap<String, f64> {
    let mut counts = BTreeMap::new();
    for w in word_tokens(text) {
        *counts.entry(w).or_insert(0.0) += 1.0;
    }
    counts
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TfIdfVector {
    pub weights: BTreeMap<String, f64>,
    pub corpus_doc_count: usize,
    pub norm: f64,
}

impl TfIdfVector {
    pub fn cosine(&self, other: &TfIdfVector) -> f64 {
        if self.norm == 0.0 || other.norm == 0.0 {
            return 0.0;
        }
        let dot: f64 = self
            .weights
            .iter()
            .filter_map(|(t, w)| other.weights.get(t).map(|v| w * v))
            .sum();
        dot / (self.norm * other.norm)
    }
}

/// `idf(term) = ln(K / df(term))` over a small corpus.
#[derive(Clone, Debug, PartialEq)]
pub struct TfIdfModel {
    idf: BTreeMap<String, f64>,
    corpus_doc_count: usize,
}

impl TfIdfModel {
    pub fn fit(corpus: &[&str]) -> Self {
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for doc in corpus {
            for term in term_counts(doc).into_keys() {
                *df.entry(term).or_insert(0) += 1;
            }
        }
        let k = corpus.len() as f64;
        Self {
            idf: df
                .into_iter()
                .map(|(t, n)| (t, libm::log(k / n as f64)))
                .collect(),
            corpus_doc_count: corpus.len(),
        }
    }

    pub fn idf(&self, term: &str) -> Option<f64> {
        self.idf.get(term).copied()
    }

    /// Raw counts times idf; terms absent from the corpus get no weight.
    pub fn vectorize(&self, text: &str) -> TfIdfVector {
        let weights: BTreeMap<String, f64> = term_counts(text)
            .into_iter()
            .filter_map(|(t, tf)| self.idf.get(&t).map(|idf| (t, tf * idf)))
            .filter(|(_, w)| *w > 0.0)
            .collect();
        let norm = libm::sqrt(weights.values().map(|w| w * w).sum());
        TfIdfVector {
            weights,
            corpus_doc_count: self.corpus_doc_count,
            norm,
        }
    }
}

/// Cosine similarity of the response to each document. An empty response
/// (or one sharing no weighted terms) scores 0 everywhere.
pub fn tfidf_dependence(response: &str, docs: &[&str]) -> Vec<f64> {
    let model = TfIdfModel::fit(docs);
    let r = model.vectorize(response);
    docs.iter().map(|d| r.cosine(&model.vectorize(d))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::argsort_descending;
    use alloc::vec;

    #[test]
    fn identical_doc_wins() {
        let docs = ["apple banana cherry", "delta echo foxtrot", "golf hotel india"];
        let s = tfidf_dependence("delta echo foxtrot", &docs);
        assert_eq!(argsort_descending(&s)[0], 1);
        assert!((s[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_and_empty_response() {
        let docs = ["apple banana", "cherry delta"];
        assert_eq!(tfidf_dependence("zulu yankee", &docs), vec![0.0, 0.0]);
        assert_eq!(tfidf_dependence("", &docs), vec![0.0, 0.0]);
    }

    #[test]
    fn tokens_drop_stopwords() {
        assert_eq!(word_tokens("The Cat, and the HAT!"), vec!["cat", "hat"]);
    }
}
