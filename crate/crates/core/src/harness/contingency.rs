// SPDX-License-Identifier: MIT OR Apache-2.0

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::argsort_descending;
use crate::probe::AttentionProfile;

/// How often the document a response most resembles sat in the
/// higher-attention half of the prompt.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContingencyTable {
    pub higher: usize,
    pub lower: usize,
    pub higher_pct: f64,
    pub lower_pct: f64,
    /// With odd K the middle document counts toward the higher half.
    pub odd_k_rule: alloc::string::String,
}

pub const ODD_K_RULE: &str = "odd K: higher half holds ceil(K/2) documents";

/// Each entry pairs an example's attention profile with its per-document
/// TF-IDF scores against the response. The TF-IDF argmax (lowest index on
/// ties) is located in the attention ranking.
pub fn attention_usage_contingency(results: &[(AttentionProfile, alloc::vec::Vec<f64>)]) -> Result<ContingencyTable> {
    if results.is_empty() {
        return Err(Error::EmptyResults);
    }
    let (mut higher, mut lower) = (0usize, 0usize);
    for (profile, tfidf) in results {
        if profile.per_doc.len() != tfidf.len() {
            return Err(Error::LengthMismatch {
                expected: profile.per_doc.len(),
                actual: tfidf.len(),
            });
        }
        if tfidf.is_empty() {
            return Err(Error::TooFewDocuments { need: 1, got: 0 });
        }
        let used = argsort_descending(tfidf)[0];
        let order = argsort_descending(&profile.per_doc);
        let half = order.len().div_ceil(2);
        if order[..half].contains(&used) {
            higher += 1;
        } else {
            lower += 1;
        }
    }
    let n = results.len() as f64;
    Ok(ContingencyTable {
        higher,
        lower,
        higher_pct: 100.0 * higher as f64 / n,
        lower_pct: 100.0 * lower as f64 / n,
        odd_k_rule: ODD_K_RULE.into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::vec::Vec;

    fn profile(v: Vec<f64>) -> AttentionProfile {
        AttentionProfile {
            span_lens: vec![1; v.len()],
            per_doc: v,
            layer_head_detail: None,
            measured_at: 0,
            layer_set: vec![],
        }
    }

    #[test]
    fn all_higher() {
        let rows: Vec<_> = (0..10)
            .map(|i| {
                let mut att = vec![0.1; 4];
                att[i % 4] = 0.9;
                let mut tf = vec![0.0; 4];
                tf[i % 4] = 1.0;
                (profile(att), tf)
            })
            .collect();
        let t = attention_usage_contingency(&rows).unwrap();
        assert_eq!((t.higher, t.lower), (10, 0));
        assert_eq!((t.higher_pct, t.lower_pct), (100.0, 0.0));
    }

    #[test]
    fn odd_k_middle_counts_high() {
        // attention ranks doc 1 third of five: inside ceil(5/2) = 3
        let rows = vec![(profile(vec![0.5, 0.3, 0.4, 0.1, 0.2]), vec![0.0, 1.0, 0.0, 0.0, 0.0])];
        assert_eq!(attention_usage_contingency(&rows).unwrap().higher, 1);
    }

    #[test]
    fn empty_is_error() {
        assert_eq!(attention_usage_contingency(&[]), Err(Error::EmptyResults));
    }
}
