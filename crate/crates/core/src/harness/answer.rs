// SPDX-License-Identifier: MIT OR Apache-2.0

use alloc::string::String;

use serde::{Deserialize, Serialize};

/// Lowercase, punctuation removed, whitespace collapsed to single spaces.
pub fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending_space = false;
    for ch in text.chars() {
        if ch.is_whitespace() {
            pending_space = !out.is_empty();
        } else if ch.is_alphanumeric() {
            if pending_space {
                out.push(' ');
                pending_space = false;
            }
            out.extend(ch.to_lowercase());
        }
    }
    out
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchMode {
    /// Any normalized answer occurs inside the normalized response.
    #[default]
    Substring,
    /// The normalized response equals a normalized answer.
    Exact,
}

pub fn answer_match(response: &str, answers: &[String]) -> bool {
    answer_match_with(response, answers, MatchMode::Substring)
}

pub fn answer_match_with(response: &str, answers: &[String], mode: MatchMode) -> bool {
    let resp = normalize(response);
    answers.iter().map(|a| normalize(a)).any(|a| {
        !a.is_empty()
            && match mode {
                MatchMode::Substring => resp.contains(&a),
                MatchMode::Exact => resp == a,
            }
    })
}
