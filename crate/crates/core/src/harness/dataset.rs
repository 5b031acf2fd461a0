// SPDX-License-Identifier: MIT OR Apache-2.0

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub title: String,
    pub text: String,
    #[serde(default)]
    pub is_gold: bool,
}

/// A question, its accepted answers, and K retrieved documents of which
/// exactly one (the gold document) contains the answer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultiDocExample {
    pub question: String,
    pub answers: Vec<String>,
    pub docs: Vec<Document>,
    pub gold_position: usize,
}

impl MultiDocExample {
    /// Builds an example, locating the gold document from the flags.
    pub fn new(question: String, answers: Vec<String>, docs: Vec<Document>) -> Result<Self> {
        let gold_position = gold_index(&docs)?;
        let ex = Self {
            question,
            answers,
            docs,
            gold_position,
        };
        ex.validate()?;
        Ok(ex)
    }

    pub fn k(&self) -> usize {
        self.docs.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.docs.len() < 2 {
            return Err(Error::TooFewDocuments {
                need: 2,
                got: self.docs.len(),
            });
        }
        if self.question.is_empty() {
            return Err(Error::InvalidExample("question is empty".into()));
        }
        let gold = gold_index(&self.docs)?;
        if gold != self.gold_position {
            return Err(Error::InvalidExample(format!(
                "gold_position {} but gold flag at {gold}",
                self.gold_position
            )));
        }
        Ok(())
    }

    pub fn gold(&self) -> &Document {
        &self.docs[self.gold_position]
    }

    /// Reorders documents so that `order[i]` (an index into the current
    /// documents) ends up at position `i`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let k = self.k();
        let mut seen = alloc::vec![false; k];
        if order.len() != k {
            return Err(Error::LengthMismatch {
                expected: k,
                actual: order.len(),
            });
        }
        for &o in order {
            if o >= k || seen[o] {
                return Err(Error::InvalidExample("order is not a permutation".into()));
            }
            seen[o] = true;
        }
        let docs: Vec<Document> = order.iter().map(|&i| self.docs[i].clone()).collect();
        let gold_position = order
            .iter()
            .position(|&i| i == self.gold_position)
            .expect("permutation contains gold");
        Ok(Self {
            question: self.question.clone(),
            answers: self.answers.clone(),
            docs,
            gold_position,
        })
    }
}

fn gold_index(docs: &[Document]) -> Result<usize> {
    let mut golds = docs.iter().enumerate().filter(|(_, d)| d.is_gold);
    match (golds.next(), golds.next()) {
        (Some((i, _)), None) => Ok(i),
        (None, _) => Err(Error::InvalidExample("no gold document".into())),
        (Some(_), Some(_)) => Err(Error::InvalidExample("more than one gold document".into())),
    }
}

/// Moves the gold document to `position`, keeping the distractors in their
/// relative order.
pub fn place_gold(example: &MultiDocExample, position: usize) -> Result<MultiDocExample> {
    let k = example.k();
    if position >= k {
        return Err(Error::PositionOutOfRange { position, k });
    }
    let mut order: Vec<usize> = (0..k).filter(|&i| i != example.gold_position).collect();
    order.insert(position, example.gold_position);
    example.permuted(&order)
}

#[cfg(test)]
pub(crate) fn toy_example(k: usize, gold: usize) -> MultiDocExample {
    let docs = (0..k)
        .map(|i| Document {
            id: format!("d{i}"),
            title: format!("T{i}"),
            text: format!("document number {i} text"),
            is_gold: i == gold,
        })
        .collect();
    MultiDocExample::new("what is it?".into(), alloc::vec!["it".into()], docs).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn ids(ex: &MultiDocExample) -> Vec<&str> {
        ex.docs.iter().map(|d| d.id.as_str()).collect()
    }

    #[test]
    fn place_gold_moves_and_keeps_order() {
        let ex = toy_example(3, 0);
        let moved = place_gold(&ex, 2).unwrap();
        assert_eq!(ids(&moved), vec!["d1", "d2", "d0"]);
        assert_eq!(moved.gold_position, 2);
        moved.validate().unwrap();
    }

    #[test]
    fn place_gold_identity_and_range() {
        let ex = toy_example(4, 1);
        assert_eq!(place_gold(&ex, 1).unwrap(), ex);
        assert_eq!(
            place_gold(&ex, 4),
            Err(Error::PositionOutOfRange { position: 4, k: 4 })
        );
    }

    #[test]
    fn validation_catches_bad_gold() {
        let mut ex = toy_example(3, 0);
        ex.docs[2].is_gold = true;
        assert!(ex.validate().is_err());
        ex.docs[0].is_gold = false;
        ex.docs[2].is_gold = false;
        assert!(ex.validate().is_err());
        let one = toy_example(2, 0);
        let mut small = one.clone();
        small.docs.truncate(1);
        assert!(matches!(
            small.validate(),
            Err(Error::TooFewDocuments { .. })
        ));
    }

    #[test]
    fn permuted_rejects_non_permutation() {
        let ex = toy_example(3, 0);
        assert!(ex.permuted(&[0, 0, 1]).is_err());
        assert!(ex.permuted(&[0, 1]).is_err());
    }
}
