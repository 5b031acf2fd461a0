// SPDX-License-Identifier: MIT OR Apache-2.0

//! JSONL datasets: one `{question, answers, ctxs: [{id?, title, text, is_gold}]}`
//! object per line.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use fim_core::harness::{Document, MultiDocExample};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireCtx {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<String>,
    title: String,
    text: String,
    is_gold: bool,
}

#[derive(Serialize, Deserialize)]
struct WireExample {
    question: String,
    answers: Vec<String>,
    ctxs: Vec<WireCtx>,
}

/// Parses one line. `line_no` is 1-based and seeds ids for contexts that
/// lack one.
pub fn parse_line(line: &str, line_no: usize) -> std::result::Result<MultiDocExample, String> {
    let wire: WireExample = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let gold = wire.ctxs.iter().filter(|c| c.is_gold).count();
    if gold != 1 {
        return Err(format!("expected exactly one gold context, found {gold}"));
    }
    let docs = wire
        .ctxs
        .into_iter()
        .enumerate()
        .map(|(j, c)| Document {
            id: c.id.unwrap_or_else(|| format!("line{line_no}-{j}")),
            title: c.title,
            text: c.text,
            is_gold: c.is_gold,
        })
        .collect();
    MultiDocExample::new(wire.question, wire.answers, docs).map_err(|e| e.to_string())
}

pub fn to_line(example: &MultiDocExample) -> String {
    let wire = WireExample {
        question: example.question.clone(),
        answers: example.answers.clone(),
        ctxs: example
            .docs
            .iter()
            .map(|d| WireCtx {
                id: Some(d.id.clone()),
                title: d.title.clone(),
                text: d.text.clone(),
                is_gold: d.is_gold,
            })
            .collect(),
    };
    serde_json::to_string(&wire).expect("example serializes")
}

/// Blank lines are skipped; the first malformed line aborts the load.
pub fn load_jsonl(path: &Path) -> Result<Vec<MultiDocExample>> {
    let file = fs::File::open(path).map_err(LabError::io(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(LabError::io(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let ex = parse_line(&line, i + 1).map_err(|message| LabError::Dataset {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        })?;
        out.push(ex);
    }
    Ok(out)
}

pub fn save_jsonl(examples: &[MultiDocExample], path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(LabError::io(path))?;
    let mut w = BufWriter::new(file);
    for ex in examples {
        writeln!(w, "{}", to_line(ex)).map_err(LabError::io(path))?;
    }
    w.flush().map_err(LabError::io(path))
}
