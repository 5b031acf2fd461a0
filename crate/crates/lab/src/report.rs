// SPDX-License-Identifier: MIT OR Apache-2.0

//! Output files. Every writer takes the run's config snapshot and embeds it:
//! a leading `# config: {...}` comment line in CSV, a `config` field in JSON,
//! a leading `{"config": ...}` record in JSONL, and `<metadata>` in SVG.
//!
//! Content is rendered fully in memory before the file is created, so a
//! rejected input never leaves a partial file behind.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use fim_core::bias::Matrix;
use fim_core::calibration::{BiasProfile, RelevanceScores};
use fim_core::harness::EvalReport;
use fim_core::rerank::RankingResult;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{LabError, Result};

pub const CONFIG_PREFIX: &str = "# config: ";

fn write_file(path: &Path, content: &str) -> Result<()> {
    fs::write(path, content).map_err(LabError::io(path))
}

fn config_line(snapshot: &Value) -> String {
    format!("{CONFIG_PREFIX}{snapshot}\n")
}

fn csv_body<F>(fill: F) -> Result<String>
where
    F: FnOnce(&mut csv::Writer<&mut Vec<u8>>) -> Result<()>,
{
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        fill(&mut w)?;
        w.flush().map_err(|e| LabError::Csv(e.into()))?;
    }
    Ok(String::from_utf8(buf).expect("csv output is UTF-8"))
}

/// One row of an accuracy curve CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub position: usize,
    pub accuracy: f64,
    pub n: usize,
}

pub fn curve_rows(report: &EvalReport) -> Vec<CurveRow> {
    report
        .accuracy_by_gold_position
        .iter()
        .map(|p| CurveRow {
            position: p.position,
            accuracy: p.accuracy,
            n: p.n,
        })
        .collect()
}

pub fn render_curve_csv(report: &EvalReport, snapshot: &Value) -> Result<String> {
    let rows = curve_rows(report);
    if rows.is_empty() {
        return Err(LabError::EmptyInput("accuracy curve has no positions".into()));
    }
    let body = csv_body(|w| {
        for r in &rows {
            w.serialize(r)?;
        }
        Ok(())
    })?;
    Ok(config_line(snapshot) + &body)
}

/// Columns `position,accuracy,n`.
pub fn write_curve_csv(report: &EvalReport, snapshot: &Value, path: &Path) -> Result<()> {
    write_file(path, &render_curve_csv(report, snapshot)?)
}

/// Reads the config snapshot line (if any) and rows back.
pub fn parse_curve_csv(text: &str) -> Result<(Option<Value>, Vec<CurveRow>)> {
    let config = text
        .lines()
        .next()
        .and_then(|l| l.strip_prefix(CONFIG_PREFIX))
        .map(serde_json::from_str)
        .transpose()?;
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let rows = r.deserialize().collect::<std::result::Result<Vec<CurveRow>, _>>()?;
    Ok((config, rows))
}

/// Rows are documents, columns positions.
pub fn render_matrix_csv(matrix: &Matrix, snapshot: &Value) -> Result<String> {
    let k = matrix.first().map_or(0, Vec::len);
    if k == 0 {
        return Err(LabError::EmptyInput("matrix is empty".into()));
    }
    if matrix.iter().any(|r| r.len() != k) {
        return Err(LabError::Usage("matrix rows differ in length".into()));
    }
    let body = csv_body(|w| {
        let mut header = vec!["doc".to_string()];
        header.extend((0..k).map(|p| format!("pos{p}")));
        w.write_record(&header)?;
        for (d, row) in matrix.iter().enumerate() {
            let mut rec = vec![d.to_string()];
            rec.extend(row.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        Ok(())
    })?;
    Ok(config_line(snapshot) + &body)
}

pub fn write_matrix_csv(matrix: &Matrix, snapshot: &Value, path: &Path) -> Result<()> {
    write_file(path, &render_matrix_csv(matrix, snapshot)?)
}

pub fn parse_matrix_csv(text: &str) -> Result<Matrix> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    r.records()
        .map(|rec| {
            let rec = rec?;
            rec.iter()
                .skip(1)
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|e| LabError::Usage(format!("bad matrix cell `{v}`: {e}")))
                })
                .collect()
        })
        .collect()
}

/// Per-example probe results for one calibration run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub example: usize,
    pub attention: Vec<f64>,
    pub bias: BiasProfile,
    pub relevance: RelevanceScores,
}

/// Long format: one row per (example, position).
pub fn render_probe_csv(records: &[ProbeRecord], snapshot: &Value) -> Result<String> {
    if records.is_empty() {
        return Err(LabError::EmptyInput("no bias profiles".into()));
    }
    let body = csv_body(|w| {
        w.write_record([
            "example",
            "position",
            "attention",
            "bias",
            "calibrated",
            "template_id",
            "layer_set",
            "dummy_tokens",
        ])?;
        for r in records {
            let layers = r
                .bias
                .layer_set
                .iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join(" ");
            for (p, b) in r.bias.per_position.iter().enumerate() {
                w.write_record([
                    r.example.to_string(),
                    p.to_string(),
                    r.attention[p].to_string(),
                    b.to_string(),
                    r.relevance.per_doc[p].to_string(),
                    r.bias.template_id.clone(),
                    layers.clone(),
                    r.bias.dummy_spec.target_token_length.to_string(),
                ])?;
            }
        }
        Ok(())
    })?;
    Ok(config_line(snapshot) + &body)
}

pub fn render_json<T: Serialize>(key: &str, value: &T, snapshot: &Value) -> Result<String> {
    let mut obj = serde_json::Map::new();
    obj.insert("config".into(), snapshot.clone());
    obj.insert(key.into(), serde_json::to_value(value)?);
    Ok(serde_json::to_string_pretty(&Value::Object(obj))? + "\n")
}

pub fn write_json<T: Serialize>(key: &str, value: &T, snapshot: &Value, path: &Path) -> Result<()> {
    write_file(path, &render_json(key, value, snapshot)?)
}

/// One ranking per line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankingLine {
    pub example: usize,
    pub method: fim_core::rerank::RankMethod,
    pub scores: Vec<f64>,
    pub permutation: Vec<usize>,
    pub gold: usize,
}

impl RankingLine {
    pub fn new(example: usize, result: &RankingResult, gold: usize) -> Self {
        Self {
            example,
            method: result.method,
            scores: result.scores.clone(),
            permutation: result.permutation.clone(),
            gold,
        }
    }
}

pub fn render_jsonl<T: Serialize>(lines: &[T], snapshot: &Value) -> Result<String> {
    if lines.is_empty() {
        return Err(LabError::EmptyInput("no records".into()));
    }
    let mut out = serde_json::to_string(&serde_json::json!({ "config": snapshot }))? + "\n";
    for l in lines {
        out += &serde_json::to_string(l)?;
        out.push('\n');
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(lines: &[T], snapshot: &Value, path: &Path) -> Result<()> {
    write_file(path, &render_jsonl(lines, snapshot)?)
}

/// Skips the leading config record.
pub fn parse_jsonl<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<T>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .skip(1)
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LineChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Fixed y range; derived from the data when absent.
    pub y_range: Option<(f64, f64)>,
}

impl LineChart {
    pub fn accuracy(title: impl Into<String>, reports: &[&EvalReport]) -> Self {
        Self {
            title: title.into(),
            x_label: "gold document position".into(),
            y_label: "accuracy".into(),
            series: reports
                .iter()
                .map(|r| Series {
                    label: r.mode.name().into(),
                    points: r
                        .accuracy_by_gold_position
                        .iter()
                        .map(|p| (p.position as f64, p.accuracy))
                        .collect(),
                })
                .collect(),
            y_range: Some((0.0, 1.0)),
        }
    }
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

pub fn render_svg(chart: &LineChart, snapshot: &Value) -> Result<String> {
    let pts = chart.series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    let mut any = false;
    for &(x, y) in pts {
        if !x.is_finite() || !y.is_finite() {
            return Err(LabError::Usage("chart points must be finite".into()));
        }
        any = true;
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !any {
        return Err(LabError::EmptyInput("chart has no points".into()));
    }
    if let Some((lo, hi)) = chart.y_range {
        y0 = lo.min(y0);
        y1 = hi.max(y1);
    }
    if x1 == x0 {
        x1 = x0 + 1.0;
    }
    if y1 == y0 {
        y1 = y0 + 1.0;
    }

    let (w, h) = (640.0, 400.0);
    let (left, right, top, bottom) = (60.0, 150.0, 40.0, 50.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| top + (1.0 - (y - y0) / (y1 - y0)) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let meta = serde_json::to_string(snapshot)?.replace("]]>", "]]]]><![CDATA[>");
    let _ = writeln!(s, "<metadata><![CDATA[{meta}]]></metadata>");
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        left + pw / 2.0,
        xml_escape(&chart.title)
    );
    let _ = writeln!(
        s,
        r#"<path d="M{left} {top} V{} H{}" fill="none" stroke="black"/>"#,
        top + ph,
        left + pw
    );
    for i in 0..=4 {
        let y = y0 + (y1 - y0) * f64::from(i) / 4.0;
        let py = sy(y);
        let _ = writeln!(
            s,
            r##"<line x1="{}" y1="{py:.1}" x2="{}" y2="{py:.1}" stroke="#ddd"/><text x="{}" y="{:.1}" text-anchor="end">{}</text>"##,
            left,
            left + pw,
            left - 6.0,
            py + 4.0,
            format_tick(y)
        );
    }
    let integral = chart
        .series
        .iter()
        .flat_map(|s| s.points.iter())
        .all(|p| p.0.fract() == 0.0);
    let xticks: Vec<f64> = if integral && x1 - x0 <= 20.0 {
        (x0 as i64..=x1 as i64).map(|v| v as f64).collect()
    } else {
        (0..=4).map(|i| x0 + (x1 - x0) * f64::from(i) / 4.0).collect()
    };
    for x in xticks {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#,
            sx(x),
            top + ph + 16.0,
            format_tick(x)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        left + pw / 2.0,
        h - 12.0,
        xml_escape(&chart.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate(16 {}) rotate(-90)" text-anchor="middle">{}</text>"#,
        top + ph / 2.0,
        xml_escape(&chart.y_label)
    );
    for (i, series) in chart.series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let path = series
            .points
            .iter()
            .map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y)))
            .collect::<Vec<_>>()
            .join(" ");
        let _ = writeln!(
            s,
            r#"<polyline points="{path}" fill="none" stroke="{color}" stroke-width="2"/>"#
        );
        for &(x, y) in &series.points {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{color}"/>"#,
                sx(x),
                sy(y)
            );
        }
        let ly = top + 10.0 + 18.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            left + pw + 12.0,
            left + pw + 32.0,
            left + pw + 38.0,
            ly + 4.0,
            xml_escape(&series.label)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn format_tick(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e9 {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

pub fn write_svg(chart: &LineChart, snapshot: &Value, path: &Path) -> Result<()> {
    write_file(path, &render_svg(chart, snapshot)?)
}
