// SPDX-License-Identifier: MIT OR Apache-2.0

//! Run settings. Each value comes from a command-line flag, else the JSON
//! config file, else the built-in default.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use fim_core::bias::Link;
use fim_core::harness::{EvalMode, Placement};
use fim_core::intervention::DEFAULT_TEMPERATURE;
use fim_core::model::LayerSet;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Settings shared by every subcommand. All optional so flags and the
/// config file can be layered.
#[derive(Args, Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct Settings {
    /// Checkpoint to load; a seeded toy model is used when absent
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// JSONL dataset; a synthetic one is generated when absent
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Number of synthetic examples
    #[arg(long = "synth-n", visible_alias = "n")]
    pub synth_n: Option<usize>,
    /// Documents per synthetic example
    #[arg(long = "synth-k", visible_alias = "k")]
    pub synth_k: Option<usize>,
    /// Comma-separated evaluation modes, or "all"
    #[arg(long)]
    pub mode: Option<String>,
    /// Comma-separated gold positions to sweep, or "all"
    #[arg(long = "gold-pos")]
    pub gold_pos: Option<String>,
    /// Softmax temperature for the intervention
    #[arg(long)]
    pub temp: Option<f64>,
    /// Layers the intervention rewrites: "all", "last-half", or "0,1,..."
    #[arg(long)]
    pub layers: Option<String>,
    /// Layers attention is measured over
    #[arg(long = "measure-layers")]
    pub measure_layers: Option<String>,
    /// Dummy document length in tokens; matched to the documents when absent
    #[arg(long = "dummy-len")]
    pub dummy_len: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; defaults to the available cores
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output format for `report`: csv or svg
    #[arg(long)]
    pub format: Option<String>,
    #[arg(long = "max-new")]
    pub max_new: Option<usize>,
    /// Where reordering puts the best documents: end or beginning
    #[arg(long)]
    pub placement: Option<String>,
    /// Use the planted attention oracle instead of a transformer
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub planted: Option<bool>,
    /// Planted noise standard deviation
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Planted U-bias amplitude
    #[arg(long)]
    pub amplitude: Option<f64>,
    /// Planted relevance spread between distractors and gold
    #[arg(long = "rel-spread")]
    pub rel_spread: Option<f64>,
    /// Planted link: linear or log-linear
    #[arg(long)]
    pub link: Option<String>,
    /// Record per-step intervention diagnostics in `generate`
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub diagnostics: Option<bool>,
    /// Context length of the seeded toy model
    #[arg(long = "max-seq-len")]
    pub max_seq_len: Option<usize>,
}

macro_rules! layer {
    ($a:ident, $b:ident; $($f:ident),*) => {
        Settings { $($f: $a.$f.or($b.$f)),* }
    };
}

impl Settings {
    /// `self` wins over `fallback` field by field.
    pub fn or(self, fallback: Settings) -> Settings {
        let (a, b) = (self, fallback);
        layer!(a, b; model, data, synth_n, synth_k, mode, gold_pos, temp, layers,
            measure_layers, dummy_len, seed, out, workers, format, max_new, placement,
            planted, sigma, amplitude, rel_spread, link, diagnostics, max_seq_len)
    }

    pub fn from_file(path: &Path) -> Result<Settings> {
        let text = fs::read_to_string(path).map_err(LabError::io(path))?;
        serde_json::from_str(&text)
            .map_err(|e| LabError::Usage(format!("config file {}: {e}", path.display())))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GoldPositions {
    All,
    List(Vec<usize>),
}

impl GoldPositions {
    pub fn resolve(&self, k: usize) -> Result<Vec<usize>> {
        match self {
            GoldPositions::All => Ok((0..k).collect()),
            GoldPositions::List(ps) => {
                if let Some(&p) = ps.iter().find(|&&p| p >= k) {
                    return Err(LabError::Usage(format!(
                        "gold position {p} out of range for K = {k}"
                    )));
                }
                Ok(ps.clone())
            }
        }
    }
}

/// Fully resolved and validated settings. Serialized into every output.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub model_path: Option<PathBuf>,
    pub dataset_path: Option<PathBuf>,
    pub synth_n: usize,
    pub synth_k: usize,
    pub modes: Vec<EvalMode>,
    pub gold_positions: Option<GoldPositions>,
    pub temperature: f64,
    pub target_layers: LayerSet,
    pub measure_layers: LayerSet,
    pub dummy_len: Option<usize>,
    pub seed: u64,
    pub out: PathBuf,
    pub workers: usize,
    pub format: Option<String>,
    pub max_new: usize,
    pub placement: Placement,
    pub planted: bool,
    pub sigma: f64,
    pub amplitude: f64,
    pub rel_spread: f64,
    pub link: Link,
    pub diagnostics: bool,
    pub max_seq_len: usize,
}

fn parse_list(s: &str, what: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| LabError::Usage(format!("bad {what} `{p}`")))
        })
        .collect()
}

impl RunConfig {
    pub fn resolve(command: &str, s: Settings) -> Result<RunConfig> {
        let usage = |m: String| LabError::Usage(m);
        let modes = match s.mode.as_deref() {
            None => vec![EvalMode::Vanilla, EvalMode::Calibrated],
            Some("all") => EvalMode::ALL.to_vec(),
            Some(list) => list
                .split(',')
                .map(|m| {
                    EvalMode::parse(m.trim()).ok_or_else(|| usage(format!("unknown mode `{m}`")))
                })
                .collect::<Result<_>>()?,
        };
        let gold_positions = match s.gold_pos.as_deref() {
            None => None,
            Some("all") => Some(GoldPositions::All),
            Some(list) => Some(GoldPositions::List(parse_list(list, "gold position")?)),
        };
        let layer_set = |v: Option<String>, default: LayerSet| -> Result<LayerSet> {
            match v {
                None => Ok(default),
                Some(v) => LayerSet::parse(&v).map_err(|e| usage(e.to_string())),
            }
        };
        let placement = match s.placement.as_deref() {
            None | Some("end") => Placement::End,
            Some("beginning") => Placement::Beginning,
            Some(p) => return Err(usage(format!("unknown placement `{p}`"))),
        };
        let link = match s.link.as_deref() {
            None | Some("linear") => Link::Linear,
            Some("log-linear") => Link::LogLinear,
            Some(l) => return Err(usage(format!("unknown link `{l}`"))),
        };
        let cfg = RunConfig {
            command: command.into(),
            model_path: s.model,
            dataset_path: s.data,
            synth_n: s.synth_n.unwrap_or(20),
            synth_k: s.synth_k.unwrap_or(10),
            modes,
            gold_positions,
            temperature: s.temp.unwrap_or(DEFAULT_TEMPERATURE),
            target_layers: layer_set(s.layers, LayerSet::LastHalf)?,
            measure_layers: layer_set(s.measure_layers, LayerSet::All)?,
            dummy_len: s.dummy_len,
            seed: s.seed.unwrap_or(0),
            out: s.out.unwrap_or_else(|| PathBuf::from("out")),
            workers: s.workers.unwrap_or_else(|| {
                std::thread::available_parallelism().map_or(1, |n| n.get())
            }),
            format: s.format,
            max_new: s.max_new.unwrap_or(16),
            placement,
            planted: s.planted.unwrap_or(false),
            sigma: s.sigma.unwrap_or(0.0),
            amplitude: s.amplitude.unwrap_or(2.0),
            rel_spread: s.rel_spread.unwrap_or(1.0),
            link,
            diagnostics: s.diagnostics.unwrap_or(false),
            max_seq_len: s.max_seq_len.unwrap_or(4096),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(LabError::Usage(m.into()));
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad("--temp must be positive and finite");
        }
        if self.workers == 0 {
            return bad("--workers must be at least 1");
        }
        if self.synth_n == 0 {
            return bad("--synth-n must be at least 1");
        }
        if self.synth_k < 2 {
            return bad("--synth-k must be at least 2");
        }
        if self.dummy_len == Some(0) {
            return bad("--dummy-len must be at least 1");
        }
        if !(self.sigma >= 0.0) {
            return bad("--sigma must be nonnegative");
        }
        if self.model_path.is_some() && self.planted {
            return bad("--model and --planted are mutually exclusive");
        }
        if let Some(f) = &self.format {
            if f != "csv" && f != "svg" {
                return bad("--format must be csv or svg");
            }
        }
        // Synthetic K is known up front; file datasets are checked on load.
        if self.dataset_path.is_none() {
            if let Some(g) = &self.gold_positions {
                g.resolve(self.synth_k)?;
            }
        }
        Ok(())
    }

    pub fn snapshot(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("run config serializes")
    }
}
