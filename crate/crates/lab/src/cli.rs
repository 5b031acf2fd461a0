// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use crate::commands;
use crate::config::{RunConfig, Settings};
use crate::error::Result;

#[derive(Parser, Debug)]
#[command(name = "fim", version, about = "Positional attention bias lab")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug)]
pub struct Common {
    /// JSON file of settings; flags override it
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub settings: Settings,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic multi-document QA dataset
    Synth(Common),
    /// Write a seeded toy model checkpoint
    InitModel(Common),
    /// Probe per-position dummy attention and calibrated relevance
    EstimateBias(Common),
    /// Rank documents with every scoring method and report recall
    Rerank(Common),
    /// Test the additive bias model on position sweeps
    Hypothesis(Common),
    /// Generate answers, optionally with the attention intervention
    Generate(Common),
    /// Accuracy by gold position for one or more modes
    Eval(Common),
    /// Render saved evaluation reports
    Report {
        #[command(flatten)]
        common: Common,
        /// eval_*.json files written by `eval`
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::InitModel(_) => "init-model",
            Command::EstimateBias(_) => "estimate-bias",
            Command::Rerank(_) => "rerank",
            Command::Hypothesis(_) => "hypothesis",
            Command::Generate(_) => "generate",
            Command::Eval(_) => "eval",
            Command::Report { .. } => "report",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Synth(c)
            | Command::InitModel(c)
            | Command::EstimateBias(c)
            | Command::Rerank(c)
            | Command::Hypothesis(c)
            | Command::Generate(c)
            | Command::Eval(c)
            | Command::Report { common: c, .. } => c,
        }
    }
}

pub fn resolve(command: &Command) -> Result<RunConfig> {
    let common = command.common();
    let file = match &common.config {
        Some(p) => Settings::from_file(p)?,
        None => Settings::default(),
    };
    RunConfig::resolve(command.name(), common.settings.clone().or(file))
}

pub fn run(cli: &Cli) -> Result<Value> {
    let cfg = resolve(&cli.command)?;
    match &cli.command {
        Command::Synth(_) => commands::synth(&cfg),
        Command::InitModel(_) => commands::init_model(&cfg),
        Command::EstimateBias(_) => commands::estimate_bias(&cfg),
        Command::Rerank(_) => commands::rerank(&cfg),
        Command::Hypothesis(_) => commands::hypothesis(&cfg),
        Command::Generate(_) => commands::generate(&cfg),
        Command::Eval(_) => commands::eval(&cfg),
        Command::Report { inputs, .. } => commands::report(&cfg, inputs),
    }
}
