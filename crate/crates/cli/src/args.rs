use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use stylerec_core::eval::{BalanceProtocol, ReportFormat};
use stylerec_core::features::ChannelKind;
use stylerec_core::fusion::FusionMode;
use stylerec_core::learner::{Hyperparams, LossKind};

use crate::config::Config;
use crate::failure::{CliResult, Failure};

#[derive(Debug, Parser)]
#[command(name = "stylerec", version, about = "Image style recognition and style-based search")]
pub struct Cli {
    /// TOML file presetting flags; explicit flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute a native feature channel for every image of a manifest.
    Extract(ExtractArgs),
    /// Select hyperparameters on the validation split and train models.
    Train(TrainArgs),
    /// Evaluate trained models on the test split.
    Evaluate(EvaluateArgs),
    /// Rank a captioned corpus by a style classifier.
    Search(SearchArgs),
    /// Rank another corpus by every style classifier.
    CrossRank(CrossRankArgs),
}

fn required<T>(flag: Option<T>, file: Option<T>, name: &str) -> CliResult<T> {
    flag.or(file).ok_or_else(|| Failure::usage(format!("missing required --{name}")))
}

fn list<T: Clone>(flag: Vec<T>, file: &Option<Vec<T>>) -> Vec<T> {
    if flag.is_empty() {
        file.clone().unwrap_or_default()
    } else {
        flag
    }
}

fn parse_with<T: std::str::FromStr<Err = stylerec_core::Error>>(value: &str, flag: &str) -> CliResult<T> {
    value.parse().map_err(|e| Failure::usage(format!("--{flag}: {e}")))
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// lab_hist, gist or saliency.
    #[arg(long)]
    pub channel: Option<String>,
    /// Output feature file (FVEC1); the index is written next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub struct Extract {
    pub manifest: PathBuf,
    pub channel: ChannelKind,
    pub out: PathBuf,
}

impl ExtractArgs {
    pub fn resolve(self, cfg: &Config) -> CliResult<Extract> {
        let channel: String = required(self.channel, cfg.channel.clone(), "channel")?;
        Ok(Extract {
            manifest: required(self.manifest, cfg.manifest.clone(), "manifest")?,
            channel: parse_with(&channel, "channel")?,
            out: required(self.out, cfg.out.clone(), "out")?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    Single,
    Fusion(FusionMode),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Feature files, one per channel (repeatable).
    #[arg(long = "features", value_name = "FILE")]
    pub features: Vec<PathBuf>,
    /// single, fusion or fusion_x_content.
    #[arg(long)]
    pub mode: Option<String>,
    /// Content-score JSON Lines file (fusion_x_content).
    #[arg(long)]
    pub content: Option<PathBuf>,
    /// Output model directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub eta0: Option<f64>,
    /// L1 grid values (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub lambda1: Vec<f64>,
    /// L2 grid values (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub lambda2: Vec<f64>,
    /// Losses to try: hinge, logistic (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub loss: Vec<String>,
}

pub struct Train {
    pub manifest: PathBuf,
    pub features: Vec<PathBuf>,
    pub mode: TrainMode,
    pub content: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: u64,
    pub grid: Vec<Hyperparams>,
}

const DEFAULT_GRID_VALUES: [f64; 4] = [0.0, 1e-7, 1e-5, 1e-3];

impl TrainArgs {
    pub fn resolve(self, cfg: &Config) -> CliResult<Train> {
        let features = list(self.features, &cfg.features);
        if features.is_empty() {
            return Err(Failure::usage("at least one --features file is required"));
        }
        let mode = match self.mode.or(cfg.mode.clone()).as_deref() {
            None | Some("single") => TrainMode::Single,
            Some(m) => TrainMode::Fusion(parse_with(m, "mode")?),
        };
        let content = self.content.or(cfg.content.clone());
        if mode == TrainMode::Fusion(FusionMode::FusionXContent) && content.is_none() {
            return Err(Failure::usage("mode fusion_x_content requires --content"));
        }
        let seed = self.seed.or(cfg.seed).unwrap_or(0);
        let base = Hyperparams {
            epochs: self.epochs.or(cfg.epochs).unwrap_or(Hyperparams::default().epochs),
            eta0: self.eta0.or(cfg.eta0).unwrap_or(Hyperparams::default().eta0),
            seed,
            ..Hyperparams::default()
        };
        let or_default = |v: Vec<f64>| if v.is_empty() { DEFAULT_GRID_VALUES.to_vec() } else { v };
        let lambda1 = or_default(list(self.lambda1, &cfg.lambda1));
        let lambda2 = or_default(list(self.lambda2, &cfg.lambda2));
        let losses: Vec<LossKind> = match list(self.loss, &cfg.loss) {
            v if v.is_empty() => vec![LossKind::Hinge, LossKind::Logistic],
            v => v.iter().map(|s| parse_with(s, "loss")).collect::<CliResult<_>>()?,
        };
        let mut grid = Vec::new();
        for &l1 in &lambda1 {
            for &l2 in &lambda2 {
                for &loss in &losses {
                    let h = Hyperparams {
                        lambda1: l1,
                        lambda2: l2,
                        loss,
                        ..base
                    };
                    h.validate().map_err(|e| Failure::usage(e.to_string()))?;
                    grid.push(h);
                }
            }
        }
        Ok(Train {
            manifest: required(self.manifest, cfg.manifest.clone(), "manifest")?,
            features,
            mode,
            content,
            out: required(self.out, cfg.out.clone(), "out")?,
            seed,
            grid,
        })
    }
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long = "features", value_name = "FILE")]
    pub features: Vec<PathBuf>,
    /// Model directory written by `train`.
    #[arg(long)]
    pub models: Option<PathBuf>,
    /// Content-score file; adds a content/style correlation table.
    #[arg(long)]
    pub content: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Report directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Report formats: json, csv, html (comma separated; default all).
    #[arg(long, value_delimiter = ',')]
    pub format: Vec<String>,
    /// AP balancing: class_uniform (default) or per_class_binary.
    #[arg(long)]
    pub protocol: Option<String>,
}

pub struct Evaluate {
    pub manifest: PathBuf,
    pub features: Vec<PathBuf>,
    pub models: PathBuf,
    pub content: Option<PathBuf>,
    pub seed: u64,
    pub out: PathBuf,
    pub formats: Vec<ReportFormat>,
    pub protocol: BalanceProtocol,
}

impl EvaluateArgs {
    pub fn resolve(self, cfg: &Config) -> CliResult<Evaluate> {
        let features = list(self.features, &cfg.features);
        if features.is_empty() {
            return Err(Failure::usage("at least one --features file is required"));
        }
        let formats = match list(self.format, &cfg.format) {
            v if v.is_empty() => vec![ReportFormat::Json, ReportFormat::Csv, ReportFormat::Html],
            v => v.iter().map(|s| parse_with(s, "format")).collect::<CliResult<_>>()?,
        };
        let protocol = match self.protocol.or(cfg.protocol.clone()) {
            Some(p) => parse_with(&p, "protocol")?,
            None => BalanceProtocol::default(),
        };
        Ok(Evaluate {
            manifest: required(self.manifest, cfg.manifest.clone(), "manifest")?,
            features,
            models: required(self.models, cfg.models.clone(), "models")?,
            content: self.content.or(cfg.content.clone()),
            seed: self.seed.or(cfg.seed).unwrap_or(0),
            out: required(self.out, cfg.out.clone(), "out")?,
            formats,
            protocol,
        })
    }
}

/// Where corpus features come from.
#[derive(Debug, Clone)]
pub enum FeatureSource {
    Files(Vec<PathBuf>),
    Extract(ChannelKind),
}

fn feature_source(files: Vec<PathBuf>, channel: Option<String>, cfg: &Config) -> CliResult<FeatureSource> {
    let files = list(files, &cfg.features);
    if !files.is_empty() {
        return Ok(FeatureSource::Files(files));
    }
    match channel.or(cfg.channel.clone()) {
        Some(c) => Ok(FeatureSource::Extract(parse_with(&c, "channel")?)),
        None => Err(Failure::usage("either --features or --channel is required")),
    }
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    /// Corpus manifest (records may carry captions).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long = "features", value_name = "FILE")]
    pub features: Vec<PathBuf>,
    /// Native channel to extract from the corpus images when no feature
    /// files are given.
    #[arg(long)]
    pub channel: Option<String>,
    #[arg(long)]
    pub models: Option<PathBuf>,
    #[arg(long)]
    pub content: Option<PathBuf>,
    /// Style class to rank by.
    #[arg(long)]
    pub style: Option<String>,
    /// Case-insensitive caption substring.
    #[arg(long)]
    pub text: Option<String>,
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Drop results scoring below this value.
    #[arg(long)]
    pub min_score: Option<f64>,
    /// JSON result file (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// HTML gallery of the results.
    #[arg(long)]
    pub html: Option<PathBuf>,
}

pub struct Search {
    pub manifest: PathBuf,
    pub source: FeatureSource,
    pub models: PathBuf,
    pub content: Option<PathBuf>,
    pub style: String,
    pub text: Option<String>,
    pub top_k: usize,
    pub min_score: Option<f64>,
    pub out: Option<PathBuf>,
    pub html: Option<PathBuf>,
}

const DEFAULT_TOP_K: usize = 10;

fn top_k(flag: Option<usize>, cfg: &Config) -> CliResult<usize> {
    match flag.or(cfg.top_k).unwrap_or(DEFAULT_TOP_K) {
        0 => Err(Failure::usage("--top-k must be at least 1")),
        k => Ok(k),
    }
}

impl SearchArgs {
    pub fn resolve(self, cfg: &Config) -> CliResult<Search> {
        Ok(Search {
            manifest: required(self.manifest, cfg.manifest.clone(), "manifest")?,
            source: feature_source(self.features, self.channel, cfg)?,
            models: required(self.models, cfg.models.clone(), "models")?,
            content: self.content.or(cfg.content.clone()),
            style: required(self.style, cfg.style.clone(), "style")?,
            text: self.text.or(cfg.text.clone()),
            top_k: top_k(self.top_k, cfg)?,
            min_score: self.min_score.or(cfg.min_score),
            out: self.out.or(cfg.out.clone()),
            html: self.html.or(cfg.html.clone()),
        })
    }
}

#[derive(Debug, Args)]
pub struct CrossRankArgs {
    /// Manifest of the corpus to rank.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long = "features", value_name = "FILE")]
    pub features: Vec<PathBuf>,
    #[arg(long)]
    pub channel: Option<String>,
    /// Models trained on another corpus.
    #[arg(long)]
    pub models: Option<PathBuf>,
    #[arg(long)]
    pub content: Option<PathBuf>,
    #[arg(long)]
    pub top_k: Option<usize>,
    /// JSON result file (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub struct CrossRank {
    pub manifest: PathBuf,
    pub source: FeatureSource,
    pub models: PathBuf,
    pub content: Option<PathBuf>,
    pub top_k: usize,
    pub out: Option<PathBuf>,
}

impl CrossRankArgs {
    pub fn resolve(self, cfg: &Config) -> CliResult<CrossRank> {
        Ok(CrossRank {
            manifest: required(self.manifest, cfg.manifest.clone(), "manifest")?,
            source: feature_source(self.features, self.channel, cfg)?,
            models: required(self.models, cfg.models.clone(), "models")?,
            content: self.content.or(cfg.content.clone()),
            top_k: top_k(self.top_k, cfg)?,
            out: self.out.or(cfg.out.clone()),
        })
    }
}
