//! Model directories written by `train`.
//!
//! ```text
//! <dir>/run.json                 {"format": "RUN1", mode, channels, classes, seed, split_manifest}
//! <dir>/<channel>/               per-channel one-vs-all models + validation.csv
//! <dir>/fusion/                  stage-2 model + validation.csv (fusion modes)
//! <dir>/split_manifest.jsonl     written when the input manifest had no splits
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stylerec_core::data::{load_manifest, Manifest};
use stylerec_core::eval::ScoreTable;
use stylerec_core::features::{load_external_channel, FeatureChannel};
use stylerec_core::fusion::{load_content_scores, ContentScores, FusionMode, FusionModel};
use stylerec_core::learner::{load_multi_model, MultiModel};
use stylerec_core::Error;

use crate::failure::{CliResult, Failure};

pub const RUN_FORMAT: &str = "RUN1";
pub const RUN_FILE: &str = "run.json";
pub const FUSION_DIR: &str = "fusion";
pub const SPLIT_MANIFEST: &str = "split_manifest.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunDescriptor {
    pub format: String,
    pub mode: String,
    pub channels: Vec<String>,
    pub classes: Vec<String>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split_manifest: Option<String>,
}

impl RunDescriptor {
    pub fn fusion_mode(&self) -> Option<FusionMode> {
        self.mode.parse().ok()
    }
}

pub struct LoadedRun {
    pub dir: PathBuf,
    pub desc: RunDescriptor,
    pub stage1: Vec<MultiModel>,
    pub fusion: Option<FusionModel>,
}

pub fn load_run(dir: &Path) -> CliResult<LoadedRun> {
    let path = dir.join(RUN_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::Io {
        path: path.clone(),
        source: e,
    })?;
    let desc: RunDescriptor = serde_json::from_str(&text).map_err(|e| Error::Parse {
        location: path.display().to_string(),
        message: e.to_string(),
    })?;
    if desc.format != RUN_FORMAT {
        return Err(Error::Parse {
            location: path.display().to_string(),
            message: format!("unsupported run format `{}`", desc.format),
        }
        .into());
    }
    let stage1 = desc
        .channels
        .iter()
        .map(|c| load_multi_model(dir.join(c)))
        .collect::<Result<Vec<_>, _>>()?;
    let fusion = match desc.fusion_mode() {
        Some(_) => Some(FusionModel::load(dir.join(FUSION_DIR), stage1.clone())?),
        None => None,
    };
    Ok(LoadedRun {
        dir: dir.to_path_buf(),
        desc,
        stage1,
        fusion,
    })
}

/// Load the manifest; when it carries no split assignment, fall back to the
/// split manifest stored with the run.
pub fn manifest_for_run(path: &Path, run: &LoadedRun) -> CliResult<Manifest> {
    let m = load_manifest(path)?;
    if m.is_split() {
        return Ok(m);
    }
    match &run.desc.split_manifest {
        Some(name) => {
            let root = m.root().map(Path::to_path_buf);
            let split = load_manifest(run.dir.join(name))?;
            Ok(match root {
                Some(r) => split.with_root(r),
                None => split,
            })
        }
        None => Err(Error::Validation(format!("{} has no split assignment", path.display())).into()),
    }
}

pub fn load_channels(paths: &[PathBuf]) -> CliResult<Vec<FeatureChannel>> {
    let channels = paths
        .iter()
        .map(load_external_channel)
        .collect::<Result<Vec<_>, _>>()?;
    for (i, c) in channels.iter().enumerate() {
        if channels[..i].iter().any(|o| o.name() == c.name()) {
            return Err(Failure::usage(format!("channel `{}` given twice", c.name())));
        }
        if c.name() == FUSION_DIR || c.name().parse::<FusionMode>().is_ok() {
            return Err(Failure::usage(format!("channel name `{}` is reserved", c.name())));
        }
    }
    Ok(channels)
}

/// Channels in `names` order, or an error naming the first missing one.
pub fn select_channels<'a>(names: &[String], channels: &'a [FeatureChannel]) -> CliResult<Vec<&'a FeatureChannel>> {
    names
        .iter()
        .map(|n| {
            channels.iter().find(|c| c.name() == n).ok_or_else(|| {
                Failure::Data(Error::Validation(format!("no feature file for model channel `{n}`")))
            })
        })
        .collect()
}

pub fn load_content(path: Option<&Path>) -> CliResult<Option<BTreeMap<String, ContentScores>>> {
    Ok(match path {
        Some(p) => Some(load_content_scores(p)?),
        None => None,
    })
}

/// A scorer built from a run: one channel's models or the fusion model.
pub enum Predictor<'a> {
    Channel(&'a MultiModel, &'a FeatureChannel),
    Fused(&'a FusionModel, Vec<&'a FeatureChannel>),
}

impl Predictor<'_> {
    pub fn name(&self) -> &str {
        match self {
            Predictor::Channel(m, _) => &m.channel,
            Predictor::Fused(f, _) => f.mode.name(),
        }
    }

    pub fn classes(&self) -> Vec<String> {
        match self {
            Predictor::Channel(m, _) => m.classes(),
            Predictor::Fused(f, _) => f.classes(),
        }
    }

    pub fn score_table(&self, ids: &[String], content: Option<&BTreeMap<String, ContentScores>>) -> CliResult<ScoreTable> {
        Ok(match self {
            Predictor::Channel(m, c) => m.score_table(c, ids)?,
            Predictor::Fused(f, cs) => f.score_table(cs, ids, content)?,
        })
    }
}

/// Predictors available for the given channels: every stage-1 channel that
/// has a feature file, then the fusion model if all its channels do.
pub fn predictors<'a>(run: &'a LoadedRun, channels: &'a [FeatureChannel]) -> Vec<Predictor<'a>> {
    let mut out = Vec::new();
    for m in &run.stage1 {
        if let Some(c) = channels.iter().find(|c| c.name() == m.channel) {
            out.push(Predictor::Channel(m, c));
        }
    }
    if let Some(f) = &run.fusion {
        if let Ok(cs) = select_channels(&run.desc.channels, channels) {
            out.push(Predictor::Fused(f, cs));
        }
    }
    out
}
