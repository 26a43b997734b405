//! Second-stage late fusion.
//!
//! Stage-1 per-channel one-vs-all models produce raw decision values; the
//! values of all channels are concatenated (channel-major, class-minor) and
//! a stage-2 one-vs-all model is trained on them. In `fusion_x_content` mode
//! the fused vector `f` is expanded with four aggregate content scores
//! `c` as `[f | c1·f | c2·f | c3·f | c4·f]`.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Manifest, Split};
use crate::error::{Error, Result};
use crate::eval::ScoreTable;
use crate::features::{FeatureChannel, FeatureVector};
use crate::learner::{load_multi_model, save_multi_model, train_one_vs_all, Hyperparams, MultiModel};

/// The twenty source classes every content-score record must list.
pub const VOC_CLASSES: [&str; 20] = [
    "aeroplane",
    "bicycle",
    "bird",
    "boat",
    "bottle",
    "bus",
    "car",
    "cat",
    "chair",
    "cow",
    "diningtable",
    "dog",
    "horse",
    "motorbike",
    "person",
    "pottedplant",
    "sheep",
    "sofa",
    "train",
    "tvmonitor",
];

pub const CONTENT_GROUP_NAMES: [&str; 4] = ["animals", "vehicles", "indoor", "people"];

/// Member classes of each content group, in [`CONTENT_GROUP_NAMES`] order.
pub fn default_content_groups() -> Vec<(String, Vec<String>)> {
    let members: [&[&str]; 4] = [
        &["bird", "cat", "cow", "dog", "horse", "sheep"],
        &["aeroplane", "bicycle", "boat", "bus", "car", "motorbike", "train"],
        &["bottle", "chair", "diningtable", "pottedplant", "sofa", "tvmonitor"],
        &["person"],
    ];
    CONTENT_GROUP_NAMES
        .iter()
        .zip(members)
        .map(|(g, m)| (g.to_string(), m.iter().map(|s| s.to_string()).collect()))
        .collect()
}

/// Aggregate content scores of one record, each in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContentScores(pub [f64; 4]);

impl ContentScores {
    pub fn new(values: [f64; 4]) -> Result<Self> {
        if values.iter().all(|v| (0.0..=1.0).contains(v)) {
            Ok(ContentScores(values))
        } else {
            Err(Error::Validation(format!("content scores must lie in [0, 1], got {values:?}")))
        }
    }
}

/// Group score = max over member-class scores, clipped to `[0, 1]`.
pub fn aggregate_content(source: &BTreeMap<String, f64>, groups: &[(String, Vec<String>)]) -> Result<ContentScores> {
    if groups.len() != 4 {
        return Err(Error::Validation(format!("expected 4 content groups, got {}", groups.len())));
    }
    let mut out = [0.0; 4];
    for (slot, (group, members)) in out.iter_mut().zip(groups) {
        let mut best = f64::NEG_INFINITY;
        for m in members {
            let v = *source.get(m).ok_or_else(|| Error::UnknownClass(format!("{m} (content group {group})")))?;
            best = best.max(v);
        }
        *slot = if best.is_finite() { best.clamp(0.0, 1.0) } else { 0.0 };
    }
    ContentScores::new(out)
}

#[derive(Deserialize)]
struct ContentLine {
    id: String,
    scores: BTreeMap<String, f64>,
}

/// Parse a content-score JSON Lines file with `groups` as the aggregation.
pub fn load_content_scores_with(path: impl AsRef<Path>, groups: &[(String, Vec<String>)]) -> Result<BTreeMap<String, ContentScores>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = BTreeMap::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let loc = format!("{}:{}", path.display(), n + 1);
        let rec: ContentLine = serde_json::from_str(&line).map_err(|e| Error::parse(&loc, e))?;
        if let Some(missing) = VOC_CLASSES.iter().find(|c| !rec.scores.contains_key(**c)) {
            return Err(Error::parse(&loc, format!("missing score for `{missing}`")));
        }
        if let Some((k, _)) = rec.scores.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::parse(&loc, format!("non-finite score for `{k}`")));
        }
        let scores = aggregate_content(&rec.scores, groups).map_err(|e| Error::parse(&loc, e.to_string()))?;
        if out.insert(rec.id.clone(), scores).is_some() {
            return Err(Error::parse(&loc, format!("duplicate id `{}`", rec.id)));
        }
    }
    Ok(out)
}

/// Parse a content-score file with the default four groups.
pub fn load_content_scores(path: impl AsRef<Path>) -> Result<BTreeMap<String, ContentScores>> {
    load_content_scores_with(path, &default_content_groups())
}

/// Stage-1 decision values of one record.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    pub id: String,
    pub scores: Vec<f64>,
}

fn check_channels(models: &[MultiModel], channels: &[&FeatureChannel]) -> Result<()> {
    if models.len() != channels.len() || models.is_empty() {
        return Err(Error::Validation(format!(
            "{} stage-1 models for {} channels",
            models.len(),
            channels.len()
        )));
    }
    for (m, c) in models.iter().zip(channels) {
        if m.channel != c.name() {
            return Err(Error::Validation(format!(
                "stage-1 model for `{}` paired with channel `{}`",
                m.channel,
                c.name()
            )));
        }
    }
    Ok(())
}

/// Concatenated stage-1 decision values for each id.
pub fn stage1_scores(models: &[MultiModel], channels: &[&FeatureChannel], ids: &[String]) -> Result<Vec<ScoreVector>> {
    check_channels(models, channels)?;
    ids.par_iter()
        .map(|id| {
            let mut scores = Vec::with_capacity(models.iter().map(|m| m.models.len()).sum());
            for (m, c) in models.iter().zip(channels) {
                scores.extend(m.scores(c.require(id)?)?);
            }
            Ok(ScoreVector { id: id.clone(), scores })
        })
        .collect()
}

/// `[f | c1·f | c2·f | c3·f | c4·f]`.
pub fn outer_product_expand(fused: &[f64], content: &ContentScores) -> Vec<f64> {
    let mut out = Vec::with_capacity(5 * fused.len());
    out.extend_from_slice(fused);
    for c in content.0 {
        out.extend(fused.iter().map(|f| c * f));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    Fusion,
    FusionXContent,
}

impl FusionMode {
    pub fn name(self) -> &'static str {
        match self {
            FusionMode::Fusion => "fusion",
            FusionMode::FusionXContent => "fusion_x_content",
        }
    }
}

impl std::str::FromStr for FusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fusion" => Ok(FusionMode::Fusion),
            "fusion_x_content" => Ok(FusionMode::FusionXContent),
            other => Err(Error::Validation(format!("unknown fusion mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionModel {
    pub stage1: Vec<MultiModel>,
    pub stage2: MultiModel,
    pub mode: FusionMode,
}

/// Build the stage-2 input channel for `ids`.
fn stage2_channel(
    stage1: &[MultiModel],
    channels: &[&FeatureChannel],
    ids: &[String],
    mode: FusionMode,
    content: Option<&BTreeMap<String, ContentScores>>,
) -> Result<FeatureChannel> {
    let vectors = stage1_scores(stage1, channels, ids)?;
    let fused_dim = vectors.first().map_or(stage1.iter().map(|m| m.models.len()).sum(), |v| v.scores.len());
    let (dim, content) = match (mode, content) {
        (FusionMode::Fusion, _) => (fused_dim, None),
        (FusionMode::FusionXContent, Some(c)) => (5 * fused_dim, Some(c)),
        (FusionMode::FusionXContent, None) => {
            return Err(Error::Validation("fusion_x_content requires content scores".into()))
        }
    };
    let mut channel = FeatureChannel::new(mode.name(), dim)?;
    for v in vectors {
        let values = match content {
            Some(c) => {
                let cs = c.get(&v.id).ok_or_else(|| Error::MissingId {
                    id: v.id.clone(),
                    context: "content scores".into(),
                })?;
                outer_product_expand(&v.scores, cs)
            }
            None => v.scores,
        };
        channel.insert(v.id, FeatureVector::new(mode.name(), values)?)?;
    }
    Ok(channel)
}

/// Refuse stage-1 models fitted on anything but train-split records.
pub fn check_leakage(manifest: &Manifest, stage1: &[MultiModel]) -> Result<()> {
    for m in stage1 {
        for id in &m.training_ids {
            let ok = manifest.record(id).is_some_and(|r| r.split == Split::Train);
            if !ok {
                return Err(Error::Leakage {
                    channel: m.channel.clone(),
                    id: id.clone(),
                });
            }
        }
    }
    Ok(())
}

/// Train the stage-2 model on the train split's stage-1 scores.
pub fn train_fusion(
    manifest: &Manifest,
    stage1: Vec<MultiModel>,
    channels: &[&FeatureChannel],
    mode: FusionMode,
    content: Option<&BTreeMap<String, ContentScores>>,
    h: &Hyperparams,
) -> Result<FusionModel> {
    check_leakage(manifest, &stage1)?;
    let train_ids = manifest.ids_in(Some(Split::Train));
    let inputs = stage2_channel(&stage1, channels, &train_ids, mode, content)?;
    let stage2 = train_one_vs_all(manifest, &inputs, h)?;
    Ok(FusionModel { stage1, stage2, mode })
}

impl FusionModel {
    pub fn classes(&self) -> Vec<String> {
        self.stage2.classes()
    }

    /// Stage-2 input dimension.
    pub fn dim(&self) -> usize {
        self.stage2.dim()
    }

    pub fn channel_names(&self) -> Vec<String> {
        self.stage1.iter().map(|m| m.channel.clone()).collect()
    }

    /// Stage-2 decision values for `ids`.
    pub fn score_table(
        &self,
        channels: &[&FeatureChannel],
        ids: &[String],
        content: Option<&BTreeMap<String, ContentScores>>,
    ) -> Result<ScoreTable> {
        let inputs = stage2_channel(&self.stage1, channels, ids, self.mode, content)?;
        self.stage2.score_table(&inputs, ids)
    }

    /// Write the stage-2 model and a descriptor into `dir`. Stage-1 models
    /// are saved separately and supplied again to [`FusionModel::load`].
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        save_multi_model(&self.stage2, dir.join("stage2"))?;
        let desc = FusionDescriptor {
            format: FUSION_FORMAT.into(),
            mode: self.mode,
            channels: self.channel_names(),
        };
        let path = dir.join("fusion.json");
        let mut text = serde_json::to_string_pretty(&desc).expect("descriptor serializes");
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    /// Read a model written by [`FusionModel::save`]; `stage1` must list
    /// the channels in the recorded order.
    pub fn load(dir: impl AsRef<Path>, stage1: Vec<MultiModel>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join("fusion.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let desc: FusionDescriptor = serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e))?;
        if desc.format != FUSION_FORMAT {
            return Err(Error::parse(path.display().to_string(), format!("unsupported format `{}`", desc.format)));
        }
        let names: Vec<String> = stage1.iter().map(|m| m.channel.clone()).collect();
        if names != desc.channels {
            return Err(Error::Validation(format!(
                "fusion model expects channels {:?}, got {:?}",
                desc.channels, names
            )));
        }
        let stage2 = load_multi_model(dir.join("stage2"))?;
        let fused: usize = stage1.iter().map(|m| m.models.len()).sum();
        let expected = match desc.mode {
            FusionMode::Fusion => fused,
            FusionMode::FusionXContent => 5 * fused,
        };
        if stage2.dim() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: stage2.dim(),
            });
        }
        Ok(FusionModel {
            stage1,
            stage2,
            mode: desc.mode,
        })
    }
}

pub const FUSION_FORMAT: &str = "FUSE1";

#[derive(Serialize, Deserialize)]
struct FusionDescriptor {
    format: String,
    mode: FusionMode,
    channels: Vec<String>,
}
