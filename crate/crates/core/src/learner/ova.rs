use rayon::prelude::*;

use super::{predict_score, train_binary, Hyperparams, LinearModel};
use crate::data::{binarize_labels, Manifest, Split};
use crate::error::{Error, Result};
use crate::eval::ScoreTable;
use crate::features::FeatureChannel;
use crate::seed;

/// One binary model per class over a single feature channel.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiModel {
    pub channel: String,
    pub models: Vec<LinearModel>,
    /// Ids of the examples the models were fitted on, sorted.
    pub training_ids: Vec<String>,
}

impl MultiModel {
    pub fn new(channel: impl Into<String>, models: Vec<LinearModel>, mut training_ids: Vec<String>) -> Result<Self> {
        let dim = models.first().map(LinearModel::dim).ok_or_else(|| Error::Empty("no class models".into()))?;
        if let Some(m) = models.iter().find(|m| m.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: m.dim(),
            });
        }
        training_ids.sort_unstable();
        Ok(MultiModel {
            channel: channel.into(),
            models,
            training_ids,
        })
    }

    pub fn classes(&self) -> Vec<String> {
        self.models.iter().map(|m| m.class_name.clone()).collect()
    }

    pub fn dim(&self) -> usize {
        self.models[0].dim()
    }

    pub fn model(&self, class: &str) -> Option<&LinearModel> {
        self.models.iter().find(|m| m.class_name == class)
    }

    /// Decision values of every class for one feature vector.
    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.models.iter().map(|m| predict_score(m, x)).collect()
    }

    /// Score `ids` from `channel`.
    pub fn score_table(&self, channel: &FeatureChannel, ids: &[String]) -> Result<ScoreTable> {
        if channel.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: channel.dim(),
            });
        }
        let rows = ids
            .par_iter()
            .map(|id| Ok((id.clone(), self.scores(channel.require(id)?)?)))
            .collect::<Result<Vec<_>>>()?;
        ScoreTable::new(self.classes(), rows)
    }
}

/// Train one binary classifier per manifest class on the train split of
/// `channel`. Classes train in parallel; each class draws its visit order
/// from a seed derived from `h.seed` and the class name.
pub fn train_one_vs_all(manifest: &Manifest, channel: &FeatureChannel, h: &Hyperparams) -> Result<MultiModel> {
    let train_ids = manifest.ids_in(Some(Split::Train));
    if train_ids.is_empty() {
        return Err(Error::Empty("the train split is empty".into()));
    }
    let rows: Vec<&[f64]> = train_ids.iter().map(|id| channel.require(id)).collect::<Result<_>>()?;
    let models = manifest
        .classes()
        .par_iter()
        .map(|class| {
            let labels: Vec<i8> = binarize_labels(manifest, class, Some(Split::Train))?
                .into_iter()
                .map(|(_, y)| y)
                .collect();
            let class_h = Hyperparams {
                seed: seed::derive_seed(h.seed, &format!("ova:{class}")),
                ..*h
            };
            let mut model = train_binary(class, &rows, &labels, &class_h).map_err(|e| Error::ClassTraining {
                class: class.clone(),
                source: Box::new(e),
            })?;
            model.hyperparams.seed = h.seed;
            model.channel = channel.name().to_string();
            Ok(model)
        })
        .collect::<Result<Vec<_>>>()?;
    MultiModel::new(channel.name(), models, train_ids)
}
