//! Feature channels: the native extractors (L*a*b* histogram, color GIST,
//! graph-based saliency) and ingestion of externally computed channels.

pub mod gist;
pub mod histogram;
pub mod io;
pub mod saliency;
pub mod spectral;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::data::Manifest;
use crate::error::{Error, Result};
use crate::imageproc::{self, ImageRgb, WORKING_SIDE};

pub use io::{load_external_channel, write_channel};

/// A dense feature vector tagged with its channel.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    channel: String,
    values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(channel: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("non-finite feature value at index {i}")));
        }
        Ok(FeatureVector {
            channel: channel.into(),
            values,
        })
    }

    pub fn channel(&self) -> &str {
        &self.channel
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Vectors of one feature type, keyed by record id (iterated in id order).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureChannel {
    name: String,
    dim: usize,
    vectors: BTreeMap<String, FeatureVector>,
}

impl FeatureChannel {
    pub fn new(name: impl Into<String>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Validation("channel dimension must be positive".into()));
        }
        Ok(FeatureChannel {
            name: name.into(),
            dim,
            vectors: BTreeMap::new(),
        })
    }

    /// Build a channel from raw rows.
    pub fn from_rows(name: impl Into<String>, dim: usize, rows: impl IntoIterator<Item = (String, Vec<f64>)>) -> Result<Self> {
        let mut channel = FeatureChannel::new(name, dim)?;
        for (id, values) in rows {
            let v = FeatureVector::new(channel.name.clone(), values)?;
            channel.insert(id, v)?;
        }
        Ok(channel)
    }

    pub fn insert(&mut self, id: impl Into<String>, vector: FeatureVector) -> Result<()> {
        let id = id.into();
        if vector.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: vector.len(),
            });
        }
        if self.vectors.contains_key(&id) {
            return Err(Error::Validation(format!("duplicate id `{id}` in channel `{}`", self.name)));
        }
        self.vectors.insert(id, vector);
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&FeatureVector> {
        self.vectors.get(id)
    }

    /// Vector for `id`, or a `MissingId` error naming this channel.
    pub fn require(&self, id: &str) -> Result<&[f64]> {
        self.vectors
            .get(id)
            .map(FeatureVector::values)
            .ok_or_else(|| Error::MissingId {
                id: id.to_string(),
                context: format!("channel `{}`", self.name),
            })
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = (&str, &FeatureVector)> {
        self.vectors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.vectors.keys().map(String::as_str)
    }
}

/// Natively computed channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ChannelKind {
    LabHist,
    Gist,
    Saliency,
}

impl ChannelKind {
    pub const ALL: [ChannelKind; 3] = [ChannelKind::LabHist, ChannelKind::Gist, ChannelKind::Saliency];

    pub fn name(self) -> &'static str {
        match self {
            ChannelKind::LabHist => "lab_hist",
            ChannelKind::Gist => "gist",
            ChannelKind::Saliency => "saliency",
        }
    }

    pub fn dim(self) -> usize {
        match self {
            ChannelKind::LabHist => histogram::DIM,
            ChannelKind::Gist => gist::DIM,
            ChannelKind::Saliency => saliency::DIM,
        }
    }

    /// Compute this channel's vector for a decoded image.
    pub fn extract(self, img: &ImageRgb) -> Vec<f64> {
        match self {
            ChannelKind::LabHist => {
                let resized = imageproc::resize(img, WORKING_SIDE, WORKING_SIDE).expect("working size is positive");
                histogram::lab_histogram(&imageproc::srgb_to_cielab(&resized))
            }
            ChannelKind::Gist => gist::color_gist(img),
            ChannelKind::Saliency => saliency::gbvs_saliency(img),
        }
    }
}

impl fmt::Display for ChannelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ChannelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ChannelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Validation(format!("unknown native channel `{s}` (expected lab_hist, gist or saliency)")))
    }
}

/// Output of a batch extraction.
#[derive(Debug, Clone)]
pub struct Extraction {
    pub channel: FeatureChannel,
    /// `(id, message)` for every image that could not be processed.
    pub failures: Vec<(String, String)>,
}

/// Extract `kind` for every record of the manifest. Images are processed in
/// parallel; unreadable or corrupt images are reported per id.
pub fn extract_channel(manifest: &Manifest, kind: ChannelKind) -> Result<Extraction> {
    let results: Vec<(String, Result<Vec<f64>>)> = manifest
        .records()
        .par_iter()
        .map(|rec| {
            let vector = imageproc::load_image(manifest.resolve_path(rec)).map(|img| kind.extract(&img));
            (rec.id.clone(), vector)
        })
        .collect();
    let mut channel = FeatureChannel::new(kind.name(), kind.dim())?;
    let mut failures = Vec::new();
    for (id, result) in results {
        match result.and_then(|v| FeatureVector::new(kind.name(), v)) {
            Ok(v) => channel.insert(id, v)?,
            Err(e) => failures.push((id, e.to_string())),
        }
    }
    failures.sort();
    Ok(Extraction { channel, failures })
}
