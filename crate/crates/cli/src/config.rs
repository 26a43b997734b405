//! Optional TOML configuration. Keys mirror the long flag names (with `_`
//! for `-`); a flag given on the command line overrides the file.
//!
//! ```toml
//! seed = 7
//! manifest = "data/manifest.jsonl"
//! features = ["feats/lab_hist.fvec", "feats/gist.fvec"]
//! lambda1 = [0.0, 1e-5]
//! loss = ["hinge"]
//! format = ["json", "html"]
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;
use stylerec_core::Error;

use crate::failure::{CliResult, Failure};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub manifest: Option<PathBuf>,
    pub channel: Option<String>,
    pub features: Option<Vec<PathBuf>>,
    pub models: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Option<Vec<String>>,
    pub mode: Option<String>,
    pub content: Option<PathBuf>,
    pub epochs: Option<usize>,
    pub eta0: Option<f64>,
    pub lambda1: Option<Vec<f64>>,
    pub lambda2: Option<Vec<f64>>,
    pub loss: Option<Vec<String>>,
    pub protocol: Option<String>,
    pub style: Option<String>,
    pub text: Option<String>,
    pub top_k: Option<usize>,
    pub min_score: Option<f64>,
    pub html: Option<PathBuf>,
}

pub fn load(path: Option<&Path>) -> CliResult<Config> {
    let Some(path) = path else {
        return Ok(Config::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| {
        Failure::Data(Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })?;
    toml::from_str(&text).map_err(|e| Failure::usage(format!("invalid config {}: {e}", path.display())))
}
