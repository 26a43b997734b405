//! Image style recognition.
//!
//! Native feature extraction (L*a*b* histogram, color GIST, graph-based
//! saliency), ingestion of externally computed channels, one-vs-all linear
//! classifiers trained by adaptive-subgradient SGD with elastic-net
//! regularization, late fusion with content-conditioned features, and the
//! class-balanced evaluation protocol.

pub mod data;
pub mod error;
pub mod eval;
pub mod features;
pub mod fusion;
pub mod imageproc;
pub mod learner;
pub mod seed;

pub use error::{Error, Result};
