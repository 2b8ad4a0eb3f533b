//! Video eye-fixation prediction at desk scale.
//!
//! The crate covers the whole chain: ground-truth fixation maps from gaze logs ([`fixmap`]),
//! moving-object boundary maps ([`opb`]), a small fully convolutional network engine with the
//! staged SGF model family ([`net`]), two-stage training ([`train`]), the saliency metric suite
//! ([`metrics`]) and the per-video orchestration, synthetic data and ablation tooling
//! ([`pipeline`], [`synth`], [`ablation`]).

pub mod ablation;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod field;
pub mod fixmap;
pub mod io;
pub mod metrics;
pub mod net;
pub mod opb;
pub mod pipeline;
pub mod seed;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
pub use field::{RgbFrame, ScalarField};
