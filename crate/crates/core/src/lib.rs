//! Unsupervised image segmentation by differentiable feature clustering.
//!
//! A small convolutional feature extractor and a linear clustering head are
//! trained from scratch on the very image being segmented. Each iteration
//! labels every pixel by the argmax of its normalized response vector, then
//! uses those labels as pseudo-targets for a cross-entropy loss, balanced
//! against an L1 total-variation term that favours spatially continuous
//! clusters. An optional partial cross-entropy term consumes user scribbles.
//!
//! The crate also ships the classical baselines (k-means on windowed RGB
//! features and graph-based segmentation), the mIOU / PR-AP evaluation
//! protocol, and the raster, model and config file formats used by the
//! `diffseg` command-line tool.
//!
//! Heavy inner loops run on rayon when the `parallel` feature (default) is
//! enabled. Work is always split into fixed-size chunks, so results are
//! bit-identical with and without the feature.

pub mod baselines;
pub mod error;
pub mod eval;
pub mod image;
pub mod io;
pub mod losses;
mod par;
pub mod pipeline;
pub mod segnet;
pub mod synthetic;
pub mod tensor;

pub use crate::error::{Error, Result};
pub use crate::image::{Image, LabelMap, Mask};
pub use crate::losses::{LossBreakdown, Scribbles, TvBounds};
pub use crate::pipeline::{SegmentSet, SegmentationResult};
pub use crate::segnet::{HyperParams, NetworkParams, ParamSet, ResponseMap};
pub use crate::tensor::{Real, Tensor};

/// Whether heavy loops run on the rayon thread pool.
pub fn parallel_enabled() -> bool {
    par::is_parallel()
}
