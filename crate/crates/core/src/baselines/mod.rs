//! Classical comparison methods: k-means on windowed RGB features and
//! graph-based segmentation.

mod felzenszwalb;
mod features;
mod kmeans;

pub use felzenszwalb::{felzenszwalb, gaussian_kernel, gaussian_smooth, GsConfig};
pub use features::{window_features, PixelFeatures};
pub use kmeans::{kmeans, kmeans_objective, KMeansResult};

use crate::error::Result;
use crate::image::{Image, LabelMap};

/// k-means over `window`×`window` RGB features, reshaped to a label map.
pub fn kmeans_segment(image: &Image, k: usize, window: usize, seed: u64, max_iter: usize) -> Result<LabelMap> {
    let features = window_features(image, window)?;
    let result = kmeans(&features, k, seed, max_iter)?;
    LabelMap::new(image.height(), image.width(), result.labels)
}
