//! The segmentation network: M × (3×3 conv → ReLU → batch-norm), a bias-free
//! per-pixel linear classifier, and a batch-norm over the response channels
//! whose argmax gives each pixel its cluster label.

mod network;
mod params;

use crate::error::{Error, Result};
use crate::losses::TvBounds;
use crate::tensor::{Padding, Real, Tensor};

pub use network::{assign_labels, backward, forward, Forward, ForwardState, NetworkFn};
pub use params::{init_params, sgd_momentum_step, NetworkParams, ParamSet};

/// Training and architecture settings.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperParams {
    /// Number of conv components (M).
    pub layers: usize,
    /// Feature dimension p.
    pub features: usize,
    /// Response dimension q, the maximum number of clusters.
    pub clusters: usize,
    pub lr: f64,
    pub momentum: f64,
    /// Weight of the spatial-continuity term.
    pub mu: f64,
    /// Weight of the scribble term.
    pub nu: f64,
    /// Maximum number of iterations T.
    pub iterations: usize,
    /// Training stops once the label count drops to this value or below.
    pub min_labels: usize,
    pub seed: u64,
    /// Batch-norm epsilon.
    pub eps: f64,
    pub tv_bounds: TvBounds,
    /// Border handling of the conv layers.
    pub padding: Padding,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            layers: 3,
            features: 100,
            clusters: 100,
            lr: 0.1,
            momentum: 0.9,
            mu: 5.0,
            nu: 0.5,
            iterations: 500,
            min_labels: 3,
            seed: 0,
            eps: 1e-5,
            tv_bounds: TvBounds::Full,
            padding: Padding::Replicate,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::invalid(format!("hyperparameters: {m}")));
        if self.layers < 1 {
            return fail("layers must be ≥ 1");
        }
        if self.features < 2 || self.clusters < 2 {
            return fail("features and clusters must be ≥ 2");
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return fail("lr must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return fail("momentum must lie in [0, 1)");
        }
        if self.iterations < 1 {
            return fail("iterations must be ≥ 1");
        }
        if self.min_labels < 1 || self.min_labels > self.clusters {
            return fail("min_labels must lie in [1, clusters]");
        }
        if !(self.eps > 0.0) {
            return fail("eps must be positive");
        }
        if !(self.mu >= 0.0) || !(self.nu >= 0.0) {
            return fail("mu and nu must be non-negative");
        }
        Ok(())
    }
}

/// q×H×W responses, either raw (`r = W_c x`) or after the intra-axis
/// normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseMap<T> {
    pub values: Tensor<T>,
    pub normalized: bool,
}

impl<T: Real> ResponseMap<T> {
    pub fn normalized(values: Tensor<T>) -> Result<Self> {
        values.dims3()?;
        Ok(ResponseMap {
            values,
            normalized: true,
        })
    }

    /// `(q, height, width)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        self.values.dims3().expect("response maps are rank 3")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_bad_values_rejected() {
        let hp = HyperParams::default();
        hp.validate().unwrap();
        assert_eq!((hp.layers, hp.features, hp.clusters), (3, 100, 100));
        for bad in [
            HyperParams { layers: 0, ..hp.clone() },
            HyperParams { features: 1, ..hp.clone() },
            HyperParams { momentum: 1.0, ..hp.clone() },
            HyperParams { lr: 0.0, ..hp.clone() },
            HyperParams { min_labels: 0, ..hp.clone() },
            HyperParams { min_labels: 101, ..hp.clone() },
            HyperParams { iterations: 0, ..hp.clone() },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }
}
