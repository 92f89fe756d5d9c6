use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::HyperParams;
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// One array per trainable quantity. Used for weights, gradients and
/// momentum buffers alike.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<T> {
    /// Layer 1: p×3×3×3, later layers p×p×3×3.
    pub conv_kernels: Vec<Tensor<T>>,
    pub conv_biases: Vec<Tensor<T>>,
    /// M feature-layer instances (size p) then the response instance (size q).
    pub bn_gamma: Vec<Tensor<T>>,
    pub bn_beta: Vec<Tensor<T>>,
    /// q×p.
    pub classifier: Tensor<T>,
}

impl<T: Real> ParamSet<T> {
    /// Arrays in their canonical order: conv kernel/bias per layer, batch-norm
    /// gamma/beta per instance, classifier.
    pub fn arrays(&self) -> Vec<&Tensor<T>> {
        let mut out = Vec::with_capacity(self.len());
        for (k, b) in self.conv_kernels.iter().zip(&self.conv_biases) {
            out.push(k);
            out.push(b);
        }
        for (g, b) in self.bn_gamma.iter().zip(&self.bn_beta) {
            out.push(g);
            out.push(b);
        }
        out.push(&self.classifier);
        out
    }

    pub fn arrays_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = Vec::with_capacity(self.len());
        for (k, b) in self.conv_kernels.iter_mut().zip(self.conv_biases.iter_mut()) {
            out.push(k);
            out.push(b);
        }
        for (g, b) in self.bn_gamma.iter_mut().zip(self.bn_beta.iter_mut()) {
            out.push(g);
            out.push(b);
        }
        out.push(&mut self.classifier);
        out
    }

    /// Names matching [`ParamSet::arrays`].
    pub fn names(&self) -> Vec<String> {
        Self::names_for(self.conv_kernels.len())
    }

    /// Canonical array names of an M-layer network.
    pub fn names_for(layers: usize) -> Vec<String> {
        let mut out = Vec::with_capacity(4 * layers + 3);
        for m in 1..=layers {
            out.push(format!("conv{m}.kernel"));
            out.push(format!("conv{m}.bias"));
        }
        for m in 1..=layers + 1 {
            out.push(format!("bn{m}.gamma"));
            out.push(format!("bn{m}.beta"));
        }
        out.push("classifier".to_string());
        out
    }

    pub fn len(&self) -> usize {
        2 * self.conv_kernels.len() + 2 * self.bn_gamma.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn zeros_like(&self) -> Self {
        ParamSet {
            conv_kernels: self.conv_kernels.iter().map(Tensor::zeros_like).collect(),
            conv_biases: self.conv_biases.iter().map(Tensor::zeros_like).collect(),
            bn_gamma: self.bn_gamma.iter().map(Tensor::zeros_like).collect(),
            bn_beta: self.bn_beta.iter().map(Tensor::zeros_like).collect(),
            classifier: self.classifier.zeros_like(),
        }
    }

    /// Shapes for an M-layer network with feature dim p and q clusters.
    pub fn shapes(layers: usize, p: usize, q: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        for m in 0..layers {
            let cin = if m == 0 { 3 } else { p };
            out.push(vec![p, cin, 3, 3]);
            out.push(vec![p]);
        }
        for _ in 0..layers {
            out.push(vec![p]);
            out.push(vec![p]);
        }
        out.push(vec![q]);
        out.push(vec![q]);
        out.push(vec![q, p]);
        out
    }

    /// Rebuilds a set from arrays in canonical order.
    pub fn from_arrays(layers: usize, arrays: Vec<Tensor<T>>) -> Result<Self> {
        if arrays.len() != 4 * layers + 3 {
            return Err(Error::invalid(format!(
                "expected {} arrays for {} layers, got {}",
                4 * layers + 3,
                layers,
                arrays.len()
            )));
        }
        let mut it = arrays.into_iter();
        let mut set = ParamSet {
            conv_kernels: Vec::new(),
            conv_biases: Vec::new(),
            bn_gamma: Vec::new(),
            bn_beta: Vec::new(),
            classifier: Tensor::zeros(&[0]),
        };
        for _ in 0..layers {
            set.conv_kernels.push(it.next().unwrap());
            set.conv_biases.push(it.next().unwrap());
        }
        for _ in 0..=layers {
            set.bn_gamma.push(it.next().unwrap());
            set.bn_beta.push(it.next().unwrap());
        }
        set.classifier = it.next().unwrap();
        Ok(set)
    }

    pub fn cast<U: Real>(&self) -> ParamSet<U> {
        ParamSet {
            conv_kernels: self.conv_kernels.iter().map(Tensor::cast).collect(),
            conv_biases: self.conv_biases.iter().map(Tensor::cast).collect(),
            bn_gamma: self.bn_gamma.iter().map(Tensor::cast).collect(),
            bn_beta: self.bn_beta.iter().map(Tensor::cast).collect(),
            classifier: self.classifier.cast(),
        }
    }

    /// `(M, p, q)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        let s = self.classifier.shape();
        (self.conv_kernels.len(), s[1], s[0])
    }

    /// Euclidean distance between two sets of the same layout.
    pub fn distance(&self, other: &Self) -> f64 {
        self.arrays()
            .iter()
            .zip(other.arrays())
            .flat_map(|(a, b)| a.data().iter().zip(b.data()))
            .map(|(x, y)| {
                let d = (*x - *y).to_f64().unwrap();
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }
}

/// Weights plus optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams<T> {
    pub weights: ParamSet<T>,
    /// Momentum buffers, one per weight array.
    pub momentum: ParamSet<T>,
    /// Bumped by every optimizer step; forward caches record it.
    pub revision: u64,
}

impl<T: Real> NetworkParams<T> {
    pub fn from_weights(weights: ParamSet<T>) -> Self {
        NetworkParams {
            momentum: weights.zeros_like(),
            weights,
            revision: 0,
        }
    }

    /// `(M, p, q)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        self.weights.dims()
    }

    pub fn check_compatible(&self, hp: &HyperParams) -> Result<()> {
        let dims = self.dims();
        if dims != (hp.layers, hp.features, hp.clusters) {
            return Err(Error::invalid(format!(
                "network has (M, p, q) = {:?}, hyperparameters ask for ({}, {}, {})",
                dims, hp.layers, hp.features, hp.clusters
            )));
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> NetworkParams<U> {
        NetworkParams {
            weights: self.weights.cast(),
            momentum: self.momentum.cast(),
            revision: self.revision,
        }
    }
}

/// Xavier-uniform initialization: every kernel and the classifier drawn from
/// `U[-a, a]` with `a = sqrt(6 / (fan_in + fan_out))`; biases and betas 0,
/// gammas 1, momentum 0.
pub fn init_params<T: Real>(hp: &HyperParams) -> Result<NetworkParams<T>> {
    hp.validate()?;
    let (m, p, q) = (hp.layers, hp.features, hp.clusters);
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let mut xavier = |shape: &[usize], fan_in: usize, fan_out: usize| -> Tensor<T> {
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let n = shape.iter().product();
        let data = (0..n).map(|_| T::of(rng.gen_range(-a..=a))).collect();
        Tensor::from_vec(shape, data).expect("shape and length agree")
    };
    let mut conv_kernels = Vec::with_capacity(m);
    for layer in 0..m {
        let cin = if layer == 0 { 3 } else { p };
        conv_kernels.push(xavier(&[p, cin, 3, 3], cin * 9, p * 9));
    }
    let classifier = xavier(&[q, p], p, q);
    let mut bn_gamma: Vec<Tensor<T>> = (0..m).map(|_| Tensor::full(&[p], T::one())).collect();
    bn_gamma.push(Tensor::full(&[q], T::one()));
    let weights = ParamSet {
        conv_kernels,
        conv_biases: (0..m).map(|_| Tensor::zeros(&[p])).collect(),
        bn_beta: bn_gamma.iter().map(Tensor::zeros_like).collect(),
        bn_gamma,
        classifier,
    };
    Ok(NetworkParams::from_weights(weights))
}

/// SGD with momentum: `v ← momentum·v + g; θ ← θ − lr·v` for every array.
/// Gradients are validated before anything is mutated.
pub fn sgd_momentum_step<T: Real>(
    params: &mut NetworkParams<T>,
    grads: &ParamSet<T>,
    lr: f64,
    momentum: f64,
) -> Result<()> {
    let names = params.weights.names();
    {
        let weights = params.weights.arrays();
        let gs = grads.arrays();
        if weights.len() != gs.len() {
            return Err(Error::invalid("gradient set does not match parameter layout"));
        }
        for ((name, w), g) in names.iter().zip(&weights).zip(&gs) {
            if w.shape() != g.shape() {
                return Err(Error::invalid(format!(
                    "gradient for {name} has shape {:?}, parameter has {:?}",
                    g.shape(),
                    w.shape()
                )));
            }
            g.ensure_finite(&format!("gradient of {name}"))?;
        }
    }
    let (lr, mom) = (T::of(lr), T::of(momentum));
    for ((w, v), g) in params
        .weights
        .arrays_mut()
        .into_iter()
        .zip(params.momentum.arrays_mut())
        .zip(grads.arrays())
    {
        for ((wi, vi), &gi) in w.data_mut().iter_mut().zip(v.data_mut()).zip(g.data()) {
            *vi = mom * *vi + gi;
            *wi -= lr * *vi;
        }
    }
    params.revision += 1;
    for (name, w) in names.iter().zip(params.weights.arrays()) {
        w.ensure_finite(name)?;
    }
    Ok(())
}
