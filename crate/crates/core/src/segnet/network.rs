use super::{HyperParams, NetworkParams, ParamSet, ResponseMap};
use crate::error::{Error, Result};
use crate::image::{Image, LabelMap};
use crate::par;
use crate::tensor::gradcheck::Differentiable;
use crate::tensor::{
    batch_norm_channels, batch_norm_vjp, conv2d_padded, conv2d_padded_vjp, linear_channels,
    linear_channels_vjp, relu, relu_vjp, BnState, Padding, Real, Tensor,
};

#[derive(Debug, Clone)]
struct LayerCache<T> {
    input: Tensor<T>,
    pre_activation: Tensor<T>,
    bn: BnState<T>,
}

/// Intermediates saved by [`forward`] for [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardState<T> {
    layers: Vec<LayerCache<T>>,
    features: Tensor<T>,
    response_bn: BnState<T>,
    revision: u64,
    dims: (usize, usize, usize),
    image_dims: (usize, usize),
    padding: Padding,
}

impl<T: Real> ForwardState<T> {
    /// Which conv units were strictly positive before the ReLU, over all
    /// layers in order. Two weight settings with the same pattern lie on the
    /// same smooth piece of the network.
    pub fn relu_pattern(&self) -> Vec<bool> {
        self.layers
            .iter()
            .flat_map(|l| l.pre_activation.data().iter().map(|&v| v > T::zero()))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Forward<T> {
    /// Output of the last conv component, p×H×W.
    pub features: Tensor<T>,
    /// Normalized responses, q×H×W.
    pub response: ResponseMap<T>,
    pub state: ForwardState<T>,
}

pub fn forward<T: Real>(image: &Image, params: &NetworkParams<T>, hp: &HyperParams) -> Result<Forward<T>> {
    params.check_compatible(hp)?;
    if image.pixels() == 0 {
        return Err(Error::invalid("image must be at least 1×1"));
    }
    let w = &params.weights;
    let mut x = image.to_tensor::<T>();
    let mut layers = Vec::with_capacity(hp.layers);
    for m in 0..hp.layers {
        let pre = conv2d_padded(&x, &w.conv_kernels[m], &w.conv_biases[m], hp.padding)?;
        let act = relu(&pre);
        let (out, bn) = batch_norm_channels(&act, &w.bn_gamma[m], &w.bn_beta[m], hp.eps)?;
        layers.push(LayerCache {
            input: x,
            pre_activation: pre,
            bn,
        });
        x = out;
    }
    let raw = linear_channels(&x, &w.classifier)?;
    let (response, response_bn) =
        batch_norm_channels(&raw, &w.bn_gamma[hp.layers], &w.bn_beta[hp.layers], hp.eps)?;
    Ok(Forward {
        features: x.clone(),
        response: ResponseMap::normalized(response)?,
        state: ForwardState {
            layers,
            features: x,
            response_bn,
            revision: params.revision,
            dims: params.dims(),
            image_dims: (image.height(), image.width()),
            padding: hp.padding,
        },
    })
}

/// Cotangents of every trainable array for the given cotangent of the
/// normalized response.
pub fn backward<T: Real>(
    image: &Image,
    params: &NetworkParams<T>,
    state: &ForwardState<T>,
    grad_response: &Tensor<T>,
) -> Result<ParamSet<T>> {
    if state.revision != params.revision
        || state.dims != params.dims()
        || state.image_dims != (image.height(), image.width())
    {
        return Err(Error::InvalidState(format!(
            "forward cache (revision {}, dims {:?}, image {:?}) does not match parameters \
             (revision {}, dims {:?}) and image {:?}",
            state.revision,
            state.dims,
            state.image_dims,
            params.revision,
            params.dims(),
            (image.height(), image.width())
        )));
    }
    let (m_layers, _, q) = state.dims;
    if grad_response.shape() != [q, image.height(), image.width()] {
        return Err(Error::invalid(format!(
            "grad_response shape {:?}, expected [{}, {}, {}]",
            grad_response.shape(),
            q,
            image.height(),
            image.width()
        )));
    }
    let w = &params.weights;
    let mut grads = w.zeros_like();

    let bn = batch_norm_vjp(&state.response_bn, &w.bn_gamma[m_layers], grad_response)?;
    grads.bn_gamma[m_layers] = bn.gamma;
    grads.bn_beta[m_layers] = bn.beta;
    let lin = linear_channels_vjp(&state.features, &w.classifier, &bn.input)?;
    grads.classifier = lin.weight;

    let mut upstream = lin.input;
    for m in (0..m_layers).rev() {
        let cache = &state.layers[m];
        let bn = batch_norm_vjp(&cache.bn, &w.bn_gamma[m], &upstream)?;
        grads.bn_gamma[m] = bn.gamma;
        grads.bn_beta[m] = bn.beta;
        let g_pre = relu_vjp(&cache.pre_activation, &bn.input)?;
        let conv = conv2d_padded_vjp(&cache.input, &w.conv_kernels[m], &g_pre, m > 0, state.padding)?;
        grads.conv_kernels[m] = conv.kernels;
        grads.conv_biases[m] = conv.bias;
        if let Some(g) = conv.input {
            upstream = g;
        }
    }
    Ok(grads)
}

/// Argmax over the response channels of every pixel; ties go to the lowest
/// channel index.
pub fn assign_labels<T: Real>(response: &ResponseMap<T>) -> LabelMap {
    let (q, h, w) = response.dims();
    let hw = h * w;
    let data = response.values.data();
    let mut labels = vec![0u32; hw];
    par::for_each_chunk_mut(&mut labels, 4096, |block, out| {
        let start = block * 4096;
        for (j, label) in out.iter_mut().enumerate() {
            let n = start + j;
            let mut best = data[n];
            let mut arg = 0;
            for i in 1..q {
                let v = data[i * hw + n];
                if v > best {
                    best = v;
                    arg = i;
                }
            }
            *label = arg as u32;
        }
    });
    LabelMap::new(h, w, labels).expect("label count equals H·W")
}

/// The whole network as a function of its weights (image fixed), for
/// gradient checking. Inputs are the weight arrays in canonical order.
pub struct NetworkFn<'a> {
    pub image: &'a Image,
    pub hp: &'a HyperParams,
}

impl NetworkFn<'_> {
    fn params(&self, inputs: &[Tensor<f64>]) -> Result<NetworkParams<f64>> {
        Ok(NetworkParams::from_weights(ParamSet::from_arrays(
            self.hp.layers,
            inputs.to_vec(),
        )?))
    }
}

impl Differentiable for NetworkFn<'_> {
    fn eval(&self, inputs: &[Tensor<f64>]) -> Result<Tensor<f64>> {
        let params = self.params(inputs)?;
        Ok(forward(self.image, &params, self.hp)?.response.values)
    }

    fn vjp(&self, inputs: &[Tensor<f64>], upstream: &Tensor<f64>) -> Result<Vec<Tensor<f64>>> {
        let params = self.params(inputs)?;
        let fwd = forward(self.image, &params, self.hp)?;
        let grads = backward(self.image, &params, &fwd.state, upstream)?;
        Ok(grads.arrays().into_iter().cloned().collect())
    }

    fn same_piece(&self, a: &[Tensor<f64>], b: &[Tensor<f64>]) -> Result<bool> {
        let pattern = |w: &[Tensor<f64>]| -> Result<Vec<bool>> {
            Ok(forward(self.image, &self.params(w)?, self.hp)?.state.relu_pattern())
        };
        Ok(pattern(a)? == pattern(b)?)
    }
}
