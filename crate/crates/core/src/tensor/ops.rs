use super::{par_gemm, transpose, Real, Tensor};
use crate::error::{Error, Result};
use crate::par;

pub fn relu<T: Real>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|x| if x > T::zero() { x } else { T::zero() })
}

/// Passes `upstream` where `input > 0`; the subgradient at exactly 0 is 0.
pub fn relu_vjp<T: Real>(input: &Tensor<T>, upstream: &Tensor<T>) -> Result<Tensor<T>> {
    if input.shape() != upstream.shape() {
        return Err(Error::invalid("relu_vjp: shape mismatch"));
    }
    let data = input
        .data()
        .iter()
        .zip(upstream.data())
        .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_vec(input.shape(), data)
}

/// Saved statistics of one [`batch_norm_channels`] call.
#[derive(Debug, Clone)]
pub struct BnState<T> {
    /// `(x - mean) / sqrt(var + eps)`, C×H×W.
    pub normalized: Tensor<T>,
    pub inv_std: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct BnGrads<T> {
    pub input: Tensor<T>,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
}

/// Per-channel normalization over the H·W positions of a single image,
/// biased variance, followed by the `gamma`/`beta` affine map.
pub fn batch_norm_channels<T: Real>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    eps: f64,
) -> Result<(Tensor<T>, BnState<T>)> {
    let (c, h, w) = input.dims3()?;
    let n = h * w;
    if n == 0 {
        return Err(Error::invalid("batch_norm_channels: empty image"));
    }
    if !(eps > 0.0) {
        return Err(Error::invalid("batch_norm_channels: eps must be positive"));
    }
    if gamma.shape() != [c] || beta.shape() != [c] {
        return Err(Error::invalid(format!(
            "batch_norm_channels: gamma/beta shapes {:?}/{:?}, expected [{}]",
            gamma.shape(),
            beta.shape(),
            c
        )));
    }
    let src = input.data();
    let mut normalized = Tensor::zeros(input.shape());
    let inv_std: Vec<T> = {
        let stats = par::map_range(c, |ci| {
            let plane = &src[ci * n..(ci + 1) * n];
            let mean = plane.iter().map(|x| x.to_f64().unwrap()).sum::<f64>() / n as f64;
            let var = plane
                .iter()
                .map(|x| {
                    let d = x.to_f64().unwrap() - mean;
                    d * d
                })
                .sum::<f64>()
                / n as f64;
            (mean, 1.0 / (var + eps).sqrt())
        });
        par::for_each_chunk_mut(normalized.data_mut(), n, |ci, dst| {
            let (mean, inv) = stats[ci];
            let (mean, inv) = (T::of(mean), T::of(inv));
            for (d, &x) in dst.iter_mut().zip(&src[ci * n..(ci + 1) * n]) {
                *d = (x - mean) * inv;
            }
        });
        stats.into_iter().map(|(_, inv)| T::of(inv)).collect()
    };
    let mut out = normalized.clone();
    par::for_each_chunk_mut(out.data_mut(), n, |ci, dst| {
        let (g, b) = (gamma.data()[ci], beta.data()[ci]);
        for v in dst.iter_mut() {
            *v = g * *v + b;
        }
    });
    Ok((out, BnState { normalized, inv_std }))
}

/// Exact gradient through the batch mean and variance:
/// `dx = inv_std / N · (N·dxhat − Σdxhat − xhat·Σ(dxhat·xhat))`.
pub fn batch_norm_vjp<T: Real>(
    state: &BnState<T>,
    gamma: &Tensor<T>,
    upstream: &Tensor<T>,
) -> Result<BnGrads<T>> {
    let (c, h, w) = state.normalized.dims3()?;
    if upstream.shape() != state.normalized.shape() || gamma.shape() != [c] {
        return Err(Error::invalid("batch_norm_vjp: shape mismatch"));
    }
    let n = h * w;
    let xhat = state.normalized.data();
    let up = upstream.data();
    let sums = par::map_range(c, |ci| {
        let xs = &xhat[ci * n..(ci + 1) * n];
        let us = &up[ci * n..(ci + 1) * n];
        let sum_up: T = us.iter().copied().sum();
        let sum_up_xhat: T = us.iter().zip(xs).map(|(&u, &x)| u * x).sum();
        (sum_up, sum_up_xhat)
    });
    let mut grad_input = Tensor::zeros(upstream.shape());
    let nt = T::of(n as f64);
    par::for_each_chunk_mut(grad_input.data_mut(), n, |ci, dst| {
        let g = gamma.data()[ci];
        let (sum_up, sum_up_xhat) = sums[ci];
        let scale = g * state.inv_std[ci] / nt;
        let xs = &xhat[ci * n..(ci + 1) * n];
        let us = &up[ci * n..(ci + 1) * n];
        for ((d, &u), &x) in dst.iter_mut().zip(us).zip(xs) {
            *d = scale * (nt * u - sum_up - x * sum_up_xhat);
        }
    });
    Ok(BnGrads {
        input: grad_input,
        gamma: Tensor::from_vec(&[c], sums.iter().map(|s| s.1).collect())?,
        beta: Tensor::from_vec(&[c], sums.iter().map(|s| s.0).collect())?,
    })
}

#[derive(Debug, Clone)]
pub struct LinearGrads<T> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
}

/// Per-pixel linear map without bias (a 1×1 convolution): `weight` is
/// Q×P, `input` P×H×W, output Q×H×W.
pub fn linear_channels<T: Real>(input: &Tensor<T>, weight: &Tensor<T>) -> Result<Tensor<T>> {
    let (p, h, w) = input.dims3()?;
    let q = match weight.shape()[..] {
        [q, wp] if wp == p => q,
        _ => {
            return Err(Error::invalid(format!(
                "linear_channels: weight {:?} incompatible with input {:?}",
                weight.shape(),
                input.shape()
            )))
        }
    };
    let mut out = Tensor::zeros(&[q, h, w]);
    par_gemm(q, p, h * w, weight.data(), input.data(), false, out.data_mut(), false);
    Ok(out)
}

pub fn linear_channels_vjp<T: Real>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    upstream: &Tensor<T>,
) -> Result<LinearGrads<T>> {
    let (p, h, w) = input.dims3()?;
    let q = weight.shape()[0];
    if weight.shape() != [q, p] || upstream.shape() != [q, h, w] {
        return Err(Error::invalid("linear_channels_vjp: shape mismatch"));
    }
    let hw = h * w;
    let mut gw = Tensor::zeros(weight.shape());
    par_gemm(q, hw, p, upstream.data(), input.data(), true, gw.data_mut(), false);
    let wt = transpose(weight.data(), q, p);
    let mut gx = Tensor::zeros(input.shape());
    par_gemm(p, q, hw, &wt, upstream.data(), false, gx.data_mut(), false);
    Ok(LinearGrads {
        input: gx,
        weight: gw,
    })
}
