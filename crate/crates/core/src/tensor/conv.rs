use super::{par_gemm, transpose, Real, Tensor};
use crate::error::{Error, Result};
use crate::par;

/// Cotangents of [`conv2d`].
#[derive(Debug, Clone)]
pub struct ConvGrads<T> {
    /// `None` when the caller did not ask for it (first layer).
    pub input: Option<Tensor<T>>,
    pub kernels: Tensor<T>,
    pub bias: Tensor<T>,
}

fn check_shapes<T: Real>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
) -> Result<(usize, usize, usize, usize)> {
    let (c, h, w) = input.dims3()?;
    match kernels.shape()[..] {
        [o, kc, 3, 3] if kc == c => Ok((o, c, h, w)),
        _ => Err(Error::invalid(format!(
            "conv2d: kernels {:?} incompatible with input {:?} (expected [O, {}, 3, 3])",
            kernels.shape(),
            input.shape(),
            c
        ))),
    }
}

/// How the conv reads neighbours outside the image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub enum Padding {
    /// Out-of-bounds neighbours are 0.
    #[default]
    Zero,
    /// Out-of-bounds neighbours repeat the nearest edge pixel.
    Replicate,
}

impl std::str::FromStr for Padding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(Padding::Zero),
            "replicate" => Ok(Padding::Replicate),
            _ => Err(Error::invalid(format!("unknown padding {s:?} (expected zero|replicate)"))),
        }
    }
}

impl std::fmt::Display for Padding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Padding::Zero => "zero",
            Padding::Replicate => "replicate",
        })
    }
}

/// Source coordinate for output coordinate `i` and tap offset `d - 1`.
#[inline]
fn source(i: usize, d: usize, n: usize, padding: Padding) -> Option<usize> {
    let s = i + d;
    if s >= 1 && s <= n {
        return Some(s - 1);
    }
    match padding {
        Padding::Zero => None,
        Padding::Replicate => Some(if s < 1 { 0 } else { n - 1 }),
    }
}

/// Range of output columns whose tap `dx` reads an in-bounds column.
#[inline]
fn interior(dx: usize, w: usize) -> (usize, usize) {
    (1usize.saturating_sub(dx), (w + 1 - dx).min(w))
}

/// Unfolds padded 3×3 neighbourhoods into a (9·C)×(H·W) matrix whose row
/// `c·9 + dy·3 + dx` holds `input[c, y+dy-1, x+dx-1]`.
fn im2col<T: Real>(input: &[T], c: usize, h: usize, w: usize, padding: Padding) -> Vec<T> {
    let hw = h * w;
    let mut cols = vec![T::zero(); 9 * c * hw];
    par::for_each_chunk_mut(&mut cols, hw, |row, dst| {
        let (ci, tap) = (row / 9, row % 9);
        let (dy, dx) = (tap / 3, tap % 3);
        let src = &input[ci * hw..(ci + 1) * hw];
        for y in 0..h {
            let Some(sy) = source(y, dy, h, padding) else {
                continue;
            };
            let srow = &src[sy * w..(sy + 1) * w];
            let drow = &mut dst[y * w..(y + 1) * w];
            let (lo, hi) = interior(dx, w);
            if lo < hi {
                drow[lo..hi].copy_from_slice(&srow[lo + dx - 1..hi + dx - 1]);
            }
            if padding == Padding::Replicate {
                drow[..lo].fill(srow[0]);
                drow[hi.max(lo)..].fill(srow[w - 1]);
            }
        }
    });
    cols
}

/// Adjoint of [`im2col`]: scatters-and-adds every row back into C×H×W.
fn col2im<T: Real>(cols: &[T], c: usize, h: usize, w: usize, padding: Padding) -> Vec<T> {
    let hw = h * w;
    let mut out = vec![T::zero(); c * hw];
    par::for_each_chunk_mut(&mut out, hw, |ci, dst| {
        for tap in 0..9 {
            let (dy, dx) = (tap / 3, tap % 3);
            let src = &cols[(ci * 9 + tap) * hw..(ci * 9 + tap + 1) * hw];
            for y in 0..h {
                let Some(sy) = source(y, dy, h, padding) else {
                    continue;
                };
                let srow = &src[y * w..(y + 1) * w];
                let drow = &mut dst[sy * w..(sy + 1) * w];
                let (lo, hi) = interior(dx, w);
                for x in lo..hi {
                    drow[x + dx - 1] += srow[x];
                }
                if padding == Padding::Replicate {
                    for &v in &srow[..lo] {
                        drow[0] += v;
                    }
                    for &v in &srow[hi.max(lo)..] {
                        drow[w - 1] += v;
                    }
                }
            }
        }
    });
    out
}

/// 3×3 convolution, stride 1, zero padding 1: `input` C×H×W, `kernels`
/// O×C×3×3, `bias` O → output O×H×W.
pub fn conv2d<T: Real>(input: &Tensor<T>, kernels: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    conv2d_padded(input, kernels, bias, Padding::Zero)
}

/// [`conv2d`] with a choice of border handling.
pub fn conv2d_padded<T: Real>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    bias: &Tensor<T>,
    padding: Padding,
) -> Result<Tensor<T>> {
    let (o, c, h, w) = check_shapes(input, kernels)?;
    if bias.shape() != [o] {
        return Err(Error::invalid(format!(
            "conv2d: bias shape {:?}, expected [{}]",
            bias.shape(),
            o
        )));
    }
    let hw = h * w;
    let mut out = Tensor::zeros(&[o, h, w]);
    for (plane, &b) in out.data_mut().chunks_mut(hw.max(1)).zip(bias.data()) {
        plane.fill(b);
    }
    let cols = im2col(input.data(), c, h, w, padding);
    par_gemm(o, 9 * c, hw, kernels.data(), &cols, false, out.data_mut(), true);
    Ok(out)
}

/// Vector-Jacobian product of [`conv2d`] at `(input, kernels)` for the
/// cotangent `upstream` (O×H×W).
pub fn conv2d_vjp<T: Real>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    upstream: &Tensor<T>,
    need_input: bool,
) -> Result<ConvGrads<T>> {
    conv2d_padded_vjp(input, kernels, upstream, need_input, Padding::Zero)
}

/// Vector-Jacobian product of [`conv2d_padded`].
pub fn conv2d_padded_vjp<T: Real>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    upstream: &Tensor<T>,
    need_input: bool,
    padding: Padding,
) -> Result<ConvGrads<T>> {
    let (o, c, h, w) = check_shapes(input, kernels)?;
    if upstream.shape() != [o, h, w] {
        return Err(Error::invalid(format!(
            "conv2d_vjp: upstream shape {:?}, expected [{}, {}, {}]",
            upstream.shape(),
            o,
            h,
            w
        )));
    }
    let hw = h * w;
    let up = upstream.data();

    let bias: Vec<T> = up
        .chunks(hw.max(1))
        .map(|plane| plane.iter().copied().sum())
        .collect();

    let cols = im2col(input.data(), c, h, w, padding);
    let mut gk = Tensor::zeros(kernels.shape());
    // dK = up · colsᵀ
    par_gemm(o, hw, 9 * c, up, &cols, true, gk.data_mut(), false);
    drop(cols);

    let grad_input = if need_input {
        // dcols = Kᵀ · up, then fold back.
        let kt = transpose(kernels.data(), o, 9 * c);
        let mut dcols = vec![T::zero(); 9 * c * hw];
        par_gemm(9 * c, o, hw, &kt, up, false, &mut dcols, false);
        Some(Tensor::from_vec(&[c, h, w], col2im(&dcols, c, h, w, padding))?)
    } else {
        None
    };

    Ok(ConvGrads {
        input: grad_input,
        kernels: gk,
        bias: Tensor::from_vec(&[o], bias)?,
    })
}
