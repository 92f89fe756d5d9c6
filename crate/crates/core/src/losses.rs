//! Loss terms on the normalized response map and their gradients.
//!
//! All reductions are means: over pixels for the cross-entropy terms and
//! over scalar difference terms for the continuity term.

use std::str::FromStr;

use crate::error::{Error, Result};
use crate::image::LabelMap;
use crate::segnet::ResponseMap;
use crate::tensor::{Real, Tensor};

/// Which adjacent pairs the continuity term sums over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TvBounds {
    /// Every horizontally and vertically adjacent pair.
    #[default]
    Full,
    /// Only pairs whose top-left pixel has both a right and a lower
    /// neighbour (drops the last row's horizontal and the last column's
    /// vertical pairs).
    Paper,
}

impl FromStr for TvBounds {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(TvBounds::Full),
            "paper" => Ok(TvBounds::Paper),
            other => Err(Error::invalid(format!("tv bounds must be full|paper, got `{other}`"))),
        }
    }
}

impl std::fmt::Display for TvBounds {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TvBounds::Full => "full",
            TvBounds::Paper => "paper",
        })
    }
}

/// User scribbles: `mask[n]` marks annotated pixels, `labels[n]` their
/// desired label (ignored where the mask is off).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scribbles {
    pub height: usize,
    pub width: usize,
    pub mask: Vec<bool>,
    pub labels: Vec<u32>,
}

impl Scribbles {
    pub fn new(height: usize, width: usize, mask: Vec<bool>, labels: Vec<u32>) -> Result<Self> {
        if mask.len() != height * width || labels.len() != height * width {
            return Err(Error::invalid("scribble mask and labels must both be H×W"));
        }
        Ok(Scribbles {
            height,
            width,
            mask,
            labels,
        })
    }

    pub fn empty(height: usize, width: usize) -> Self {
        Scribbles {
            height,
            width,
            mask: vec![false; height * width],
            labels: vec![0; height * width],
        }
    }

    pub fn mark(&mut self, y: usize, x: usize, label: u32) {
        let n = y * self.width + x;
        self.mask[n] = true;
        self.labels[n] = label;
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    fn validate(&self, q: usize, h: usize, w: usize) -> Result<()> {
        if (self.height, self.width) != (h, w) {
            return Err(Error::invalid(format!(
                "scribbles are {}×{}, response is {}×{}",
                self.height, self.width, h, w
            )));
        }
        let bad: Vec<usize> = (0..h * w)
            .filter(|&n| self.mask[n] && self.labels[n] as usize >= q)
            .collect();
        if !bad.is_empty() {
            return Err(Error::invalid(format!(
                "{} scribbled pixels carry labels ≥ q = {} (first at index {})",
                bad.len(),
                q,
                bad[0]
            )));
        }
        Ok(())
    }
}

/// Scalar loss values of one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossValues {
    pub sim: f64,
    pub con: f64,
    pub scr: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct LossBreakdown<T> {
    pub sim: T,
    pub con: T,
    /// Zero when no scribbles were supplied.
    pub scr: T,
    pub total: T,
    pub grad_response: Tensor<T>,
}

impl<T: Real> LossBreakdown<T> {
    pub fn values(&self) -> LossValues {
        LossValues {
            sim: self.sim.to_f64().unwrap(),
            con: self.con.to_f64().unwrap(),
            scr: self.scr.to_f64().unwrap(),
            total: self.total.to_f64().unwrap(),
        }
    }
}

/// Sum over selected pixels of `-log softmax(r_n)[target]`, and the
/// unscaled gradient `softmax(r_n) - onehot(target)` at those pixels.
fn cross_entropy_sum<T: Real>(
    values: &Tensor<T>,
    target: impl Fn(usize) -> Option<usize>,
) -> (f64, usize, Tensor<T>) {
    let (q, h, w) = values.dims3().expect("response is rank 3");
    let hw = h * w;
    let data = values.data();
    let mut grad = Tensor::zeros(values.shape());
    let g = grad.data_mut();
    let mut total = 0.0f64;
    let mut count = 0usize;
    let mut logits = vec![0.0f64; q];
    for n in 0..hw {
        let Some(t) = target(n) else { continue };
        for (i, l) in logits.iter_mut().enumerate() {
            *l = data[i * hw + n].to_f64().unwrap();
        }
        let (arg, max) = logits
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |b, (i, l)| if l > b.1 { (i, l) } else { b });
        // ln(1 + Σ_{i≠arg} e^{l_i − max}) keeps precision for confident pixels.
        let rest: f64 = logits
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != arg)
            .map(|(_, &l)| (l - max).exp())
            .sum();
        let log_norm = rest.ln_1p();
        let lse = max + log_norm;
        total += (max - logits[t]) + log_norm;
        count += 1;
        for (i, &l) in logits.iter().enumerate() {
            let p = (l - lse).exp();
            g[i * hw + n] = T::of(if i == t { p - 1.0 } else { p });
        }
    }
    (total, count, grad)
}

fn scale<T: Real>(t: &mut Tensor<T>, s: f64) {
    let s = T::of(s);
    t.data_mut().iter_mut().for_each(|v| *v *= s);
}

/// Feature-similarity term: mean cross-entropy of `softmax(r′_n)` against
/// the pseudo-targets `labels` (held constant).
pub fn sim_loss<T: Real>(response: &ResponseMap<T>, labels: &LabelMap) -> Result<(T, Tensor<T>)> {
    let (q, h, w) = response.dims();
    if (labels.height(), labels.width()) != (h, w) {
        return Err(Error::invalid("sim_loss: label map and response differ in size"));
    }
    let l = labels.as_slice();
    if let Some(bad) = l.iter().position(|&c| c as usize >= q) {
        return Err(Error::invalid(format!("sim_loss: label {} ≥ q at pixel {}", l[bad], bad)));
    }
    let (sum, count, mut grad) = cross_entropy_sum(&response.values, |n| Some(l[n] as usize));
    let inv = 1.0 / count as f64;
    scale(&mut grad, inv);
    Ok((T::of(sum * inv), grad))
}

/// Partial cross-entropy over scribbled pixels only; `(0, 0)` when nothing
/// is scribbled.
pub fn scr_loss<T: Real>(response: &ResponseMap<T>, scr: &Scribbles) -> Result<(T, Tensor<T>)> {
    let (q, h, w) = response.dims();
    scr.validate(q, h, w)?;
    let (sum, count, mut grad) = cross_entropy_sum(&response.values, |n| {
        scr.mask[n].then_some(scr.labels[n] as usize)
    });
    if count == 0 {
        return Ok((T::zero(), grad));
    }
    let inv = 1.0 / count as f64;
    scale(&mut grad, inv);
    Ok((T::of(sum * inv), grad))
}

/// Anisotropic L1 total variation of the response map, averaged over the
/// number of scalar difference terms. The gradient uses `sign(0) = 0`.
pub fn con_loss<T: Real>(response: &ResponseMap<T>, bounds: TvBounds) -> (T, Tensor<T>) {
    let (q, h, w) = response.dims();
    let hw = h * w;
    let data = response.values.data();
    let mut grad = Tensor::zeros(response.values.shape());
    // (rows, cols) ranges for the top-left pixel of each pair.
    let (h_rows, h_cols, v_rows, v_cols) = match bounds {
        TvBounds::Full => (h, w.saturating_sub(1), h.saturating_sub(1), w),
        TvBounds::Paper => {
            let (r, c) = (h.saturating_sub(1), w.saturating_sub(1));
            (r, c, r, c)
        }
    };
    let terms = q * (h_rows * h_cols + v_rows * v_cols);
    if terms == 0 {
        return (T::zero(), grad);
    }
    let g = grad.data_mut();
    let mut sum = 0.0f64;
    let sign = |d: T| {
        if d > T::zero() {
            T::one()
        } else if d < T::zero() {
            -T::one()
        } else {
            T::zero()
        }
    };
    for c in 0..q {
        let base = c * hw;
        for y in 0..h_rows {
            for x in 0..h_cols {
                let (a, b) = (base + y * w + x, base + y * w + x + 1);
                let d = data[b] - data[a];
                sum += d.abs().to_f64().unwrap();
                let s = sign(d);
                g[b] += s;
                g[a] -= s;
            }
        }
        for y in 0..v_rows {
            for x in 0..v_cols {
                let (a, b) = (base + y * w + x, base + (y + 1) * w + x);
                let d = data[b] - data[a];
                sum += d.abs().to_f64().unwrap();
                let s = sign(d);
                g[b] += s;
                g[a] -= s;
            }
        }
    }
    let inv = 1.0 / terms as f64;
    scale(&mut grad, inv);
    (T::of(sum * inv), grad)
}

/// `sim + mu·con (+ nu·scr)` and the matching gradient.
pub fn total_loss<T: Real>(
    response: &ResponseMap<T>,
    labels: &LabelMap,
    scr: Option<&Scribbles>,
    mu: f64,
    nu: f64,
    bounds: TvBounds,
) -> Result<LossBreakdown<T>> {
    let (sim, mut grad) = sim_loss(response, labels)?;
    let (con, g_con) = con_loss(response, bounds);
    let (mu_t, nu_t) = (T::of(mu), T::of(nu));
    for (g, c) in grad.data_mut().iter_mut().zip(g_con.data()) {
        *g += mu_t * *c;
    }
    let mut total = sim + mu_t * con;
    let mut scr_value = T::zero();
    if let Some(s) = scr {
        let (v, g_scr) = scr_loss(response, s)?;
        for (g, c) in grad.data_mut().iter_mut().zip(g_scr.data()) {
            *g += nu_t * *c;
        }
        total += nu_t * v;
        scr_value = v;
    }
    Ok(LossBreakdown {
        sim,
        con,
        scr: scr_value,
        total,
        grad_response: grad,
    })
}
