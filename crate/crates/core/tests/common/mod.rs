#![allow(dead_code)]

use diffseg::image::{Image, LabelMap};
use diffseg::losses::{con_loss, scr_loss, sim_loss, total_loss, Scribbles, TvBounds};
use diffseg::losses::LossBreakdown;
use diffseg::segnet::{
    assign_labels, backward, forward, init_params, Forward, HyperParams, NetworkFn, NetworkParams, ParamSet,
    ResponseMap,
};
use diffseg::tensor::gradcheck::{gradient_check_report, gradient_check_with, Differentiable, FdScheme, FnOp, GradCheckReport};
use diffseg::tensor::{batch_norm_channels, batch_norm_vjp, conv2d, conv2d_vjp, relu, relu_vjp, Tensor};
use diffseg::Result;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-3;
pub const TOL: f64 = 1e-4;
pub const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

/// Data stream for test inputs, kept apart from the checker's own cotangent
/// stream (which is seeded with the plain seed).
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_da7a)
}

pub fn uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

/// Uniform values with every entry at least `margin` away from zero.
pub fn away_from_zero(shape: &[usize], margin: f64, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    uniform(shape, -1.0, 1.0, rng).map(|v| if v.abs() < margin { v.signum() * margin + v } else { v })
}

/// Pairwise distinct values on a shuffled grid with spacing `gap`, so no
/// two entries are closer than `gap`.
pub fn separated(shape: &[usize], gap: f64, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let mut v: Vec<f64> = (0..n).map(|i| (i as f64 - n as f64 / 2.0) * gap).collect();
    v.shuffle(rng);
    Tensor::from_vec(shape, v).unwrap()
}

pub fn random_image(h: usize, w: usize, rng: &mut ChaCha8Rng) -> Image {
    let data = (0..3 * h * w).map(|_| rng.gen_range(0.0f32..1.0)).collect();
    Image::from_planes(h, w, data).unwrap()
}

pub fn random_labels(h: usize, w: usize, q: usize, rng: &mut ChaCha8Rng) -> LabelMap {
    LabelMap::new(h, w, (0..h * w).map(|_| rng.gen_range(0..q as u32)).collect()).unwrap()
}

pub fn random_scribbles(h: usize, w: usize, q: usize, rng: &mut ChaCha8Rng) -> Scribbles {
    let mut s = Scribbles::empty(h, w);
    for y in 0..h {
        for x in 0..w {
            if rng.gen_bool(0.3) {
                s.mark(y, x, rng.gen_range(0..q as u32));
            }
        }
    }
    if s.count() == 0 {
        s.mark(0, 0, 0);
    }
    s
}

fn scalar(v: f64) -> Tensor<f64> {
    Tensor::from_vec(&[1], vec![v]).unwrap()
}

fn scaled(g: Tensor<f64>, up: &Tensor<f64>) -> Tensor<f64> {
    let s = up.data()[0];
    g.map(|v| v * s)
}

pub fn check_conv(seed: u64) -> Result<GradCheckReport> {
    let mut r = rng(seed);
    let x = uniform(&[3, 6, 7], -1.0, 1.0, &mut r);
    let k = uniform(&[4, 3, 3, 3], -0.5, 0.5, &mut r);
    let b = uniform(&[4], -0.5, 0.5, &mut r);
    let op = FnOp {
        eval: |i: &[Tensor<f64>]| conv2d(&i[0], &i[1], &i[2]),
        vjp: |i: &[Tensor<f64>], up: &Tensor<f64>| {
            let g = conv2d_vjp(&i[0], &i[1], up, true)?;
            Ok(vec![g.input.unwrap(), g.kernels, g.bias])
        },
    };
    gradient_check_report(&op, &[x, k, b], STEP, seed)
}

pub fn check_relu(seed: u64) -> Result<GradCheckReport> {
    let mut r = rng(seed);
    // Margin well above the step keeps every probe on one side of the kink.
    let x = away_from_zero(&[4, 5, 6], 0.01, &mut r);
    let op = FnOp {
        eval: |i: &[Tensor<f64>]| Ok(relu(&i[0])),
        vjp: |i: &[Tensor<f64>], up: &Tensor<f64>| Ok(vec![relu_vjp(&i[0], up)?]),
    };
    gradient_check_report(&op, &[x], STEP, seed)
}

pub fn check_batch_norm(seed: u64) -> Result<GradCheckReport> {
    let mut r = rng(seed);
    let x = uniform(&[4, 5, 6], -2.0, 2.0, &mut r);
    let g = uniform(&[4], 0.5, 1.5, &mut r);
    let b = uniform(&[4], -0.5, 0.5, &mut r);
    let op = FnOp {
        eval: |i: &[Tensor<f64>]| Ok(batch_norm_channels(&i[0], &i[1], &i[2], 1e-5)?.0),
        vjp: |i: &[Tensor<f64>], up: &Tensor<f64>| {
            let (_, state) = batch_norm_channels(&i[0], &i[1], &i[2], 1e-5)?;
            let g = batch_norm_vjp(&state, &i[1], up)?;
            Ok(vec![g.input, g.gamma, g.beta])
        },
    };
    gradient_check_report(&op, &[x, g, b], STEP, seed)
}

pub fn check_sim(seed: u64) -> Result<GradCheckReport> {
    let mut r = rng(seed);
    let (q, h, w) = (5, 6, 7);
    let resp = uniform(&[q, h, w], -2.0, 2.0, &mut r);
    let labels = random_labels(h, w, q, &mut r);
    let op = FnOp {
        eval: |i: &[Tensor<f64>]| Ok(scalar(sim_loss(&ResponseMap::normalized(i[0].clone())?, &labels)?.0)),
        vjp: |i: &[Tensor<f64>], up: &Tensor<f64>| {
            let (_, g) = sim_loss(&ResponseMap::normalized(i[0].clone())?, &labels)?;
            Ok(vec![scaled(g, up)])
        },
    };
    gradient_check_report(&op, &[resp], STEP, seed)
}

pub fn check_con(seed: u64, bounds: TvBounds) -> Result<GradCheckReport> {
    let mut r = rng(seed);
    let resp = separated(&[4, 6, 7], 0.01, &mut r);
    let op = FnOp {
        eval: |i: &[Tensor<f64>]| Ok(scalar(con_loss(&ResponseMap::normalized(i[0].clone())?, bounds).0)),
        vjp: |i: &[Tensor<f64>], up: &Tensor<f64>| {
            let (_, g) = con_loss(&ResponseMap::normalized(i[0].clone())?, bounds);
            Ok(vec![scaled(g, up)])
        },
    };
    gradient_check_report(&op, &[resp], STEP, seed)
}

pub fn check_scr(seed: u64) -> Result<GradCheckReport> {
    let mut r = rng(seed);
    let (q, h, w) = (5, 6, 7);
    let resp = uniform(&[q, h, w], -2.0, 2.0, &mut r);
    let scr = random_scribbles(h, w, q, &mut r);
    let op = FnOp {
        eval: |i: &[Tensor<f64>]| Ok(scalar(scr_loss(&ResponseMap::normalized(i[0].clone())?, &scr)?.0)),
        vjp: |i: &[Tensor<f64>], up: &Tensor<f64>| {
            let (_, g) = scr_loss(&ResponseMap::normalized(i[0].clone())?, &scr)?;
            Ok(vec![scaled(g, up)])
        },
    };
    gradient_check_report(&op, &[resp], STEP, seed)
}

pub fn check_total(seed: u64) -> Result<GradCheckReport> {
    let mut r = rng(seed);
    let (q, h, w) = (4, 6, 7);
    let resp = separated(&[q, h, w], 0.01, &mut r);
    let labels = random_labels(h, w, q, &mut r);
    let scr = random_scribbles(h, w, q, &mut r);
    let f = |t: &Tensor<f64>| {
        total_loss(&ResponseMap::normalized(t.clone())?, &labels, Some(&scr), 5.0, 0.5, TvBounds::Full)
    };
    let op = FnOp {
        eval: |i: &[Tensor<f64>]| Ok(scalar(f(&i[0])?.total)),
        vjp: |i: &[Tensor<f64>], up: &Tensor<f64>| Ok(vec![scaled(f(&i[0])?.grad_response, up)]),
    };
    gradient_check_report(&op, &[resp], STEP, seed)
}

pub fn tiny_hp(seed: u64) -> HyperParams {
    HyperParams {
        layers: 2,
        features: 5,
        clusters: 4,
        seed,
        ..HyperParams::default()
    }
}

/// Whole network (responses as a function of every weight array) on a
/// random 3×8×8 image.
pub fn check_network(seed: u64, scheme: FdScheme) -> Result<GradCheckReport> {
    let mut r = rng(seed.wrapping_add(100));
    let image = random_image(8, 8, &mut r);
    let hp = tiny_hp(seed);
    let params = init_params::<f64>(&hp)?;
    let point: Vec<Tensor<f64>> = params.weights.arrays().into_iter().cloned().collect();
    let f = NetworkFn { image: &image, hp: &hp };
    gradient_check_with(&f, &point, STEP, seed, scheme)
}

/// Network followed by the total loss with the pseudo-targets frozen at the
/// starting point, i.e. the exact gradient a training step uses.
pub struct NetworkLoss {
    pub image: Image,
    pub hp: HyperParams,
    pub labels: LabelMap,
    pub scr: Scribbles,
}

impl NetworkLoss {
    fn params(&self, w: &[Tensor<f64>]) -> Result<NetworkParams<f64>> {
        Ok(NetworkParams::from_weights(ParamSet::from_arrays(self.hp.layers, w.to_vec())?))
    }

    fn run(&self, w: &[Tensor<f64>]) -> Result<(Forward<f64>, LossBreakdown<f64>)> {
        let fwd = forward(&self.image, &self.params(w)?, &self.hp)?;
        let hp = &self.hp;
        let loss = total_loss(&fwd.response, &self.labels, Some(&self.scr), hp.mu, hp.nu, hp.tv_bounds)?;
        Ok((fwd, loss))
    }

    /// ReLU pattern plus the sign of every horizontal/vertical response
    /// difference (the kinks of the L1 term).
    fn pattern(&self, w: &[Tensor<f64>]) -> Result<Vec<i8>> {
        let (fwd, _) = self.run(w)?;
        let mut out: Vec<i8> = fwd.state.relu_pattern().into_iter().map(i8::from).collect();
        let (q, h, wd) = fwd.response.dims();
        let r = fwd.response.values.data();
        for c in 0..q {
            for y in 0..h {
                for x in 0..wd {
                    let n = c * h * wd + y * wd + x;
                    if x + 1 < wd {
                        out.push((r[n + 1] - r[n]).signum() as i8);
                    }
                    if y + 1 < h {
                        out.push((r[n + wd] - r[n]).signum() as i8);
                    }
                }
            }
        }
        Ok(out)
    }
}

impl Differentiable for NetworkLoss {
    fn eval(&self, w: &[Tensor<f64>]) -> Result<Tensor<f64>> {
        Ok(scalar(self.run(w)?.1.total))
    }

    fn vjp(&self, w: &[Tensor<f64>], up: &Tensor<f64>) -> Result<Vec<Tensor<f64>>> {
        let p = self.params(w)?;
        let (fwd, loss) = self.run(w)?;
        let g = backward(&self.image, &p, &fwd.state, &scaled(loss.grad_response, up))?;
        Ok(g.arrays().into_iter().cloned().collect())
    }

    fn same_piece(&self, a: &[Tensor<f64>], b: &[Tensor<f64>]) -> Result<bool> {
        Ok(self.pattern(a)? == self.pattern(b)?)
    }
}

pub fn check_network_loss(seed: u64, scheme: FdScheme) -> Result<GradCheckReport> {
    let mut r = rng(seed.wrapping_add(200));
    let image = random_image(8, 8, &mut r);
    let hp = HyperParams { mu: 1.0, ..tiny_hp(seed) };
    let params = init_params::<f64>(&hp)?;
    let labels = assign_labels(&forward(&image, &params, &hp)?.response);
    let scr = random_scribbles(8, 8, hp.clusters, &mut r);
    let point: Vec<Tensor<f64>> = params.weights.arrays().into_iter().cloned().collect();
    let f = NetworkLoss { image, hp, labels, scr };
    gradient_check_with(&f, &point, STEP, seed, scheme)
}
