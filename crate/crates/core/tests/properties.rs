mod common;

use common::{away_from_zero, rng, uniform};
use diffseg::image::{Image, LabelMap};
use diffseg::losses::{con_loss, scr_loss, sim_loss, total_loss, Scribbles, TvBounds};
use diffseg::segnet::{assign_labels, forward, init_params, HyperParams, ResponseMap};
use diffseg::tensor::{
    batch_norm_channels, batch_norm_vjp, conv2d, conv2d_vjp, linear_channels, linear_channels_vjp, relu,
    relu_vjp, Tensor,
};
use proptest::prelude::*;

fn axpby(a: f64, x: &Tensor<f64>, b: f64, y: &Tensor<f64>) -> Tensor<f64> {
    let data = x.data().iter().zip(y.data()).map(|(p, q)| a * p + b * q).collect();
    Tensor::from_vec(x.shape(), data).unwrap()
}

/// ⟨vjp(u), δ⟩ against ⟨u, (f(x+hδ) − f(x−hδ)) / 2h⟩, relative to
/// ‖vjp(u)‖·‖δ‖.
fn transpose_gap(
    f: impl Fn(&Tensor<f64>) -> Tensor<f64>,
    vjp: impl Fn(&Tensor<f64>, &Tensor<f64>) -> Tensor<f64>,
    x: &Tensor<f64>,
    seed: u64,
) -> f64 {
    let mut r = rng(seed);
    let y = f(x);
    let u = uniform(y.shape(), -1.0, 1.0, &mut r);
    let delta = uniform(x.shape(), -1.0, 1.0, &mut r);
    let h = 1e-6;
    let plus = f(&axpby(1.0, x, h, &delta));
    let minus = f(&axpby(1.0, x, -h, &delta));
    let jvp = axpby(0.5 / h, &plus, -0.5 / h, &minus);
    let g = vjp(x, &u);
    let lhs = g.dot(&delta);
    let rhs = u.dot(&jvp);
    let scale = (g.dot(&g) * delta.dot(&delta)).sqrt();
    (lhs - rhs).abs() / scale.max(1e-8)
}

fn config() -> ProptestConfig {
    ProptestConfig::with_cases(48)
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn conv2d_is_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0,
                        c in 1usize..4, o in 1usize..4, h in 1usize..7, w in 1usize..7) {
        let mut r = rng(seed);
        let x = uniform(&[c, h, w], -1.0, 1.0, &mut r);
        let y = uniform(&[c, h, w], -1.0, 1.0, &mut r);
        let k = uniform(&[o, c, 3, 3], -1.0, 1.0, &mut r);
        let zero = Tensor::zeros(&[o]);
        let lhs = conv2d(&axpby(a, &x, b, &y), &k, &zero).unwrap();
        let rhs = axpby(a, &conv2d(&x, &k, &zero).unwrap(), b, &conv2d(&y, &k, &zero).unwrap());
        prop_assert!(lhs.max_abs_diff(&rhs) < 1e-5);

        let u = uniform(&[o, h, w], -1.0, 1.0, &mut r);
        let v = uniform(&[o, h, w], -1.0, 1.0, &mut r);
        let g = |up: &Tensor<f64>| conv2d_vjp(&x, &k, up, true).unwrap();
        let mixed = g(&axpby(a, &u, b, &v));
        let (gu, gv) = (g(&u), g(&v));
        let lin_in = axpby(a, gu.input.as_ref().unwrap(), b, gv.input.as_ref().unwrap());
        prop_assert!(mixed.input.unwrap().max_abs_diff(&lin_in) < 1e-5);
        prop_assert!(mixed.kernels.max_abs_diff(&axpby(a, &gu.kernels, b, &gv.kernels)) < 1e-5);
    }

    #[test]
    fn batch_norm_whitens_each_channel(seed in any::<u64>(), c in 1usize..6, h in 1usize..9, w in 2usize..9,
                                       scale in 1e-3f64..10.0, shift in -5.0f64..5.0) {
        let mut r = rng(seed);
        let x = uniform(&[c, h, w], -1.0, 1.0, &mut r).map(|v| v * scale + shift);
        let (out, _) = batch_norm_channels(&x, &Tensor::full(&[c], 1.0), &Tensor::zeros(&[c]), 1e-5).unwrap();
        let n = h * w;
        for ch in 0..c {
            let plane = &x.data()[ch * n..(ch + 1) * n];
            let mean_in = plane.iter().sum::<f64>() / n as f64;
            let v = plane.iter().map(|p| (p - mean_in).powi(2)).sum::<f64>() / n as f64;
            let o = &out.data()[ch * n..(ch + 1) * n];
            let mean = o.iter().sum::<f64>() / n as f64;
            let var = o.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / n as f64;
            prop_assert!(mean.abs() < 1e-5, "mean {mean}");
            prop_assert!((var - v / (v + 1e-5)).abs() < 1e-4, "var {var} expected {}", v / (v + 1e-5));
        }
    }

    #[test]
    fn batch_norm_whitens_in_single_precision(seed in any::<u64>(), c in 1usize..6, h in 2usize..9, w in 2usize..9) {
        let mut r = rng(seed);
        let x = uniform(&[c, h, w], -3.0, 3.0, &mut r).cast::<f32>();
        let (out, _) = batch_norm_channels(&x, &Tensor::full(&[c], 1.0f32), &Tensor::zeros(&[c]), 1e-5).unwrap();
        let n = h * w;
        for ch in 0..c {
            let plane: Vec<f64> = x.data()[ch * n..(ch + 1) * n].iter().map(|&v| v as f64).collect();
            let mean_in = plane.iter().sum::<f64>() / n as f64;
            let v = plane.iter().map(|p| (p - mean_in).powi(2)).sum::<f64>() / n as f64;
            let o: Vec<f64> = out.data()[ch * n..(ch + 1) * n].iter().map(|&v| v as f64).collect();
            let mean = o.iter().sum::<f64>() / n as f64;
            let var = o.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / n as f64;
            prop_assert!(mean.abs() < 1e-5, "mean {mean}");
            prop_assert!((var - v / (v + 1e-5)).abs() < 1e-4);
        }
    }

    #[test]
    fn vjps_are_transposes_of_directional_derivatives(seed in any::<u64>()) {
        let mut r = rng(seed);
        let x = uniform(&[3, 5, 4], -1.0, 1.0, &mut r);
        let k = uniform(&[2, 3, 3, 3], -1.0, 1.0, &mut r);
        let bias = uniform(&[2], -1.0, 1.0, &mut r);
        let gap = transpose_gap(
            |x| conv2d(x, &k, &bias).unwrap(),
            |x, u| conv2d_vjp(x, &k, u, true).unwrap().input.unwrap(),
            &x, seed);
        prop_assert!(gap < 1e-4, "conv input {gap}");
        let gap = transpose_gap(
            |k| conv2d(&x, k, &bias).unwrap(),
            |k, u| conv2d_vjp(&x, k, u, false).unwrap().kernels,
            &k, seed);
        prop_assert!(gap < 1e-4, "conv kernels {gap}");

        let g = uniform(&[3], 0.5, 1.5, &mut r);
        let b = uniform(&[3], -1.0, 1.0, &mut r);
        let gap = transpose_gap(
            |x| batch_norm_channels(x, &g, &b, 1e-5).unwrap().0,
            |x, u| batch_norm_vjp(&batch_norm_channels(x, &g, &b, 1e-5).unwrap().1, &g, u).unwrap().input,
            &x, seed);
        prop_assert!(gap < 1e-4, "bn {gap}");

        let wc = uniform(&[4, 3], -1.0, 1.0, &mut r);
        let gap = transpose_gap(
            |x| linear_channels(x, &wc).unwrap(),
            |x, u| linear_channels_vjp(x, &wc, u).unwrap().input,
            &x, seed);
        prop_assert!(gap < 1e-4, "linear {gap}");

        let xr = away_from_zero(&[3, 5, 4], 0.01, &mut r);
        let gap = transpose_gap(relu, |x, u| relu_vjp(x, u).unwrap(), &xr, seed);
        prop_assert!(gap < 1e-4, "relu {gap}");
    }

    #[test]
    fn primitives_are_deterministic(seed in any::<u64>()) {
        let mut r = rng(seed);
        let x = uniform(&[3, 6, 5], -1.0, 1.0, &mut r).cast::<f32>();
        let k = uniform(&[4, 3, 3, 3], -1.0, 1.0, &mut r).cast::<f32>();
        let b = uniform(&[4], -1.0, 1.0, &mut r).cast::<f32>();
        let u = uniform(&[4, 6, 5], -1.0, 1.0, &mut r).cast::<f32>();
        let run = || {
            let y = conv2d(&x, &k, &b).unwrap();
            let g = conv2d_vjp(&x, &k, &u, true).unwrap();
            let (n, st) = batch_norm_channels(&y, &Tensor::full(&[4], 1.0), &Tensor::zeros(&[4]), 1e-5).unwrap();
            let gb = batch_norm_vjp(&st, &Tensor::full(&[4], 1.0), &u).unwrap();
            (y, g.input.unwrap(), g.kernels, n, gb.input)
        };
        let (a, b2) = (run(), run());
        prop_assert_eq!(a.0.data(), b2.0.data());
        prop_assert_eq!(a.1.data(), b2.1.data());
        prop_assert_eq!(a.2.data(), b2.2.data());
        prop_assert_eq!(a.3.data(), b2.3.data());
        prop_assert_eq!(a.4.data(), b2.4.data());
    }

    #[test]
    fn labels_ignore_per_channel_shifts(seed in any::<u64>(), q in 2usize..8, h in 1usize..8, w in 2usize..8) {
        let mut r = rng(seed);
        let raw = uniform(&[q, h, w], -2.0, 2.0, &mut r);
        let shift = uniform(&[q], -10.0, 10.0, &mut r);
        let n = h * w;
        let shifted = Tensor::from_vec(raw.shape(),
            raw.data().iter().enumerate().map(|(i, v)| v + shift.data()[i / n]).collect()).unwrap();
        let (g, b) = (Tensor::full(&[q], 1.0), Tensor::zeros(&[q]));
        let norm = |t: &Tensor<f64>| ResponseMap::normalized(batch_norm_channels(t, &g, &b, 1e-5).unwrap().0).unwrap();
        prop_assert_eq!(assign_labels(&norm(&raw)), assign_labels(&norm(&shifted)));
    }

    #[test]
    fn label_count_is_between_one_and_q(seed in any::<u64>(), q in 2usize..10, h in 1usize..10, w in 1usize..10) {
        let mut r = rng(seed);
        let resp = ResponseMap::normalized(uniform(&[q, h, w], -2.0, 2.0, &mut r)).unwrap();
        let k = assign_labels(&resp).unique_count();
        prop_assert!((1..=q).contains(&k));
    }

    #[test]
    fn sim_loss_ignores_joint_channel_permutation(seed in any::<u64>(), q in 2usize..7) {
        let mut r = rng(seed);
        let (h, w) = (4, 5);
        let n = h * w;
        let resp = uniform(&[q, h, w], -2.0, 2.0, &mut r);
        let labels = common::random_labels(h, w, q, &mut r);
        let mut perm: Vec<usize> = (0..q).collect();
        use rand::seq::SliceRandom;
        perm.shuffle(&mut r);
        let mut permuted = vec![0.0; q * n];
        for c in 0..q {
            permuted[perm[c] * n..(perm[c] + 1) * n].copy_from_slice(&resp.data()[c * n..(c + 1) * n]);
        }
        let plabels = LabelMap::new(h, w, labels.as_slice().iter().map(|&l| perm[l as usize] as u32).collect()).unwrap();
        let a = sim_loss(&ResponseMap::normalized(resp).unwrap(), &labels).unwrap().0;
        let b = sim_loss(&ResponseMap::normalized(Tensor::from_vec(&[q, h, w], permuted).unwrap()).unwrap(), &plabels).unwrap().0;
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn con_loss_is_mirror_invariant_and_nonnegative(seed in any::<u64>(), q in 1usize..5, h in 1usize..7, w in 1usize..7) {
        let mut r = rng(seed);
        let resp = uniform(&[q, h, w], -2.0, 2.0, &mut r);
        let d = resp.data();
        let flip_x = Tensor::from_vec(&[q, h, w], (0..q * h * w).map(|i| {
            let (c, y, x) = (i / (h * w), i / w % h, i % w);
            d[c * h * w + y * w + (w - 1 - x)]
        }).collect()).unwrap();
        let flip_y = Tensor::from_vec(&[q, h, w], (0..q * h * w).map(|i| {
            let (c, y, x) = (i / (h * w), i / w % h, i % w);
            d[c * h * w + (h - 1 - y) * w + x]
        }).collect()).unwrap();
        let con = |t: Tensor<f64>| con_loss(&ResponseMap::normalized(t).unwrap(), TvBounds::Full).0;
        let base = con(resp.clone());
        prop_assert!(base >= 0.0);
        prop_assert!((base - con(flip_x)).abs() < 1e-12);
        prop_assert!((base - con(flip_y)).abs() < 1e-12);
        if h * w > 1 {
            prop_assert!(base > 0.0);
        }
    }

    #[test]
    fn con_loss_vanishes_on_constant_maps(q in 1usize..5, h in 1usize..7, w in 1usize..7, v in -3.0f64..3.0) {
        let resp = ResponseMap::normalized(Tensor::full(&[q, h, w], v)).unwrap();
        let (value, grad) = con_loss(&resp, TvBounds::Full);
        prop_assert_eq!(value, 0.0);
        prop_assert!(grad.data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn scr_equals_sim_when_everything_is_scribbled(seed in any::<u64>(), q in 2usize..6) {
        let mut r = rng(seed);
        let (h, w) = (5, 4);
        let resp = ResponseMap::normalized(uniform(&[q, h, w], -2.0, 2.0, &mut r)).unwrap();
        let labels = assign_labels(&resp);
        let scr = Scribbles::new(h, w, vec![true; h * w], labels.as_slice().to_vec()).unwrap();
        let (a, ga) = sim_loss(&resp, &labels).unwrap();
        let (b, gb) = scr_loss(&resp, &scr).unwrap();
        prop_assert_eq!(a, b);
        prop_assert_eq!(ga.data(), gb.data());
    }

    #[test]
    fn total_gradient_is_sum_of_parts(seed in any::<u64>(), mu in 0.0f64..10.0, nu in 0.0f64..2.0,
                                       paper in any::<bool>()) {
        let mut r = rng(seed);
        let (q, h, w) = (4, 5, 6);
        let bounds = if paper { TvBounds::Paper } else { TvBounds::Full };
        let resp = ResponseMap::normalized(uniform(&[q, h, w], -2.0, 2.0, &mut r)).unwrap();
        let labels = assign_labels(&resp);
        let scr = common::random_scribbles(h, w, q, &mut r);
        let t = total_loss(&resp, &labels, Some(&scr), mu, nu, bounds).unwrap();
        let (s, gs) = sim_loss(&resp, &labels).unwrap();
        let (c, gc) = con_loss(&resp, bounds);
        let (k, gk) = scr_loss(&resp, &scr).unwrap();
        prop_assert!((t.total - (s + mu * c + nu * k)).abs() < 1e-12);
        prop_assert_eq!((t.sim, t.con, t.scr), (s, c, k));
        for i in 0..gs.len() {
            let expect = gs.data()[i] + mu * gc.data()[i] + nu * gk.data()[i];
            prop_assert!((t.grad_response.data()[i] - expect).abs() < 1e-7);
        }
        let plain = total_loss(&resp, &labels, None, mu, nu, bounds).unwrap();
        prop_assert_eq!(plain.scr, 0.0);
        prop_assert!((plain.total - (s + mu * c)).abs() < 1e-12);
    }
}

#[test]
fn constant_image_gives_one_label_for_any_weights() {
    for seed in 0..5 {
        let hp = HyperParams { layers: 2, features: 8, clusters: 6, seed, ..HyperParams::default() };
        let params = init_params::<f32>(&hp).unwrap();
        let img = Image::constant(7, 9, [0.3, 0.6, 0.1]).unwrap();
        let fwd = forward(&img, &params, &hp).unwrap();
        assert_eq!(assign_labels(&fwd.response).unique_count(), 1);
    }
}

#[test]
fn forward_is_deterministic_given_seed() {
    let hp = HyperParams { layers: 2, features: 6, clusters: 5, seed: 11, ..HyperParams::default() };
    let img = common::random_image(9, 7, &mut rng(3));
    let run = || {
        let p = init_params::<f32>(&hp).unwrap();
        forward(&img, &p, &hp).unwrap().response.values
    };
    assert_eq!(run().data(), run().data());
}
