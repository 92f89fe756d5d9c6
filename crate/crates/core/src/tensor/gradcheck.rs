//! Central finite-difference verification of hand-written vector-Jacobian
//! products.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Tensor;
use crate::error::{Error, Result};

/// A function of several arrays with a hand-written VJP, evaluated in `f64`.
pub trait Differentiable {
    fn eval(&self, inputs: &[Tensor<f64>]) -> Result<Tensor<f64>>;

    /// One cotangent per input, same shapes as the inputs.
    fn vjp(&self, inputs: &[Tensor<f64>], upstream: &Tensor<f64>) -> Result<Vec<Tensor<f64>>>;

    /// For piecewise-smooth functions: whether `a` and `b` lie on the same
    /// smooth piece. Probes that leave the piece of the base point are
    /// skipped by [`gradient_check_report`].
    fn same_piece(&self, _a: &[Tensor<f64>], _b: &[Tensor<f64>]) -> Result<bool> {
        Ok(true)
    }
}

/// Adapter turning a pair of closures into a [`Differentiable`].
pub struct FnOp<E, V> {
    pub eval: E,
    pub vjp: V,
}

impl<E, V> Differentiable for FnOp<E, V>
where
    E: Fn(&[Tensor<f64>]) -> Result<Tensor<f64>>,
    V: Fn(&[Tensor<f64>], &Tensor<f64>) -> Result<Vec<Tensor<f64>>>,
{
    fn eval(&self, inputs: &[Tensor<f64>]) -> Result<Tensor<f64>> {
        (self.eval)(inputs)
    }

    fn vjp(&self, inputs: &[Tensor<f64>], upstream: &Tensor<f64>) -> Result<Vec<Tensor<f64>>> {
        (self.vjp)(inputs, upstream)
    }
}

/// Finite-difference formula used by [`gradient_check_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FdScheme {
    /// `(φ(x+h) − φ(x−h)) / 2h`, error O(h²).
    #[default]
    Central,
    /// `(4·D(h/2) − D(h)) / 3` over central differences `D`, error O(h⁴).
    Richardson,
}

/// Below this magnitude the error is measured absolutely.
pub const ABS_FLOOR: f64 = 1e-8;

/// Worst coordinate found by [`gradient_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub input: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    /// Coordinates compared.
    pub checked: usize,
    /// Coordinates whose probes crossed onto another smooth piece.
    pub skipped: usize,
}

/// Compares `f.vjp(u)` against `(φ(x+h·e_i) − φ(x−h·e_i)) / 2h` for every
/// coordinate of every input, where `φ(x) = ⟨u, f(x)⟩` and `u` is a random
/// cotangent drawn from `seed`. Returns the maximum relative error.
pub fn gradient_check<F: Differentiable + ?Sized>(
    f: &F,
    point: &[Tensor<f64>],
    step: f64,
    seed: u64,
) -> Result<f64> {
    gradient_check_report(f, point, step, seed).map(|r| r.max_rel_error)
}

pub fn gradient_check_report<F: Differentiable + ?Sized>(
    f: &F,
    point: &[Tensor<f64>],
    step: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    gradient_check_with(f, point, step, seed, FdScheme::Central)
}

pub fn gradient_check_with<F: Differentiable + ?Sized>(
    f: &F,
    point: &[Tensor<f64>],
    step: f64,
    seed: u64,
    scheme: FdScheme,
) -> Result<GradCheckReport> {
    if !(step > 0.0) {
        return Err(Error::invalid("gradient_check: step must be positive"));
    }
    let out = f.eval(point)?;
    out.ensure_finite("gradient_check output")?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cotangent = Tensor::from_vec(
        out.shape(),
        (0..out.len()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )?;
    let analytic = f.vjp(point, &cotangent)?;
    if analytic.len() != point.len() {
        return Err(Error::invalid("gradient_check: vjp returned wrong arity"));
    }

    let mut inputs = point.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        input: 0,
        index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
        skipped: 0,
    };
    for (which, grad) in analytic.iter().enumerate() {
        if grad.shape() != point[which].shape() {
            return Err(Error::invalid(format!(
                "gradient_check: vjp shape {:?} for input {} of shape {:?}",
                grad.shape(),
                which,
                point[which].shape()
            )));
        }
        grad.ensure_finite(&format!("analytic gradient of input {which}"))?;
        for i in 0..point[which].len() {
            let x0 = point[which].data()[i];
            let mut probe = |x: f64| -> Result<Option<f64>> {
                inputs[which].data_mut()[i] = x;
                let y = f.eval(&inputs)?;
                if let Some(bad) = y.first_non_finite() {
                    return Err(Error::NonFinite {
                        what: format!("output while perturbing input {which} coordinate {i}"),
                        index: bad,
                    });
                }
                let smooth = f.same_piece(point, &inputs)?;
                Ok(smooth.then(|| y.dot(&cotangent)))
            };
            let mut central = |h: f64| -> Result<Option<f64>> {
                let plus = probe(x0 + h)?;
                let minus = probe(x0 - h)?;
                Ok(plus.zip(minus).map(|(p, m)| (p - m) / (2.0 * h)))
            };
            let numeric = match scheme {
                FdScheme::Central => central(step)?,
                FdScheme::Richardson => central(step)?
                    .zip(central(step / 2.0)?)
                    .map(|(d1, d2)| (4.0 * d2 - d1) / 3.0),
            };
            inputs[which].data_mut()[i] = x0;
            let Some(numeric) = numeric else {
                report.skipped += 1;
                continue;
            };
            report.checked += 1;
            let a = grad.data()[i];
            let err = relative_error(a, numeric);
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.input = which;
                report.index = i;
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    let diff = (a - b).abs();
    if scale < ABS_FLOOR {
        diff
    } else {
        diff / scale
    }
}
