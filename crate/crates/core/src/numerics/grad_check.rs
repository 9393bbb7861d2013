use alloc::vec::Vec;

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::math;

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    relative_error_floored(analytic, numeric, 1e-8)
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error_floored(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let denom = math::abs(analytic).max(math::abs(numeric)).max(floor);
    math::abs(analytic - numeric) / denom
}

/// Central-difference estimate of one partial derivative of `f` at `inputs`,
/// perturbing element `coord` of input `which` by `eps`.
pub fn central_difference<F>(f: &F, inputs: &[Tensor], which: usize, coord: usize, eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |delta: f64| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let mut t = t.clone();
                if i == which {
                    t.data_mut()[coord] += delta;
                }
                tape.leaf(t)
            })
            .collect();
        let out = f(&mut tape, &vars)?;
        let v = tape.value(out).item();
        if !v.is_finite() {
            return Err(Error::NonFinite("grad_check objective"));
        }
        Ok(v)
    };
    Ok((eval(eps)? - eval(-eps)?) / (2.0 * eps))
}

/// Worst per-coordinate relative error between reverse-mode gradients and
/// central differences, reported separately for every input.
pub fn grad_check_many<F>(f: F, inputs: &[Tensor], eps: f64) -> Result<Vec<f64>>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    if !tape.value(out).item().is_finite() {
        return Err(Error::NonFinite("grad_check objective"));
    }
    let grads = tape.backward(out)?;
    let mut worst = Vec::with_capacity(inputs.len());
    for (which, (var, input)) in vars.iter().zip(inputs).enumerate() {
        let analytic = grads.get_or_zero(*var);
        let mut err: f64 = 0.0;
        for coord in 0..input.len() {
            let numeric = central_difference(&f, inputs, which, coord, eps)?;
            err = err.max(relative_error(analytic.data()[coord], numeric));
        }
        worst.push(err);
    }
    Ok(worst)
}

/// Single-input form of [`grad_check_many`].
pub fn grad_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let errs = grad_check_many(|tape, vars| f(tape, vars[0]), core::slice::from_ref(x), eps)?;
    Ok(errs[0])
}
