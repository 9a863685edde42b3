//! Central finite-difference gradient checking.

use alloc::vec::Vec;

use crate::autodiff::{Tape, Var};
use crate::error::TensorError;
use crate::tensor::Tensor;

pub const DEFAULT_STEP: f64 = 1e-5;

/// Per-tensor outcome of a gradient check.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// Max relative error over each parameter tensor, in input order.
    pub per_param: Vec<f64>,
    /// Largest analytic gradient magnitude per tensor; zero means no gradient flowed.
    pub max_abs_grad: Vec<f64>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.per_param.iter().copied().fold(0.0, f64::max)
    }
}

/// Compares the analytic gradient of `f` against `(f(θ+h) - f(θ-h)) / 2h`
/// for every coordinate of every tensor in `params`.
///
/// The error for one coordinate is `|a - n| / max(1, |a|, |n|)`. `f` must be
/// deterministic: it receives a fresh tape and one leaf per parameter tensor
/// and returns the scalar node to differentiate.
pub fn grad_check<F>(params: &[Tensor], h: f64, f: F) -> Result<f64, TensorError>
where
    F: for<'p> Fn(&mut Tape<'p>, &[Var]) -> Result<Var, TensorError>,
{
    grad_check_report(params, h, f).map(|r| r.max_rel_error())
}

pub fn grad_check_report<F>(params: &[Tensor], h: f64, f: F) -> Result<GradCheckReport, TensorError>
where
    F: for<'p> Fn(&mut Tape<'p>, &[Var]) -> Result<Var, TensorError>,
{
    let analytic: Vec<Tensor> = {
        let mut tape = Tape::new();
        let vars: Vec<Var> = params.iter().map(|p| tape.param(p, true)).collect();
        let out = f(&mut tape, &vars)?;
        if !tape.value(out).is_finite() {
            return Err(TensorError::NonFinite);
        }
        let grads = tape.backward(out)?;
        vars.iter().map(|&v| grads.wrt_or_zeros(&tape, v)).collect()
    };

    let eval = |ps: &[Tensor]| -> Result<f64, TensorError> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ps.iter().map(|p| tape.param(p, false)).collect();
        let out = f(&mut tape, &vars)?;
        let v = tape.value(out).item();
        if v.is_finite() {
            Ok(v)
        } else {
            Err(TensorError::NonFinite)
        }
    };

    let mut work: Vec<Tensor> = params.to_vec();
    let mut per_param = Vec::with_capacity(params.len());
    let mut max_abs_grad = Vec::with_capacity(params.len());
    for (pi, grad) in analytic.iter().enumerate() {
        let mut worst: f64 = 0.0;
        for c in 0..work[pi].len() {
            let orig = work[pi].data()[c];
            work[pi].data_mut()[c] = orig + h;
            let plus = eval(&work)?;
            work[pi].data_mut()[c] = orig - h;
            let minus = eval(&work)?;
            work[pi].data_mut()[c] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let a = grad.data()[c];
            let denom = 1.0f64.max(a.abs()).max(numeric.abs());
            worst = worst.max((a - numeric).abs() / denom);
        }
        per_param.push(worst);
        max_abs_grad.push(grad.data().iter().fold(0.0f64, |m, v| m.max(v.abs())));
    }
    Ok(GradCheckReport { per_param, max_abs_grad })
}
