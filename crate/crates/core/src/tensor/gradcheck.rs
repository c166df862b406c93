//! Central-difference gradient checking in 64-bit precision.

use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::nn::Module;

pub const DEFAULT_EPS: f64 = 1e-5;

/// Largest `|analytic − numeric| / max(1, |numeric|)` over every element of
/// `x`, where `f` maps `x` to a one-element loss.
pub fn gradcheck<F>(f: F, x: &Tensor<f64>, eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let loss = f(&mut tape, xv)?;
    tape.backward(loss)?;
    let analytic = tape.grad(xv).unwrap_or_else(|| Tensor::zeros(x.shape().to_vec()));

    let eval = |t: Tensor<f64>| -> Result<f64> {
        let mut tape = Tape::new();
        let v = tape.leaf(t);
        let l = f(&mut tape, v)?;
        tape.value(l).item().ok_or_else(|| Error::NonScalarLoss(tape.shape(l).to_vec()))
    };
    let mut worst = 0.0f64;
    let mut probe = x.clone();
    for i in 0..x.numel() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + eps;
        let plus = eval(probe.clone())?;
        probe.data_mut()[i] = orig - eps;
        let minus = eval(probe.clone())?;
        probe.data_mut()[i] = orig;
        worst = worst.max(relative_error(analytic.data()[i], plus, minus, eps, "input", i)?);
    }
    Ok(worst)
}

fn relative_error(analytic: f64, plus: f64, minus: f64, eps: f64, what: &str, index: usize) -> Result<f64> {
    if !plus.is_finite() || !minus.is_finite() {
        return Err(Error::ProbeFailure { what: what.to_string(), index });
    }
    let numeric = (plus - minus) / (2.0 * eps);
    Ok((analytic - numeric).abs() / numeric.abs().max(1.0))
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradcheckReport {
    /// Worst relative error over all input elements.
    pub inputs: f64,
    /// Worst relative error over all parameter elements.
    pub params: f64,
    pub checked_elements: usize,
}

impl GradcheckReport {
    pub fn max(&self) -> f64 {
        self.inputs.max(self.params)
    }
}

/// Checks the gradient of `f(module, inputs)` with respect to every input
/// element and every parameter element of `module`.
pub fn gradcheck_module<M, F>(module: &mut M, inputs: &[Tensor<f64>], f: F, eps: f64) -> Result<GradcheckReport>
where
    M: Module<f64>,
    F: Fn(&M, &mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let eval = |m: &M, xs: &[Tensor<f64>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| tape.leaf(x.clone())).collect();
        let l = f(m, &mut tape, &vars)?;
        tape.value(l).item().ok_or_else(|| Error::NonScalarLoss(tape.shape(l).to_vec()))
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.leaf(x.clone())).collect();
    let loss = f(module, &mut tape, &vars)?;
    tape.backward(loss)?;
    let input_grads: Vec<Tensor<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, x)| tape.grad(v).unwrap_or_else(|| Tensor::zeros(x.shape().to_vec())))
        .collect();
    let param_grads: Vec<Tensor<f64>> = module
        .params()
        .into_iter()
        .map(|p| tape.param_grad(p).unwrap_or_else(|| Tensor::zeros(p.value().shape().to_vec())))
        .collect();

    let mut report = GradcheckReport::default();
    let mut probe: Vec<Tensor<f64>> = inputs.to_vec();
    for (k, grad) in input_grads.iter().enumerate() {
        for i in 0..grad.numel() {
            let orig = probe[k].data()[i];
            probe[k].data_mut()[i] = orig + eps;
            let plus = eval(module, &probe)?;
            probe[k].data_mut()[i] = orig - eps;
            let minus = eval(module, &probe)?;
            probe[k].data_mut()[i] = orig;
            let what = format!("input {k}");
            report.inputs = report.inputs.max(relative_error(grad.data()[i], plus, minus, eps, &what, i)?);
            report.checked_elements += 1;
        }
    }
    for (k, grad) in param_grads.iter().enumerate() {
        for i in 0..grad.numel() {
            let orig = module.params()[k].value().data()[i];
            module.params_mut()[k].value_mut().data_mut()[i] = orig + eps;
            let plus = eval(module, inputs)?;
            module.params_mut()[k].value_mut().data_mut()[i] = orig - eps;
            let minus = eval(module, inputs)?;
            module.params_mut()[k].value_mut().data_mut()[i] = orig;
            let what = format!("parameter {k}");
            report.params = report.params.max(relative_error(grad.data()[i], plus, minus, eps, &what, i)?);
            report.checked_elements += 1;
        }
    }
    Ok(report)
}
