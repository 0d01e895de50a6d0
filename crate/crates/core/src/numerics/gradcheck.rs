use super::{ParamSet, Tape, Var};
use crate::{Error, Result};

/// Evaluates a scalar computation over `params` and returns its value and the
/// gradient for every parameter matrix, in `params` order.
pub fn grad_eval<F>(params: &ParamSet, f: F) -> Result<(f64, Vec<super::DenseMatrix>)>
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let mut tape = Tape::new();
    let vars = params.bind(&mut tape);
    let out = f(&mut tape, &vars);
    let mut grads = tape.backward(out)?;
    Ok((tape.scalar(out), grads.collect(&vars)))
}

/// Magnitude below which central differences cannot resolve a gradient to
/// four significant digits in double precision.
pub const GRAD_FLOOR: f64 = 1e-7;

fn eval_value<F>(params: &ParamSet, f: &F) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let mut tape = Tape::new();
    let vars = params.bind_frozen(&mut tape);
    let out = f(&mut tape, &vars);
    tape.check()?;
    let v = tape.scalar(out);
    if !v.is_finite() {
        return Err(Error::numeric("finite_diff_check", "non-finite loss at perturbed point"));
    }
    Ok(v)
}

/// Largest relative disagreement between analytic gradients and central
/// differences, `|a - c| / max(|a| + |c|, GRAD_FLOOR)`, over every parameter
/// entry.
pub fn finite_diff_check<F>(params: &ParamSet, step: f64, f: F) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    if !(1e-7..=1e-3).contains(&step) {
        return Err(Error::contract(format!("finite-difference step {step} outside [1e-7, 1e-3]")));
    }
    let (_, analytic) = grad_eval(params, &f)?;
    let mut probe = params.clone();
    let mut worst = 0.0f64;
    for (i, grad) in analytic.iter().enumerate() {
        for k in 0..grad.len() {
            let orig = probe.get(i).data()[k];
            probe.get_mut(i).data_mut()[k] = orig + step;
            let plus = eval_value(&probe, &f)?;
            probe.get_mut(i).data_mut()[k] = orig - step;
            let minus = eval_value(&probe, &f)?;
            probe.get_mut(i).data_mut()[k] = orig;
            let central = (plus - minus) / (2.0 * step);
            let a = grad.data()[k];
            let rel = (a - central).abs() / (a.abs() + central.abs()).max(GRAD_FLOOR);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}
