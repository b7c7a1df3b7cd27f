use crate::error::{Error, Result};
use crate::scalar::Real;

use super::{ParamSet, Tape, Var};

/// Compares tape gradients of `loss_fn` against central finite differences
/// over every parameter entry.
///
/// Returns the worst relative error, where each entry's error is
/// `|analytic − numeric| / max(|analytic|, |numeric|, 1e-8)`.
pub fn grad_check<T, F>(params: &ParamSet<T>, epsilon: T, loss_fn: F) -> Result<T>
where
    T: Real,
    F: Fn(&mut Tape<T>, &ParamSet<T>) -> Result<Var>,
{
    if epsilon <= T::zero() {
        return Err(Error::Argument("epsilon must be positive".into()));
    }
    let eval = |p: &ParamSet<T>| -> Result<T> {
        let mut tape = Tape::new();
        let loss = loss_fn(&mut tape, p)?;
        let v = tape.value(loss).item();
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite { op: "grad_check" })
        }
    };

    let mut analytic = params.clone();
    analytic.zero_grad();
    {
        let mut tape = Tape::new();
        let loss = loss_fn(&mut tape, &analytic)?;
        if !tape.value(loss).item().is_finite() {
            return Err(Error::NonFinite { op: "grad_check" });
        }
        tape.backward(loss, &mut analytic)?;
    }

    let floor = T::lit(1e-8);
    let two = T::lit(2.0);
    let mut probe = params.clone();
    let mut worst = T::zero();
    for id in params.ids() {
        for k in 0..params.value(id).as_slice().len() {
            let orig = params.value(id).as_slice()[k];
            probe.value_mut(id).as_mut_slice()[k] = orig + epsilon;
            let up = eval(&probe)?;
            probe.value_mut(id).as_mut_slice()[k] = orig - epsilon;
            let down = eval(&probe)?;
            probe.value_mut(id).as_mut_slice()[k] = orig;

            let numeric = (up - down) / (two * epsilon);
            let exact = analytic.grad(id).as_slice()[k];
            let denom = exact.abs().max(numeric.abs()).max(floor);
            worst = worst.max((exact - numeric).abs() / denom);
        }
    }
    Ok(worst)
}
