//! Central finite-difference check of tape gradients.

use crate::error::{Error, Result};

use super::params::{Bound, ParamStore};
use super::tape::{Tape, Var};

/// Worst coordinate found by [`grad_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub coordinates: usize,
}

/// Compares the analytic gradient of `f` against central differences with
/// step `h`, coordinate by coordinate, and returns the largest
/// `|analytic - numeric| / max(1, |analytic|)`.
///
/// `f` builds a scalar loss on a fresh tape from the bound parameters.
pub fn grad_check<F>(params: &mut ParamStore<f64>, h: f64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &Bound) -> Result<Var>,
{
    let eval = |p: &ParamStore<f64>| -> Result<f64> {
        let mut tape = Tape::new();
        let bound = p.bind(&mut tape);
        let loss = f(&mut tape, &bound)?;
        Ok(tape.value(loss).data()[0])
    };

    params.zero_grads();
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let loss = f(&mut tape, &bound)?;
    tape.backward(loss)?;
    params.accumulate_grads(&tape, &bound)?;
    drop(tape);

    let analytic: Vec<Vec<f64>> = params
        .iter()
        .map(|(_, t)| t.grad().map_or_else(|| vec![0.0; t.len()], <[f64]>::to_vec))
        .collect();
    params.zero_grads();

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        coordinates: 0,
    };
    let ids: Vec<_> = params.ids().collect();
    for (pi, id) in ids.into_iter().enumerate() {
        for j in 0..params.get(id).len() {
            let orig = params.get(id).data()[j];
            params.get_mut(id).data_mut()[j] = orig + h;
            let plus = eval(params)?;
            params.get_mut(id).data_mut()[j] = orig - h;
            let minus = eval(params)?;
            params.get_mut(id).data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[pi][j];
            let err = (a - numeric).abs() / a.abs().max(1.0);
            if !err.is_finite() {
                return Err(Error::NonFinite {
                    stage: format!("grad_check {}[{j}]", params.name(id)),
                });
            }
            report.coordinates += 1;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst_param = params.name(id).to_string();
                report.worst_index = j;
            }
        }
    }
    Ok(report)
}
