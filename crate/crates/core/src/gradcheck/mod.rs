//! Central finite-difference checking of analytic gradients.

use alloc::string::String;

use crate::autodiff::{Graph, Var};
use crate::params::{Bound, ParamSet};
use crate::{Real, Result};

pub mod suite;

/// Default perturbation.
pub const STEP: f64 = 1e-3;
/// Pass threshold at 32-bit.
pub const TOL_F32: f64 = 1e-3;
/// Pass threshold at 64-bit.
pub const TOL_F64: f64 = 1e-6;
/// Full-model objective at 64-bit: at [`STEP`] the central difference's own
/// truncation error (not the gradient) dominates, around 1e-4.
pub const COMPOSITE_TOL_F64: f64 = 5e-4;

/// Relative error with a unit floor on the denominator, so that gradients
/// near zero are compared absolutely.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// Parameter name and flat index of the worst element.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err < tol
    }
}

/// Compares backward-pass gradients of `f` against central differences for
/// every element of every parameter in `params`.
///
/// `f` must build a scalar loss from the bound parameters and be a pure
/// function of them.
pub fn check<T, F>(params: &ParamSet<T>, step: f64, f: F) -> Result<GradCheckReport>
where
    T: Real,
    F: Fn(&mut Graph<T>, &Bound) -> Result<Var>,
{
    check_subset(params, step, usize::MAX, f)
}

/// Like [`check`] but examines at most `per_param` evenly spaced elements of
/// each parameter tensor.
pub fn check_subset<T, F>(
    params: &ParamSet<T>,
    step: f64,
    per_param: usize,
    f: F,
) -> Result<GradCheckReport>
where
    T: Real,
    F: Fn(&mut Graph<T>, &Bound) -> Result<Var>,
{
    let eval = |p: &ParamSet<T>| -> Result<f64> {
        let mut g = Graph::new();
        let bound = p.bind(&mut g);
        let loss = f(&mut g, &bound)?;
        Ok(g.value(loss).item().as_f64())
    };

    let mut g = Graph::new();
    let bound = params.bind(&mut g);
    let loss = f(&mut g, &bound)?;
    let grads = g.backward(loss)?;

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: None,
        checked: 0,
    };
    let mut work = params.clone();
    for id in params.ids() {
        let base = params.get(id).clone();
        let analytic = grads.get_or_zeros(bound[id], base.shape());
        let n = base.len();
        let stride = if per_param >= n {
            1
        } else {
            n.div_ceil(per_param)
        };
        for j in (0..n).step_by(stride) {
            let x = base.data()[j];
            let plus = x + T::of(step);
            let minus = x - T::of(step);
            work.get_mut(id).data_mut()[j] = plus;
            let lp = eval(&work)?;
            work.get_mut(id).data_mut()[j] = minus;
            let lm = eval(&work)?;
            work.get_mut(id).data_mut()[j] = x;
            let numeric = (lp - lm) / (plus - minus).as_f64();
            let err = relative_error(analytic.data()[j].as_f64(), numeric);
            report.checked += 1;
            if report.worst.is_none() || err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst = Some((String::from(params.name(id)), j));
            }
        }
    }
    Ok(report)
}
