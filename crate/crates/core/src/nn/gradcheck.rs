//! Central finite-difference gradient checking.
//!
//! The numeric side only ever evaluates forward values, so it stays
//! independent of the backward rules it is used to audit.

use super::graph::{Graph, Var};
use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::Result;

/// Denominator floor of [`relative_error`]; below it the error is absolute.
pub const REL_FLOOR: f64 = 1e-3;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub entries: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }

    pub fn merge(self, other: GradCheckReport) -> GradCheckReport {
        GradCheckReport {
            max_rel_error: self.max_rel_error.max(other.max_rel_error),
            max_abs_error: self.max_abs_error.max(other.max_abs_error),
            entries: self.entries + other.entries,
        }
    }
}

/// `(f(x + h e_i) - f(x - h e_i)) / 2h` for every entry of every input.
pub fn numeric_gradient(
    mut f: impl FnMut(&[Tensor]) -> Result<f64>,
    inputs: &[Tensor],
    h: f64,
) -> Result<Vec<Tensor>> {
    let mut work = inputs.to_vec();
    let mut out = Vec::with_capacity(inputs.len());
    for t in 0..inputs.len() {
        let (r, c) = inputs[t].shape();
        let mut g = Tensor::zeros(r, c);
        for i in 0..inputs[t].len() {
            let x0 = inputs[t].data()[i];
            work[t].data_mut()[i] = x0 + h;
            let plus = f(&work)?;
            work[t].data_mut()[i] = x0 - h;
            let minus = f(&work)?;
            work[t].data_mut()[i] = x0;
            g.data_mut()[i] = (plus - minus) / (2.0 * h);
        }
        out.push(g);
    }
    Ok(out)
}

pub fn compare(analytic: &[Tensor], numeric: &[Tensor]) -> GradCheckReport {
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        entries: 0,
    };
    for (a, n) in analytic.iter().zip(numeric) {
        for (x, y) in a.data().iter().zip(n.data()) {
            let rel = relative_error(*x, *y);
            report.max_rel_error = report.max_rel_error.max(if rel.is_nan() { f64::INFINITY } else { rel });
            report.max_abs_error = report.max_abs_error.max((x - y).abs());
            report.entries += 1;
        }
    }
    report
}

/// Checks the graph-computed gradient of a scalar function of `inputs`.
///
/// `build` is called once with gradient-tracking leaves for the analytic
/// pass, and repeatedly with constant leaves for the numeric pass.
pub fn check_graph(
    inputs: &[Tensor],
    h: f64,
    build: impl Fn(&mut Graph, &[Var]) -> Result<Var>,
) -> Result<GradCheckReport> {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.input(t.clone())).collect();
    let out = build(&mut g, &vars)?;
    let grads = g.backward(out)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(inputs)
        .map(|(v, t)| {
            grads
                .get(*v)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(t.rows(), t.cols()))
        })
        .collect();
    let numeric = numeric_gradient(
        |xs| {
            let mut g = Graph::new();
            let vars: Vec<Var> = xs.iter().map(|t| g.constant(t.clone())).collect();
            let out = build(&mut g, &vars)?;
            Ok(g.value(out).item())
        },
        inputs,
        h,
    )?;
    Ok(compare(&analytic, &numeric))
}

/// Like [`check_graph`], but also differentiates with respect to every
/// trainable parameter of `store`. Parameter errors come first in the report
/// entries, then input errors.
pub fn check_params(
    store: &ParamStore,
    inputs: &[Tensor],
    h: f64,
    build: impl Fn(&mut Graph, &ParamStore, &[Var]) -> Result<Var>,
) -> Result<GradCheckReport> {
    let mut work = store.clone();
    work.zero_grad();
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.input(t.clone())).collect();
    let out = build(&mut g, &work, &vars)?;
    let grads = g.backward(out)?;
    grads.accumulate_into(&mut work);

    let trainable: Vec<ParamId> = work.ids().filter(|id| work.get(*id).trainable).collect();
    let mut analytic: Vec<Tensor> = trainable
        .iter()
        .map(|id| {
            let p = work.get(*id);
            p.grad.clone().unwrap_or_else(|| Tensor::zeros(p.value.rows(), p.value.cols()))
        })
        .collect();
    analytic.extend(vars.iter().zip(inputs).map(|(v, t)| {
        grads.get(*v).cloned().unwrap_or_else(|| Tensor::zeros(t.rows(), t.cols()))
    }));

    let mut flat: Vec<Tensor> = trainable.iter().map(|id| work.value(*id).clone()).collect();
    flat.extend(inputs.iter().cloned());
    let k = trainable.len();
    let numeric = numeric_gradient(
        |xs| {
            for (id, t) in trainable.iter().zip(xs) {
                work.get_mut(*id).value = t.clone();
            }
            let mut g = Graph::new();
            let vars: Vec<Var> = xs[k..].iter().map(|t| g.constant(t.clone())).collect();
            let out = build(&mut g, &work, &vars)?;
            Ok(g.value(out).item())
        },
        &flat,
        h,
    )?;
    Ok(compare(&analytic, &numeric))
}
