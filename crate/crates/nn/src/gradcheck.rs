//! Central finite-difference gradient checks.

use crate::param::{Module, Param};

pub const STEP: f64 = 1e-5;
/// Denominator floor of the relative error, so that gradients that are
/// zero up to round-off do not divide by zero.
pub const REL_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    pub max_relative_error: f64,
    pub worst: String,
    pub checked: usize,
}

fn with_entry<M: Module>(m: &mut M, target: usize, f: &mut dyn FnMut(&mut Param)) {
    let mut k = 0;
    m.visit_params("", &mut |_, p| {
        if k == target {
            f(p);
        }
        k += 1;
    });
}

/// Compares the gradients stored in `analytic` with central differences of
/// `loss`, evaluated on fresh clones of `base` so that any internal random
/// state (dropout masks) is replayed identically.
pub fn check_params<M: Module + Clone>(base: &M, analytic: &mut M, loss: impl Fn(&mut M) -> f64) -> GradReport {
    let mut shapes = Vec::new();
    let mut grads = Vec::new();
    analytic.visit_params("", &mut |name, p| {
        shapes.push((name.to_string(), p.value.len()));
        grads.push(p.grad.clone());
    });
    let mut report = GradReport { max_relative_error: 0.0, worst: String::new(), checked: 0 };
    for (t, (name, len)) in shapes.iter().enumerate() {
        for e in 0..*len {
            let eval = |delta: f64| {
                let mut m = base.clone();
                with_entry(&mut m, t, &mut |p| p.value[e] += delta);
                loss(&mut m)
            };
            let numeric = (eval(STEP) - eval(-STEP)) / (2.0 * STEP);
            let err = relative_error(grads[t][e], numeric);
            report.checked += 1;
            if err > report.max_relative_error {
                report.max_relative_error = err;
                report.worst = format!("{name}[{e}]: analytic {} numeric {numeric}", grads[t][e]);
            }
        }
    }
    report
}

/// Finite-difference check of an input gradient.
pub fn check_input(x: &[f64], analytic: &[f64], loss: impl Fn(&[f64]) -> f64) -> f64 {
    let mut worst: f64 = 0.0;
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + STEP;
        let plus = loss(&probe);
        probe[i] = x[i] - STEP;
        let minus = loss(&probe);
        probe[i] = x[i];
        worst = worst.max(relative_error(analytic[i], (plus - minus) / (2.0 * STEP)));
    }
    worst
}
