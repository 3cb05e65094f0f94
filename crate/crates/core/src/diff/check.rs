//! Central finite-difference gradient checking.

use alloc::vec;
use alloc::vec::Vec;

use super::tape::{Tape, Var};
use crate::error::Result;

/// Outcome of a finite-difference comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    /// `max_i |g_i − fd_i| / (|g_i| + |fd_i| + 1e-12)` over finite coordinates.
    pub max_rel_error: f64,
    /// Coordinate attaining the maximum.
    pub worst: Option<usize>,
    /// Number of evaluations (analytic or perturbed) that produced NaN/Inf.
    pub non_finite: usize,
}

impl GradCheck {
    pub fn passes(&self, tol: f64) -> bool {
        self.non_finite == 0 && self.max_rel_error < tol
    }
}

/// Compare the analytic gradient of `f` at `x` against central differences.
///
/// `f` returns the function value together with its analytic gradient.
pub fn check_gradient<F>(f: F, x: &[f64], step: f64) -> GradCheck
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let coords: Vec<usize> = (0..x.len()).collect();
    check_gradient_coords(f, x, step, &coords)
}

/// [`check_gradient`] restricted to a subset of coordinates.
pub fn check_gradient_coords<F>(mut f: F, x: &[f64], step: f64, coords: &[usize]) -> GradCheck
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let mut report = GradCheck { max_rel_error: 0.0, worst: None, non_finite: 0 };
    let (value, grad) = f(x);
    if !value.is_finite() {
        report.non_finite += 1;
    }
    let mut probe = x.to_vec();
    for &i in coords {
        let g = grad[i];
        probe[i] = x[i] + step;
        let plus = f(&probe).0;
        probe[i] = x[i] - step;
        let minus = f(&probe).0;
        probe[i] = x[i];
        if !g.is_finite() || !plus.is_finite() || !minus.is_finite() {
            report.non_finite += 1;
            continue;
        }
        let fd = (plus - minus) / (2.0 * step);
        let rel = (g - fd).abs() / (g.abs() + fd.abs() + 1e-12);
        if rel > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = report.max_rel_error.max(rel);
            if rel >= report.max_rel_error {
                report.worst = Some(i);
            }
        }
    }
    report
}

/// Adapt a graph-building closure into a `(value, gradient)` function.
pub fn tape_objective<F>(build: F) -> impl FnMut(&[f64]) -> (f64, Vec<f64>)
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Var<'t>,
{
    move |x: &[f64]| {
        let tape = Tape::new();
        let vars = tape.vars(x);
        let root = build(&tape, &vars);
        finish(&tape, root, &vars)
    }
}

/// Like [`tape_objective`] for fallible graph builders; errors read as NaN.
pub fn try_tape_objective<F>(build: F) -> impl FnMut(&[f64]) -> (f64, Vec<f64>)
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    move |x: &[f64]| {
        let tape = Tape::new();
        let vars = tape.vars(x);
        match build(&tape, &vars) {
            Ok(root) => finish(&tape, root, &vars),
            Err(_) => (f64::NAN, vec![f64::NAN; x.len()]),
        }
    }
}

fn finish<'t>(tape: &'t Tape, root: Var<'t>, vars: &[Var<'t>]) -> (f64, Vec<f64>) {
    match tape.backward(root) {
        Ok(g) => (root.value(), g.wrt_all(vars)),
        Err(_) => (root.value(), vec![f64::NAN; vars.len()]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_function_is_exact() {
        let f = tape_objective(|tape, x| tape.lin(&[(x[0], 2.5), (x[1], -4.0), (x[2], 0.125)], 0.0));
        let rep = check_gradient(f, &[0.25, -0.5, 0.125], 1.0 / 65536.0);
        assert!(rep.max_rel_error < 1e-10, "{rep:?}");
        assert_eq!(rep.non_finite, 0);
    }

    #[test]
    fn nan_payload_is_flagged() {
        let f = tape_objective(|_tape, x| (x[0] - 1.0).ln() * x[1]);
        let rep = check_gradient(f, &[0.5, 1.0], 1e-5);
        assert!(rep.non_finite > 0);
        assert!(!rep.passes(1e-4));
    }

    #[test]
    fn wrong_gradient_is_detected() {
        let f = |x: &[f64]| (x[0] * x[0], vec![x[0]]);
        let rep = check_gradient(f, &[2.0], 1e-5);
        assert!(rep.max_rel_error > 0.3);
        assert_eq!(rep.worst, Some(0));
    }
}
