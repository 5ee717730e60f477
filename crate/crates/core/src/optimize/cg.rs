//! Polak–Ribière nonlinear conjugate gradient with a strong-Wolfe line search.

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOptions {
    pub max_iter: usize,
    /// Convergence threshold on the gradient ∞-norm.
    pub gtol: f64,
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    /// Function evaluations allowed per line search.
    pub max_line_evals: usize,
}

impl Default for CgOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            gtol: 1e-7,
            c1: 1e-4,
            c2: 0.1,
            max_line_evals: 40,
        }
    }
}

/// Per-iteration record of a descent run. Entry 0 is the starting point.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OptimizerTrace {
    pub iterations: usize,
    pub objective_history: Vec<f64>,
    pub gradient_norm_history: Vec<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub trace: OptimizerTrace,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

struct Probe {
    alpha: f64,
    value: f64,
    slope: f64,
    x: Vec<f64>,
    gradient: Vec<f64>,
}

/// Minimizer of the cubic interpolating two points with slopes, or `None`
/// when the cubic has no real minimizer.
fn cubic_min(a: f64, fa: f64, da: f64, b: f64, fb: f64, db: f64) -> Option<f64> {
    let d1 = da + db - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - da * db;
    if !(disc >= 0.0) {
        return None;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let t = b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2);
    t.is_finite().then_some(t)
}

struct LineSearch<'a, F> {
    f: &'a mut F,
    x: &'a [f64],
    d: &'a [f64],
    f0: f64,
    slope0: f64,
    c1: f64,
    c2: f64,
    evals: usize,
    max_evals: usize,
}

impl<F> LineSearch<'_, F>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    fn probe(&mut self, alpha: f64) -> Probe {
        self.evals += 1;
        let x: Vec<f64> = self.x.iter().zip(self.d).map(|(xi, di)| xi + alpha * di).collect();
        match (self.f)(&x) {
            Ok((value, gradient)) if value.is_finite() && gradient.iter().all(|g| g.is_finite()) => {
                let slope = dot(&gradient, self.d);
                Probe { alpha, value, slope, x, gradient }
            }
            // Failed evaluations count as infinitely bad, forcing a shorter step.
            _ => Probe {
                alpha,
                value: f64::INFINITY,
                slope: f64::NAN,
                x,
                gradient: Vec::new(),
            },
        }
    }

    fn armijo_fails(&self, p: &Probe) -> bool {
        !(p.value <= self.f0 + self.c1 * p.alpha * self.slope0)
    }

    fn curvature_holds(&self, p: &Probe) -> bool {
        p.slope.abs() <= -self.c2 * self.slope0
    }

    fn search(&mut self, alpha0: f64) -> Option<Probe> {
        let mut prev = Probe {
            alpha: 0.0,
            value: self.f0,
            slope: self.slope0,
            x: self.x.to_vec(),
            gradient: Vec::new(),
        };
        let mut alpha = alpha0;
        let mut first = true;
        while self.evals < self.max_evals {
            let p = self.probe(alpha);
            if self.armijo_fails(&p) || (!first && p.value >= prev.value) {
                return self.zoom(prev, p);
            }
            if self.curvature_holds(&p) {
                return Some(p);
            }
            if p.slope >= 0.0 {
                return self.zoom(p, prev);
            }
            first = false;
            alpha = p.alpha * 2.0;
            prev = p;
        }
        None
    }

    fn zoom(&mut self, mut lo: Probe, mut hi: Probe) -> Option<Probe> {
        while self.evals < self.max_evals {
            let (a, b) = (lo.alpha.min(hi.alpha), lo.alpha.max(hi.alpha));
            let width = b - a;
            if width <= f64::EPSILON * b.max(1e-300) {
                break;
            }
            let guess = if hi.slope.is_finite() {
                cubic_min(lo.alpha, lo.value, lo.slope, hi.alpha, hi.value, hi.slope)
            } else {
                None
            };
            let alpha = match guess {
                Some(t) if t > a + 0.1 * width && t < b - 0.1 * width => t,
                _ => 0.5 * (a + b),
            };
            let p = self.probe(alpha);
            if self.armijo_fails(&p) || p.value >= lo.value {
                hi = p;
            } else {
                if self.curvature_holds(&p) {
                    return Some(p);
                }
                if p.slope * (hi.alpha - lo.alpha) >= 0.0 {
                    hi = lo;
                }
                lo = p;
            }
        }
        // Out of budget: accept the best sufficient-decrease point found.
        (lo.alpha > 0.0 && !lo.gradient.is_empty()).then_some(lo)
    }
}

/// Minimizes `f` (returning value and gradient) from `x0`.
///
/// Directions use the Polak–Ribière+ coefficient and restart to steepest
/// descent when it is negative or the direction is not a descent direction.
/// A line-search failure from a steepest-descent direction ends the run with
/// `converged = false`; the iterate returned is always the best one seen.
pub fn minimize<F>(mut f: F, x0: &[f64], opts: &CgOptions) -> Result<CgResult>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let mut x = x0.to_vec();
    let (mut value, mut grad) = f(&x)?;
    let mut trace = OptimizerTrace {
        iterations: 0,
        objective_history: vec![value],
        gradient_norm_history: vec![inf_norm(&grad)],
        converged: inf_norm(&grad) <= opts.gtol,
    };
    let mut d: Vec<f64> = grad.iter().map(|g| -g).collect();
    let mut last_step: Option<(f64, f64)> = None;
    let mut restart = true;
    while !trace.converged && trace.iterations < opts.max_iter {
        let mut slope = dot(&grad, &d);
        let mut steepest = std::mem::take(&mut restart);
        if !(slope < 0.0) {
            d = grad.iter().map(|g| -g).collect();
            slope = -dot(&grad, &grad);
            steepest = true;
        }
        let alpha0 = match last_step {
            Some((prev_value, _)) => {
                let a = 2.02 * (value - prev_value) / slope;
                if a.is_finite() && a > 0.0 {
                    a.min(1e3)
                } else {
                    1.0
                }
            }
            // First step moves the largest coordinate by one unit.
            None => {
                let a = 1.0 / inf_norm(&grad);
                if a.is_finite() {
                    a
                } else {
                    1.0
                }
            }
        };
        let found = LineSearch {
            f: &mut f,
            x: &x,
            d: &d,
            f0: value,
            slope0: slope,
            c1: opts.c1,
            c2: opts.c2,
            evals: 0,
            max_evals: opts.max_line_evals,
        }
        .search(alpha0);
        let Some(p) = found else {
            if steepest {
                break;
            }
            // Retry once from steepest descent.
            d = grad.iter().map(|g| -g).collect();
            last_step = None;
            restart = true;
            continue;
        };
        let y_dot: f64 = p.gradient.iter().zip(&grad).map(|(gn, go)| gn * (gn - go)).sum();
        let beta = (y_dot / dot(&grad, &grad)).max(0.0);
        last_step = Some((value, p.alpha));
        x = p.x;
        value = p.value;
        grad = p.gradient;
        for (di, gi) in d.iter_mut().zip(&grad) {
            *di = -gi + beta * *di;
        }
        trace.iterations += 1;
        trace.objective_history.push(value);
        let gnorm = inf_norm(&grad);
        trace.gradient_norm_history.push(gnorm);
        trace.converged = gnorm <= opts.gtol;
    }
    Ok(CgResult {
        x,
        value,
        gradient: grad,
        trace,
    })
}
