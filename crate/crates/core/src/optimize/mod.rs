//! Minimizing the asymptotic error over noise hyperparameters: grid sweeps
//! over a same-family noise parameter or the noise proportion, and
//! conjugate-gradient descent over histogram logits.

pub mod cg;
pub mod histogram;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{DataTable, Objective};
use crate::densities::NoiseDensity;
use crate::error::{Error, Result};
use crate::models::ScalarModel;
use crate::quadrature::Grid;

pub use cg::{CgOptions, OptimizerTrace};
pub use histogram::{
    binned_density, mse_gradient_logits, optimize_histogram, total_variation, HistogramOptions,
    HistogramProblem,
};

/// Axis tolerance of the golden-section refinement after a sweep.
pub const REFINE_TOL: f64 = 1e-6;
/// Default number of points of the proportion sweep over [0.01, 0.99].
pub const DEFAULT_PROPORTION_POINTS: usize = 197;

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Minimizes `f` on `[a, b]` by golden-section search until the bracket is
/// narrower than `tol`. Returns the best point seen and its value.
pub fn golden_section(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, tol: f64) -> (f64, f64) {
    let (mut a, mut b) = if a <= b { (a, b) } else { (b, a) };
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
        if c >= d {
            break;
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// A sweep point whose evaluation failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepFailure {
    pub at: f64,
    pub message: String,
}

/// Objective values along a one-dimensional hyperparameter axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    /// Axis points that evaluated successfully, in sweep order.
    pub axis: Vec<f64>,
    pub values: Vec<f64>,
    pub argmin: f64,
    pub min_value: f64,
    /// Refined strict interior local minima as `(position, value)`.
    pub local_minima: Vec<(f64, f64)>,
    pub failures: Vec<SweepFailure>,
}

/// JSON summary of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub argmin: f64,
    pub min_value: f64,
    pub local_minima: Vec<[f64; 2]>,
}

impl SweepResult {
    /// Builds the result from per-point outcomes and refines every strict
    /// interior local minimum with `refine`.
    fn assemble(
        points: &[f64],
        outcomes: Vec<Result<f64>>,
        refine: impl Fn(f64) -> Result<f64>,
    ) -> Result<Self> {
        let mut axis = Vec::new();
        let mut values = Vec::new();
        let mut failures = Vec::new();
        for (&p, r) in points.iter().zip(outcomes) {
            match r {
                Ok(v) if v.is_finite() => {
                    axis.push(p);
                    values.push(v);
                }
                Ok(v) => failures.push(SweepFailure {
                    at: p,
                    message: format!("objective is {v}"),
                }),
                Err(e) => failures.push(SweepFailure {
                    at: p,
                    message: e.to_string(),
                }),
            }
        }
        if values.is_empty() {
            let first = failures.first().map_or("empty axis".to_string(), |f| f.message.clone());
            return Err(Error::Numeric(format!("every sweep point failed: {first}")));
        }
        let mut local_minima = Vec::new();
        for i in 1..values.len().saturating_sub(1) {
            if values[i] < values[i - 1] && values[i] < values[i + 1] {
                let g = |x: f64| refine(x).unwrap_or(f64::INFINITY);
                let (x, v) = golden_section(g, axis[i - 1], axis[i + 1], REFINE_TOL);
                local_minima.push(if v <= values[i] { (x, v) } else { (axis[i], values[i]) });
            }
        }
        let (mut argmin, mut min_value) = (axis[0], values[0]);
        for (&x, &v) in axis.iter().zip(&values).chain(local_minima.iter().map(|(x, v)| (x, v))) {
            if v < min_value {
                argmin = x;
                min_value = v;
            }
        }
        Ok(Self {
            axis,
            values,
            argmin,
            min_value,
            local_minima,
            failures,
        })
    }

    /// Two-column CSV `axis,value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("axis,value\n");
        for (x, v) in self.axis.iter().zip(&self.values) {
            out.push_str(&format!("{x},{v}\n"));
        }
        out
    }

    pub fn summary(&self) -> SweepSummary {
        SweepSummary {
            argmin: self.argmin,
            min_value: self.min_value,
            local_minima: self.local_minima.iter().map(|&(x, v)| [x, v]).collect(),
        }
    }
}

/// Uniform grid of `n` points on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let h = (hi - lo) / (n - 1) as f64;
            (0..n).map(|i| if i == n - 1 { hi } else { lo + h * i as f64 }).collect()
        }
    }
}

/// Objective over same-family noise parameters, on the model's default grid.
pub fn sweep_parametric_noise(
    model: &ScalarModel,
    nu: f64,
    t: f64,
    params: &[f64],
    objective: Objective,
) -> Result<SweepResult> {
    sweep_parametric_noise_on(model, nu, t, params, objective, &Grid::for_model(model)?)
}

/// As [`sweep_parametric_noise`], on a caller-supplied grid.
///
/// Failed points (out-of-domain parameters, degenerate moments) are recorded
/// in `failures` and skipped.
pub fn sweep_parametric_noise_on(
    model: &ScalarModel,
    nu: f64,
    t: f64,
    params: &[f64],
    objective: Objective,
    grid: &Grid,
) -> Result<SweepResult> {
    let table = DataTable::new(model, grid);
    let fisher = model.fisher_information();
    let eval = |p: f64| -> Result<f64> {
        let noise = model.with_theta(p)?;
        let pn: Vec<f64> = grid.nodes().iter().map(|x| noise.density(x)).collect();
        let mp = table.moments(grid, &pn, nu)?;
        objective.evaluate(t, &mp, fisher)
    };
    let outcomes: Vec<Result<f64>> = params.par_iter().map(|&p| eval(p)).collect();
    SweepResult::assemble(params, outcomes, eval)
}

/// Objective over the noise proportion π = ν/(1+ν) for a fixed budget `T`,
/// on `points` uniform values in [0.01, 0.99].
pub fn optimize_proportion(
    model: &ScalarModel,
    noise: &NoiseDensity,
    t: f64,
    objective: Objective,
    grid: &Grid,
    points: usize,
) -> Result<SweepResult> {
    if points < 3 {
        return Err(Error::Construction(format!("need at least 3 proportions, got {points}")));
    }
    let table = DataTable::new(model, grid);
    let pn = grid.evaluate(|x| noise.density(x));
    let fisher = model.fisher_information();
    let eval = |pi: f64| -> Result<f64> {
        if !(pi > 0.0 && pi < 1.0) {
            return Err(Error::Domain(format!("proportion {pi} outside (0, 1)")));
        }
        let mp = table.moments(grid, &pn, pi / (1.0 - pi))?;
        objective.evaluate(t, &mp, fisher)
    };
    let axis = linspace(0.01, 0.99, points);
    let outcomes: Vec<Result<f64>> = axis.par_iter().map(|&p| eval(p)).collect();
    SweepResult::assemble(&axis, outcomes, eval)
}
