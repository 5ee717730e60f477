//! Histogram noise optimized over its softmax logits.
//!
//! The objective is the quadrature-discretized asymptotic error. Noise
//! density is zero outside the histogram box, so the quadrature covers the
//! box only, with a trapezoid rule inside every bin. The gradient is exact
//! for this discretization:
//!
//! ```text
//! ∂u/∂h   = ν p_d / (p_d + ν h)²
//! ∂Σ/∂m   = −2cm/I²,   ∂Σ/∂I = −1/I² + 2cm²/I³,   c = (ν+1)/ν
//! ∂h_k/∂q_k = 1 / (a_k (1 + Kφ))
//! ∂/∂ℓ_j  = q_j (G_j − Σ_l q_l G_l)
//! ```

use rayon::prelude::*;

use crate::asymptotics::{asymptotic_covariance, MomentPair, Objective};
use crate::densities::{softmax, HistogramDensity};
use crate::error::{Error, Result};
use crate::models::{Point, ScalarModel};
use crate::optimize::cg::{minimize, CgOptions, OptimizerTrace};
use crate::quadrature::{Axis, CompensatedSum};

/// Trapezoid sub-intervals per bin and axis.
pub const SUBINTERVALS_1D: usize = 32;
pub const SUBINTERVALS_2D: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramOptions {
    pub max_iter: usize,
    pub gtol: f64,
}

impl Default for HistogramOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            gtol: 1e-7,
        }
    }
}

/// Quadrature nodes inside the histogram box: `(point, weight, bin)`.
fn bin_quadrature(template: &HistogramDensity) -> Result<Vec<(Point, f64, usize)>> {
    let per = if template.dim() == 1 {
        SUBINTERVALS_1D
    } else {
        SUBINTERVALS_2D
    };
    let ax = Axis::binned(template.x_edges(), per)?;
    let stride = per + 1;
    Ok(match template.y_edges() {
        None => (0..ax.len())
            .map(|k| ([ax.nodes[k], 0.0], ax.weights[k], k / stride))
            .collect(),
        Some(ye) => {
            let ay = Axis::binned(ye, per)?;
            let ny = ye.len() - 1;
            let mut out = Vec::with_capacity(ax.len() * ay.len());
            for i in 0..ax.len() {
                for j in 0..ay.len() {
                    let bin = (i / stride) * ny + j / stride;
                    out.push(([ax.nodes[i], ay.nodes[j]], ax.weights[i] * ay.weights[j], bin));
                }
            }
            out
        }
    })
}

/// Histogram on the bins of `template` whose bin masses are the integrals
/// of the non-negative function `f` over each bin.
pub fn binned_density<F>(template: &HistogramDensity, f: F) -> Result<HistogramDensity>
where
    F: Fn(&Point) -> f64 + Sync,
{
    let quad = bin_quadrature(template)?;
    let values: Vec<f64> = quad.par_iter().map(|(x, _, _)| f(x)).collect();
    let mut masses = vec![CompensatedSum::default(); template.len()];
    for ((_, w, bin), v) in quad.iter().zip(&values) {
        masses[*bin].add(w * v);
    }
    let masses: Vec<f64> = masses.iter().map(CompensatedSum::value).collect();
    template.from_masses(&masses)
}

/// Total-variation distance between the bin probabilities of two histograms
/// on the same bins.
pub fn total_variation(a: &HistogramDensity, b: &HistogramDensity) -> f64 {
    0.5 * a
        .bin_probabilities()
        .iter()
        .zip(b.bin_probabilities())
        .map(|(p, q)| (p - q).abs())
        .sum::<f64>()
}

struct NodeTerm {
    bin: usize,
    pd: f64,
    /// w·p_d·g
    a: f64,
    /// w·p_d·g²
    b: f64,
}

/// The discretized objective as a function of histogram logits.
pub struct HistogramProblem {
    template: HistogramDensity,
    nu: f64,
    t: f64,
    objective: Objective,
    fisher: f64,
    terms: Vec<NodeTerm>,
}

impl HistogramProblem {
    pub fn new(
        model: &ScalarModel,
        nu: f64,
        t: f64,
        objective: Objective,
        template: &HistogramDensity,
    ) -> Result<Self> {
        if template.dim() != model.dim() {
            return Err(Error::Construction(format!(
                "{}-D histogram for a {}-D model",
                template.dim(),
                model.dim()
            )));
        }
        if !(nu.is_finite() && nu > 0.0) {
            return Err(Error::Domain(format!("noise ratio must be positive, got {nu}")));
        }
        if !(t.is_finite() && t >= 1.0) {
            return Err(Error::Domain(format!("sample budget must be at least 1, got {t}")));
        }
        let quad = bin_quadrature(template)?;
        let terms = quad
            .par_iter()
            .map(|(x, w, bin)| {
                let pd = model.density(x);
                let g = model.score(x);
                NodeTerm {
                    bin: *bin,
                    pd,
                    a: w * pd * g,
                    b: w * pd * g * g,
                }
            })
            .collect();
        Ok(Self {
            template: template.clone(),
            nu,
            t,
            objective,
            fisher: model.fisher_information(),
            terms,
        })
    }

    pub fn template(&self) -> &HistogramDensity {
        &self.template
    }

    fn moments(&self, h: &[f64]) -> (MomentPair, Vec<f64>, Vec<f64>) {
        let nu = self.nu;
        let mut m = CompensatedSum::default();
        let mut i = CompensatedSum::default();
        let mut dm = vec![0.0; h.len()];
        let mut di = vec![0.0; h.len()];
        for term in &self.terms {
            let hk = h[term.bin];
            let den = term.pd + nu * hk;
            if den > 0.0 {
                let u = nu * hk / den;
                let du = nu * term.pd / (den * den);
                m.add(term.a * u);
                i.add(term.b * u);
                dm[term.bin] += term.a * du;
                di[term.bin] += term.b * du;
            }
        }
        let mp = MomentPair {
            m: m.value(),
            i: i.value(),
            nu,
        };
        (mp, dm, di)
    }

    fn prefactor(&self) -> f64 {
        self.objective.scale(self.fisher) * (self.nu + 1.0) / self.t
    }

    /// Objective value at `logits`.
    pub fn value(&self, logits: &[f64]) -> Result<f64> {
        let hist = self.template.with_logits(logits)?;
        let (mp, _, _) = self.moments(&hist.bin_densities());
        Ok(self.prefactor() * asymptotic_covariance(&mp)?)
    }

    /// Objective value and its exact gradient with respect to `logits`.
    pub fn value_and_gradient(&self, logits: &[f64]) -> Result<(f64, Vec<f64>)> {
        let hist = self.template.with_logits(logits)?;
        let (mp, dm, di) = self.moments(&hist.bin_densities());
        let sigma = asymptotic_covariance(&mp)?;
        let pre = self.prefactor();
        let c = (self.nu + 1.0) / self.nu;
        let (m, i) = (mp.m, mp.i);
        let ds_dm = -2.0 * c * m / (i * i);
        let ds_di = -1.0 / (i * i) + 2.0 * c * m * m / (i * i * i);
        let k = self.template.len() as f64;
        let floor_norm = 1.0 + k * self.template.floor();
        let g_bins: Vec<f64> = (0..dm.len())
            .map(|b| pre * (ds_dm * dm[b] + ds_di * di[b]) / (self.template.areas()[b] * floor_norm))
            .collect();
        let q = softmax(logits);
        let mean: f64 = q.iter().zip(&g_bins).map(|(qj, gj)| qj * gj).sum();
        let grad = q.iter().zip(&g_bins).map(|(qj, gj)| qj * (gj - mean)).collect();
        Ok((pre * sigma, grad))
    }
}

/// Exact gradient of the discretized MSE with respect to the logits of
/// `noise`.
pub fn mse_gradient_logits(
    model: &ScalarModel,
    noise: &HistogramDensity,
    nu: f64,
    t: f64,
) -> Result<Vec<f64>> {
    let problem = HistogramProblem::new(model, nu, t, Objective::Mse, noise)?;
    Ok(problem.value_and_gradient(noise.logits())?.1)
}

/// Minimizes the objective over the logits of `init` (keeping its bins and
/// floor) by Polak–Ribière conjugate gradient.
pub fn optimize_histogram(
    model: &ScalarModel,
    nu: f64,
    t: f64,
    init: &HistogramDensity,
    objective: Objective,
    options: &HistogramOptions,
) -> Result<(HistogramDensity, OptimizerTrace)> {
    let problem = HistogramProblem::new(model, nu, t, objective, init)?;
    let opts = CgOptions {
        max_iter: options.max_iter,
        gtol: options.gtol,
        ..CgOptions::default()
    };
    let result = minimize(|l| problem.value_and_gradient(l), init.logits(), &opts)?;
    Ok((init.with_logits(&result.x)?, result.trace))
}
