//! Closed-form optimal noise densities for a scalar parameter.
//!
//! In the all-noise limit (ν → ∞) the MSE- and KL-optimal noises coincide:
//! `p_n ∝ p_d |g|`. In the all-data limit (ν → 0) the optimal noise puts its
//! mass on the maximizers of `p_d(ξ)·w(ξ)`, with `w = g²` for the MSE and
//! `w = |g|` for the KL error. That limit is represented here by a softmax
//! relaxation with temperature `eps1` on the quadrature grid.

use serde::{Deserialize, Serialize};

use crate::asymptotics::Objective;
use crate::densities::{tabulated_to_csv, Interpolation, NoiseDensity, TabulatedDensity};
use crate::error::{Error, Result};
use crate::models::{Point, ScalarModel};
use crate::optimize::golden_section;
use crate::quadrature::{build_grid, Grid, DEFAULT_HALF_WIDTH};

/// Default temperature, relative to the maximum of `p_d·w`.
pub const DEFAULT_EPS1_RELATIVE: f64 = 0.01;
pub const DEFAULT_EPS2: f64 = 1e-6;

/// Relative tolerance under which two local maxima count as equally global.
const GLOBAL_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    AllNoise,
    AllData,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::AllNoise => "all-noise",
            Regime::AllData => "all-data",
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all-noise" | "allnoise" => Ok(Regime::AllNoise),
            "all-data" | "alldata" => Ok(Regime::AllData),
            other => Err(Error::config(
                "regime",
                format!("expected all-noise or all-data, got `{other}`"),
            )),
        }
    }
}

/// A limit-regime optimal noise tabulated on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoreticalNoise {
    pub objective: Objective,
    pub regime: Regime,
    /// Softmax temperature (all-data only).
    pub eps1: Option<f64>,
    /// Sherman–Morrison regularizer (all-data only).
    pub eps2: Option<f64>,
    /// Fraction of mass placed left of the data centre (all-data only).
    pub mass_left: Option<f64>,
    pub density: TabulatedDensity,
    pub dirac_candidates: Vec<Point>,
}

/// JSON sidecar written next to the tabulated density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheorySidecar {
    pub objective: Objective,
    pub regime: Regime,
    pub eps1: Option<f64>,
    pub eps2: Option<f64>,
    pub dirac_candidates: Vec<Vec<f64>>,
}

impl TheoreticalNoise {
    pub fn noise(&self) -> NoiseDensity {
        NoiseDensity::Tabulated(self.density.clone())
    }

    pub fn to_csv(&self) -> String {
        tabulated_to_csv(&self.density)
    }

    pub fn sidecar(&self) -> TheorySidecar {
        let dim = self.density.dim();
        TheorySidecar {
            objective: self.objective,
            regime: self.regime,
            eps1: self.eps1,
            eps2: self.eps2,
            dirac_candidates: self
                .dirac_candidates
                .iter()
                .map(|p| p[..dim].to_vec())
                .collect(),
        }
    }
}

/// Weight `w` of the all-data objective `p_d·w`.
fn all_data_weight(objective: Objective, g: f64) -> f64 {
    match objective {
        Objective::Mse => g * g,
        Objective::Kl => g.abs(),
    }
}

/// `p_d(ξ)·w(ξ)`, the function whose maximizers carry the all-data noise.
pub fn all_data_objective(model: &ScalarModel, objective: Objective, x: &Point) -> f64 {
    model.density(x) * all_data_weight(objective, model.score(x))
}

/// Noise `p_n ∝ p_d |g|`, optimal for both objectives as ν → ∞.
pub fn optimal_noise_all_noise(
    model: &ScalarModel,
    objective: Objective,
    grid: &Grid,
) -> Result<TheoreticalNoise> {
    let values = grid.evaluate(|x| model.density(x) * model.score(x).abs());
    let density = TabulatedDensity::from_grid(grid, values, Interpolation::Linear)?;
    Ok(TheoreticalNoise {
        objective,
        regime: Regime::AllNoise,
        eps1: None,
        eps2: None,
        mass_left: None,
        density,
        dirac_candidates: Vec::new(),
    })
}

/// Default temperature: 1% of the largest value of `p_d·w` on the grid.
pub fn default_eps1(model: &ScalarModel, objective: Objective, grid: &Grid) -> f64 {
    let f = grid.evaluate(|x| all_data_objective(model, objective, x));
    DEFAULT_EPS1_RELATIVE * f.iter().copied().fold(0.0, f64::max)
}

/// Softmax relaxation of the all-data optimal noise with equal mass on
/// either side of the data centre.
pub fn optimal_noise_all_data(
    model: &ScalarModel,
    objective: Objective,
    eps1: f64,
    eps2: f64,
    grid: &Grid,
) -> Result<TheoreticalNoise> {
    optimal_noise_all_data_split(model, objective, eps1, eps2, 0.5, grid)
}

/// As [`optimal_noise_all_data`], with a fraction `mass_left` of the mass
/// placed on nodes whose first coordinate lies below the data centre.
///
/// The density is `exp((f − max f)/eps1)` with `f = p_d·w`, rescaled on each
/// side and normalized on the grid. A temperature so small that fewer than
/// three nodes keep a nonzero value is rejected: the relaxation would no
/// longer be resolved by the grid.
pub fn optimal_noise_all_data_split(
    model: &ScalarModel,
    objective: Objective,
    eps1: f64,
    eps2: f64,
    mass_left: f64,
    grid: &Grid,
) -> Result<TheoreticalNoise> {
    if !(eps1.is_finite() && eps1 > 0.0) {
        return Err(Error::Domain(format!("eps1 must be positive, got {eps1}")));
    }
    if !(eps2.is_finite() && eps2 > 0.0) {
        return Err(Error::Domain(format!("eps2 must be positive, got {eps2}")));
    }
    if !(0.0..=1.0).contains(&mass_left) {
        return Err(Error::Domain(format!("mass split must lie in [0, 1], got {mass_left}")));
    }
    let f = grid.evaluate(|x| all_data_objective(model, objective, x));
    let fmax = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut values: Vec<f64> = f.iter().map(|&v| ((v - fmax) / eps1).exp()).collect();
    let alive = values.iter().filter(|&&v| v > 0.0).count();
    if alive < 3 {
        return Err(Error::Numeric(format!(
            "softmax with eps1 = {eps1:e} underflows on all but {alive} grid nodes; use a larger eps1"
        )));
    }
    let centre = model.location_scale().0;
    for (v, x) in values.iter_mut().zip(grid.nodes()) {
        if x[0] < centre {
            *v *= 2.0 * mass_left;
        } else if x[0] > centre {
            *v *= 2.0 * (1.0 - mass_left);
        }
    }
    let density = TabulatedDensity::from_grid(grid, values, Interpolation::Linear)?;
    Ok(TheoreticalNoise {
        objective,
        regime: Regime::AllData,
        eps1: Some(eps1),
        eps2: Some(eps2),
        mass_left: Some(mass_left),
        density,
        dirac_candidates: dirac_candidates(model, objective)?,
    })
}

/// Global maximizers of `p_d·w`, where the all-data optimal noise puts its
/// mass, sorted by coordinates.
///
/// Local maxima of a grid scan are refined by golden section (cyclic over
/// coordinates in 2-D); those within a relative 1e-6 of the best value are
/// returned, so symmetric pairs come out together.
pub fn dirac_candidates(model: &ScalarModel, objective: Objective) -> Result<Vec<Point>> {
    let (c, s) = model.location_scale();
    let half = DEFAULT_HALF_WIDTH * s;
    let f = |x: &Point| all_data_objective(model, objective, x);
    let mut found: Vec<(Point, f64)> = Vec::new();
    if model.dim() == 1 {
        let grid = build_grid(1, c - half, c + half, 4001)?;
        let xs: Vec<f64> = grid.nodes().iter().map(|p| p[0]).collect();
        let vals = grid.evaluate(f);
        for i in 1..xs.len() - 1 {
            if vals[i] > vals[i - 1] && vals[i] >= vals[i + 1] {
                let (x, v) = golden_section(|t| -f(&[t, 0.0]), xs[i - 1], xs[i + 1], 1e-12);
                found.push(([x, 0.0], -v));
            }
        }
    } else {
        let n = 321;
        let grid = build_grid(2, c - half, c + half, n)?;
        let vals = grid.evaluate(f);
        let h = 2.0 * half / (n - 1) as f64;
        for i in 1..n - 1 {
            for j in 1..n - 1 {
                let k = i * n + j;
                let v = vals[k];
                let neighbours = [k - n, k + n, k - 1, k + 1, k - n - 1, k - n + 1, k + n - 1, k + n + 1];
                let before = [k - n, k - 1, k - n - 1, k - n + 1];
                if neighbours.iter().all(|&q| v >= vals[q]) && before.iter().all(|&q| v > vals[q]) {
                    found.push(refine_2d(&f, grid.nodes()[k], h));
                }
            }
        }
    }
    if found.is_empty() {
        return Ok(Vec::new());
    }
    let best = found.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<Point> = Vec::new();
    for (p, v) in found {
        if v >= best - GLOBAL_TOLERANCE * best.abs()
            && !out.iter().any(|q| (q[0] - p[0]).abs() < 1e-6 && (q[1] - p[1]).abs() < 1e-6)
        {
            out.push(p);
        }
    }
    out.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    Ok(out)
}

/// Cyclic coordinate golden-section ascent from a grid maximum.
fn refine_2d(f: &impl Fn(&Point) -> f64, start: Point, h: f64) -> (Point, f64) {
    let mut p = start;
    let mut width = h;
    for _ in 0..200 {
        let old = p;
        let (x, _) = golden_section(|t| -f(&[t, p[1]]), p[0] - width, p[0] + width, 1e-12);
        p[0] = x;
        let (y, _) = golden_section(|t| -f(&[p[0], t]), p[1] - width, p[1] + width, 1e-12);
        p[1] = y;
        let step = (p[0] - old[0]).abs().max((p[1] - old[1]).abs());
        if step < 1e-11 {
            break;
        }
        width = (4.0 * step).clamp(1e-6, h);
    }
    (p, f(&p))
}

/// Regularized all-data weight `tr((g gᵀ + ε·Id)⁻¹)⁻¹` for a parameter of
/// dimension `d`, from `‖g‖²`, via Sherman–Morrison:
/// `(d/ε − ‖g‖²/(ε² + ε‖g‖²))⁻¹`.
///
/// For `d = 1` this equals `‖g‖² + ε`.
pub fn regularized_weight(g_norm_sq: f64, d: usize, eps: f64) -> f64 {
    let d = d as f64;
    1.0 / (d / eps - g_norm_sq / (eps * eps + eps * g_norm_sq))
}

/// Third-order expansion of [`regularized_weight`] in `ε` for `d ≥ 2`:
///
/// ```text
/// ε/(d−1) − ε²/(‖g‖²(d−1)²) + ε³·d/(‖g‖⁴(d−1)³)
/// ```
///
/// The cubic coefficient is the Taylor coefficient of the exact expression;
/// `(2−d)` in its place leaves an O(ε³) remainder.
pub fn regularized_weight_series(g_norm_sq: f64, d: usize, eps: f64) -> f64 {
    let k = d as f64 - 1.0;
    eps / k - eps * eps / (g_norm_sq * k * k)
        + eps.powi(3) * (k + 1.0) / (g_norm_sq * g_norm_sq * k.powi(3))
}
