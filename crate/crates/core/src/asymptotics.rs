//! Asymptotic efficiency of NCE for a scalar parameter.
//!
//! With the noise weight `u(x) = 1 − D(x) = ν p_n / (p_d + ν p_n)` the
//! generalized moments are `m = ∫ g u p_d` and `I = ∫ g² u p_d`, and
//!
//! ```text
//! Σ   = 1/I − ((ν+1)/ν) m²/I²
//! MSE = (ν+1)/T · Σ
//! KL  = Σ · I_F · (ν+1) / (2T)
//! ```
//!
//! where `T = T_d + T_n` is the total sample budget and `ν = T_n / T_d`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::densities::NoiseDensity;
use crate::error::{Error, Result};
use crate::models::{Point, ScalarModel};
use crate::quadrature::{weighted_sum, Grid};

/// Values of I at or below this are treated as no overlap between noise
/// and data.
pub const DEGENERACY_THRESHOLD: f64 = 1e-12;

/// `1 − D = ν p_n / (p_d + ν p_n)` from density values.
///
/// Returns 1 where only the noise has mass and 0 where neither has.
pub fn noise_weight(pd: f64, pn: f64, nu: f64) -> f64 {
    let b = nu * pn;
    let denom = pd + b;
    if denom > 0.0 {
        b / denom
    } else {
        0.0
    }
}

/// `1 − D(x)` for a data model and noise at ratio `nu`.
pub fn discriminator_weight(x: &Point, model: &ScalarModel, noise: &NoiseDensity, nu: f64) -> f64 {
    noise_weight(model.density(x), noise.density(x), nu)
}

fn check_nu(nu: f64) -> Result<()> {
    if nu.is_finite() && nu > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("noise ratio must be positive, got {nu}")))
    }
}

fn check_budget(t: f64) -> Result<()> {
    if t.is_finite() && t >= 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("sample budget must be at least 1, got {t}")))
    }
}

/// Generalized score mean `m` and second moment `i` at noise ratio `nu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentPair {
    pub m: f64,
    pub i: f64,
    pub nu: f64,
}

impl MomentPair {
    pub fn sigma(&self) -> Result<f64> {
        asymptotic_covariance(self)
    }
}

/// Data density and score tabulated on a grid. Sweeps reuse one table for
/// every noise candidate.
#[derive(Debug, Clone)]
pub struct DataTable {
    pub pd: Vec<f64>,
    pub score: Vec<f64>,
}

impl DataTable {
    pub fn new(model: &ScalarModel, grid: &Grid) -> Self {
        let pd = grid.evaluate(|x| model.density(x));
        let score = grid.evaluate(|x| model.score(x));
        Self { pd, score }
    }

    /// Moments for noise values `pn` given on the same nodes.
    pub fn moments(&self, grid: &Grid, pn: &[f64], nu: f64) -> Result<MomentPair> {
        check_nu(nu)?;
        let n = grid.len();
        let mut gm = Vec::with_capacity(n);
        let mut gi = Vec::with_capacity(n);
        for k in 0..n {
            let w = noise_weight(self.pd[k], pn[k], nu) * self.pd[k];
            let g = self.score[k];
            gm.push(g * w);
            gi.push(g * g * w);
        }
        if let Some(k) = gi.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "moment integrand is {} at node {k} ({:?})",
                gi[k],
                grid.nodes()[k]
            )));
        }
        let m = weighted_sum(grid.weights(), &gm);
        let i = weighted_sum(grid.weights(), &gi);
        if !(i > DEGENERACY_THRESHOLD) {
            return Err(Error::Degenerate(i));
        }
        Ok(MomentPair { m, i, nu })
    }
}

/// `m` and `I` by quadrature over `grid`.
pub fn generalized_moments(
    model: &ScalarModel,
    noise: &NoiseDensity,
    nu: f64,
    grid: &Grid,
) -> Result<MomentPair> {
    let table = DataTable::new(model, grid);
    let pn = grid.evaluate(|x| noise.density(x));
    table.moments(grid, &pn, nu)
}

/// Σ = 1/I − ((ν+1)/ν)·m²/I².
pub fn asymptotic_covariance(mp: &MomentPair) -> Result<f64> {
    check_nu(mp.nu)?;
    if !(mp.i > 0.0) {
        return Err(Error::Degenerate(mp.i));
    }
    let c = (mp.nu + 1.0) / mp.nu;
    let sigma = 1.0 / mp.i - c * mp.m * mp.m / (mp.i * mp.i);
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::Numeric(format!(
            "asymptotic variance {sigma} is not positive (m = {}, I = {})",
            mp.m, mp.i
        )));
    }
    Ok(sigma)
}

/// (ν+1)/T · Σ.
pub fn asymptotic_mse(t: f64, mp: &MomentPair) -> Result<f64> {
    check_budget(t)?;
    Ok((mp.nu + 1.0) / t * asymptotic_covariance(mp)?)
}

/// Expected KL error Σ·I_F/(2 T_d) with T_d = T/(1+ν).
pub fn asymptotic_kl(t: f64, mp: &MomentPair, fisher: f64) -> Result<f64> {
    if !(fisher.is_finite() && fisher > 0.0) {
        return Err(Error::Domain(format!("Fisher information must be positive, got {fisher}")));
    }
    Ok(asymptotic_mse(t, mp)? * fisher / 2.0)
}

/// Cramér–Rao MSE 1/(T_d · I_F).
pub fn cramer_rao_mse(t_d: f64, fisher: f64) -> Result<f64> {
    if !(t_d.is_finite() && t_d > 0.0) {
        return Err(Error::Domain(format!("data sample size must be positive, got {t_d}")));
    }
    if !(fisher.is_finite() && fisher > 0.0) {
        return Err(Error::Domain(format!("Fisher information must be positive, got {fisher}")));
    }
    Ok(1.0 / (t_d * fisher))
}

/// Closed-form MSE when the noise equals the data distribution:
/// (ν+1)²/(νT) · I_F⁻¹.
pub fn data_noise_mse(t: f64, nu: f64, fisher: f64) -> f64 {
    (nu + 1.0).powi(2) / (nu * t) / fisher
}

/// Error measure being minimized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Mse,
    Kl,
}

impl Objective {
    pub fn name(self) -> &'static str {
        match self {
            Objective::Mse => "mse",
            Objective::Kl => "kl",
        }
    }

    /// Objective value for budget `t` and moments `mp`.
    pub fn evaluate(self, t: f64, mp: &MomentPair, fisher: f64) -> Result<f64> {
        match self {
            Objective::Mse => asymptotic_mse(t, mp),
            Objective::Kl => asymptotic_kl(t, mp, fisher),
        }
    }

    /// Factor turning an MSE into this objective.
    pub fn scale(self, fisher: f64) -> f64 {
        match self {
            Objective::Mse => 1.0,
            Objective::Kl => fisher / 2.0,
        }
    }
}

impl std::fmt::Display for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mse" => Ok(Objective::Mse),
            "kl" => Ok(Objective::Kl),
            other => Err(Error::config("objective", format!("expected mse or kl, got `{other}`"))),
        }
    }
}

/// Efficiency summary for one (model, noise, ν, T) configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub model: String,
    pub theta: f64,
    pub noise: String,
    pub nu: f64,
    #[serde(rename = "T")]
    pub t: f64,
    pub mse: f64,
    pub kl: f64,
    pub cramer_rao: f64,
    #[serde(skip)]
    pub sigma: f64,
}

impl EfficiencyReport {
    pub const CSV_HEADER: &'static str = "model,theta,noise,nu,T,mse,kl,cramer_rao";

    pub fn compute(
        model: &ScalarModel,
        noise: &NoiseDensity,
        noise_label: &str,
        nu: f64,
        t: f64,
        grid: &Grid,
    ) -> Result<Self> {
        let mp = generalized_moments(model, noise, nu, grid)?;
        Self::from_moments(model, noise_label, &mp, t)
    }

    pub fn from_moments(model: &ScalarModel, noise_label: &str, mp: &MomentPair, t: f64) -> Result<Self> {
        let fisher = model.fisher_information();
        let sigma = asymptotic_covariance(mp)?;
        Ok(Self {
            model: model.kind().name().to_string(),
            theta: model.theta(),
            noise: noise_label.to_string(),
            nu: mp.nu,
            t,
            mse: asymptotic_mse(t, mp)?,
            kl: asymptotic_kl(t, mp, fisher)?,
            cramer_rao: cramer_rao_mse(t / (1.0 + mp.nu), fisher)?,
            sigma,
        })
    }

    /// Data row matching [`CSV_HEADER`](Self::CSV_HEADER).
    pub fn csv_row(&self) -> String {
        let mut s = String::new();
        let _ = write!(
            s,
            "{},{},{},{},{},{},{},{}",
            self.model, self.theta, self.noise, self.nu, self.t, self.mse, self.kl, self.cramer_rao
        );
        s
    }
}

/// MSE gaps in the all-noise limit, for a budget `T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MseGaps {
    /// Var(|g|/I_F)/T: excess of data-distribution noise over the optimal noise.
    pub delta_data: f64,
    /// (E|g|/I_F)²/T: excess of the optimal noise over the Cramér–Rao bound.
    pub delta_opt: f64,
    /// E(g²)/I_F²/T: excess of data-distribution noise over the bound.
    pub data_to_bound: f64,
}

/// Gap formulas of the all-noise limit, by quadrature over `grid`.
pub fn mse_gaps_all_noise(model: &ScalarModel, grid: &Grid, t: f64) -> Result<MseGaps> {
    check_budget(t)?;
    let fisher = model.fisher_information();
    let table = DataTable::new(model, grid);
    let abs_g: Vec<f64> = table.pd.iter().zip(&table.score).map(|(p, g)| p * g.abs()).collect();
    let sq_g: Vec<f64> = table.pd.iter().zip(&table.score).map(|(p, g)| p * g * g).collect();
    let e_abs = grid.integrate_values(&abs_g)? / fisher;
    let e_sq = grid.integrate_values(&sq_g)? / (fisher * fisher);
    let var = (e_sq - e_abs * e_abs).max(0.0);
    Ok(MseGaps {
        delta_data: var / t,
        delta_opt: e_abs * e_abs / t,
        data_to_bound: e_sq / t,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::build_grid;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn self_noise(model: &ScalarModel) -> NoiseDensity {
        NoiseDensity::Parametric(*model)
    }

    #[test]
    fn weight_limits() {
        assert_eq!(noise_weight(0.3, 0.3, 1.0), 0.5);
        assert_eq!(noise_weight(0.0, 0.2, 1.0), 1.0);
        assert_eq!(noise_weight(0.2, 0.0, 1.0), 0.0);
        assert_eq!(noise_weight(0.0, 0.0, 1.0), 0.0);
        assert!((noise_weight(0.3, 0.1, 1e12) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn discriminator_weight_equal_densities() {
        let m = ScalarModel::mean(0.0).unwrap();
        for x in [-3.0, 0.0, 1.7] {
            assert_eq!(discriminator_weight(&[x, 0.0], &m, &self_noise(&m), 1.0), 0.5);
        }
    }

    #[test]
    fn data_noise_moments() {
        let m = ScalarModel::mean(0.0).unwrap();
        let grid = Grid::for_model(&m).unwrap();
        for nu in [0.5, 1.0, 4.0] {
            let mp = generalized_moments(&m, &self_noise(&m), nu, &grid).unwrap();
            assert!(mp.m.abs() < 1e-8);
            assert!((mp.i - nu / (1.0 + nu)).abs() < 1e-6);
        }
    }

    #[test]
    fn covariance_examples() {
        let mp = MomentPair { m: 0.0, i: 0.5, nu: 1.0 };
        assert_eq!(asymptotic_covariance(&mp).unwrap(), 2.0);
        let mp2 = MomentPair { m: 0.01, ..mp };
        assert!(asymptotic_covariance(&mp2).unwrap() < 2.0);
        let bad = MomentPair { m: 1.0, i: 0.5, nu: 1.0 };
        assert!(matches!(asymptotic_covariance(&bad), Err(Error::Numeric(_))));
    }

    #[test]
    fn mse_examples() {
        let cases = [
            (ScalarModel::mean(0.0).unwrap(), 1.0, 0.004),
            (ScalarModel::mean(0.0).unwrap(), 3.0, 16.0 / 3.0 / 1000.0),
            (ScalarModel::variance(1.0).unwrap(), 1.0, 0.008),
        ];
        for (m, nu, expected) in cases {
            let grid = Grid::for_model(&m).unwrap();
            let mp = generalized_moments(&m, &self_noise(&m), nu, &grid).unwrap();
            let mse = asymptotic_mse(1000.0, &mp).unwrap();
            assert!((mse / expected - 1.0).abs() < 1e-6, "{m} nu={nu}: {mse}");
            let kl = asymptotic_kl(1000.0, &mp, m.fisher_information()).unwrap();
            assert_eq!(kl, mse * m.fisher_information() / 2.0);
            if nu == 1.0 {
                assert!((kl - 0.002).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn cramer_rao_examples() {
        assert!((cramer_rao_mse(500.0, 1.0).unwrap() - 0.002).abs() < 1e-15);
        assert!((cramer_rao_mse(500.0, 0.5).unwrap() - 0.004).abs() < 1e-15);
        assert!(cramer_rao_mse(0.0, 1.0).is_err());
    }

    #[test]
    fn budget_scaling_is_exact() {
        let m = ScalarModel::variance(1.0).unwrap();
        let noise = NoiseDensity::Parametric(ScalarModel::variance(2.5).unwrap());
        let grid = Grid::for_model(&m).unwrap();
        let mp = generalized_moments(&m, &noise, 2.0, &grid).unwrap();
        assert_eq!(asymptotic_mse(2000.0, &mp).unwrap(), asymptotic_mse(1000.0, &mp).unwrap() / 2.0);
    }

    #[test]
    fn disjoint_noise_is_degenerate() {
        let m = ScalarModel::mean(0.0).unwrap();
        let noise = NoiseDensity::Parametric(ScalarModel::mean(400.0).unwrap());
        let grid = build_grid(1, -8.0, 8.0, 101).unwrap();
        assert!(matches!(
            generalized_moments(&m, &noise, 1.0, &grid),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn mean_model_gaps() {
        let m = ScalarModel::mean(0.0).unwrap();
        let grid = Grid::for_model(&m).unwrap();
        let g = mse_gaps_all_noise(&m, &grid, 1.0).unwrap();
        let two_over_pi = 2.0 / std::f64::consts::PI;
        // |x| has a kink at the centre node: the trapezoid error is O(h²).
        assert!((g.delta_opt - two_over_pi).abs() < 1e-5);
        assert!((g.delta_data - (1.0 - two_over_pi)).abs() < 1e-5);
        assert!((g.data_to_bound - 1.0).abs() < 1e-8);
    }

    #[test]
    fn report_serializes_listed_keys() {
        let m = ScalarModel::variance(1.0).unwrap();
        let grid = Grid::for_model(&m).unwrap();
        let r = EfficiencyReport::compute(&m, &self_noise(&m), "same-family:1", 1.0, 1000.0, &grid).unwrap();
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        let mut keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(keys, ["T", "cramer_rao", "kl", "model", "mse", "noise", "nu", "theta"]);
        assert_eq!(r.csv_row().split(',').count(), 8);
        assert!(r.mse >= r.cramer_rao);
    }

    #[test]
    fn moments_match_monte_carlo() {
        // Plain Monte Carlo estimate of E_{p_d}[g u] and E_{p_d}[g² u].
        let m = ScalarModel::variance(1.0).unwrap();
        let noise = NoiseDensity::Parametric(ScalarModel::variance(3.84).unwrap());
        let grid = Grid::for_model(&m).unwrap();
        let mp = generalized_moments(&m, &noise, 1.0, &grid).unwrap();

        let n = 1_000_000;
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let xs = m.sample_with(n, &mut rng);
        let (mut s1, mut s2, mut q1, mut q2) = (0.0, 0.0, 0.0, 0.0);
        for x in &xs {
            let u = discriminator_weight(x, &m, &noise, 1.0);
            let g = m.score(x);
            let a = g * u;
            let b = g * g * u;
            s1 += a;
            q1 += a * a;
            s2 += b;
            q2 += b * b;
        }
        let nf = n as f64;
        let (e1, e2) = (s1 / nf, s2 / nf);
        let se1 = ((q1 / nf - e1 * e1) / nf).sqrt();
        let se2 = ((q2 / nf - e2 * e2) / nf).sqrt();
        assert!((e1 - mp.m).abs() < 4.0 * se1, "m: {e1} vs {}", mp.m);
        assert!((e2 - mp.i).abs() < 4.0 * se2, "I: {e2} vs {}", mp.i);
    }
}
