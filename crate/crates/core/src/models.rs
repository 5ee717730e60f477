//! One-parameter Gaussian data models.
//!
//! Three families share a scalar parameter θ:
//!
//! | kind | density | θ domain |
//! |------|---------|----------|
//! | [`ModelKind::GaussianMean`] | N(θ, 1) | ℝ |
//! | [`ModelKind::GaussianVariance`] | N(0, θ) | (0, ∞) |
//! | [`ModelKind::GaussianCorrelation`] | N(0, [[1, θ], [θ, 1]]) | (−1, 1) |
//!
//! Scores, their θ-derivatives and Fisher informations are closed forms.
//! Points are `[f64; 2]`; one-dimensional models read only the first coordinate.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in the sample space. One-dimensional models ignore `x[1]`.
pub type Point = [f64; 2];

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    #[serde(rename = "mean")]
    GaussianMean,
    #[serde(rename = "variance")]
    GaussianVariance,
    #[serde(rename = "correlation")]
    GaussianCorrelation,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [
        ModelKind::GaussianMean,
        ModelKind::GaussianVariance,
        ModelKind::GaussianCorrelation,
    ];

    pub fn dim(self) -> usize {
        match self {
            ModelKind::GaussianCorrelation => 2,
            _ => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::GaussianMean => "mean",
            ModelKind::GaussianVariance => "variance",
            ModelKind::GaussianCorrelation => "correlation",
        }
    }

    pub fn contains(self, theta: f64) -> bool {
        theta.is_finite()
            && match self {
                ModelKind::GaussianMean => true,
                ModelKind::GaussianVariance => theta > 0.0,
                ModelKind::GaussianCorrelation => theta.abs() < 1.0,
            }
    }

    /// Open parameter interval `(lo, hi)`.
    pub fn domain(self) -> (f64, f64) {
        match self {
            ModelKind::GaussianMean => (f64::NEG_INFINITY, f64::INFINITY),
            ModelKind::GaussianVariance => (0.0, f64::INFINITY),
            ModelKind::GaussianCorrelation => (-1.0, 1.0),
        }
    }

    /// log p_θ(x). The caller guarantees `contains(theta)`.
    pub fn log_density_at(self, theta: f64, x: &Point) -> f64 {
        match self {
            ModelKind::GaussianMean => {
                let d = x[0] - theta;
                -HALF_LN_2PI - 0.5 * d * d
            }
            ModelKind::GaussianVariance => {
                -HALF_LN_2PI - 0.5 * theta.ln() - 0.5 * x[0] * x[0] / theta
            }
            ModelKind::GaussianCorrelation => {
                let u = 1.0 - theta * theta;
                let q = quad_form(theta, x);
                -(2.0 * PI).ln() - 0.5 * u.ln() - 0.5 * q / u
            }
        }
    }

    /// ∂_θ log p_θ(x).
    pub fn score_at(self, theta: f64, x: &Point) -> f64 {
        match self {
            ModelKind::GaussianMean => x[0] - theta,
            ModelKind::GaussianVariance => (x[0] * x[0] - theta) / (2.0 * theta * theta),
            ModelKind::GaussianCorrelation => {
                let u = 1.0 - theta * theta;
                let xy = x[0] * x[1];
                let q = quad_form(theta, x);
                (theta + xy) / u - q * theta / (u * u)
            }
        }
    }

    /// ∂²_θ log p_θ(x).
    pub fn score_derivative_at(self, theta: f64, x: &Point) -> f64 {
        match self {
            ModelKind::GaussianMean => -1.0,
            ModelKind::GaussianVariance => {
                let t2 = theta * theta;
                0.5 / t2 - x[0] * x[0] / (t2 * theta)
            }
            ModelKind::GaussianCorrelation => {
                let r2 = theta * theta;
                let u = 1.0 - r2;
                let xy = x[0] * x[1];
                let q = quad_form(theta, x);
                (1.0 + r2 + 4.0 * theta * xy - q) / (u * u) - 4.0 * q * r2 / (u * u * u)
            }
        }
    }

    pub fn fisher_information_at(self, theta: f64) -> f64 {
        match self {
            ModelKind::GaussianMean => 1.0,
            ModelKind::GaussianVariance => 0.5 / (theta * theta),
            ModelKind::GaussianCorrelation => {
                let u = 1.0 - theta * theta;
                (1.0 + theta * theta) / (u * u)
            }
        }
    }

    /// KL(p_a ‖ p_b) between two members of the family.
    pub fn kl_divergence(self, a: f64, b: f64) -> f64 {
        match self {
            ModelKind::GaussianMean => 0.5 * (a - b) * (a - b),
            ModelKind::GaussianVariance => {
                let r = a / b;
                0.5 * (r - 1.0 - r.ln())
            }
            ModelKind::GaussianCorrelation => {
                let ua = 1.0 - a * a;
                let ub = 1.0 - b * b;
                0.5 * ((2.0 - 2.0 * a * b) / ub - 2.0 + (ub / ua).ln())
            }
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(ModelKind::GaussianMean),
            "variance" => Ok(ModelKind::GaussianVariance),
            "correlation" => Ok(ModelKind::GaussianCorrelation),
            other => Err(Error::config(
                "model",
                format!("unknown model kind `{other}` (expected mean, variance or correlation)"),
            )),
        }
    }
}

fn quad_form(theta: f64, x: &Point) -> f64 {
    x[0] * x[0] - 2.0 * theta * x[0] * x[1] + x[1] * x[1]
}

/// A data model p_θ with its parameter fixed at θ*.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarModel {
    kind: ModelKind,
    theta: f64,
}

impl ScalarModel {
    pub fn new(kind: ModelKind, theta: f64) -> Result<Self> {
        if !kind.contains(theta) {
            return Err(Error::Domain(format!(
                "{kind} parameter {theta} outside {:?}",
                kind.domain()
            )));
        }
        Ok(Self { kind, theta })
    }

    pub fn mean(theta: f64) -> Result<Self> {
        Self::new(ModelKind::GaussianMean, theta)
    }

    pub fn variance(theta: f64) -> Result<Self> {
        Self::new(ModelKind::GaussianVariance, theta)
    }

    pub fn correlation(theta: f64) -> Result<Self> {
        Self::new(ModelKind::GaussianCorrelation, theta)
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn dim(&self) -> usize {
        self.kind.dim()
    }

    /// Same family, different parameter.
    pub fn with_theta(&self, theta: f64) -> Result<Self> {
        Self::new(self.kind, theta)
    }

    pub fn log_density(&self, x: &Point) -> f64 {
        self.kind.log_density_at(self.theta, x)
    }

    pub fn density(&self, x: &Point) -> f64 {
        self.log_density(x).exp()
    }

    /// Fisher score g(x) at θ*.
    pub fn score(&self, x: &Point) -> f64 {
        self.kind.score_at(self.theta, x)
    }

    pub fn fisher_information(&self) -> f64 {
        self.kind.fisher_information_at(self.theta)
    }

    /// Centre and half-width scale of the default integration box per axis:
    /// the box is `center ± k·scale`.
    pub fn location_scale(&self) -> (f64, f64) {
        match self.kind {
            ModelKind::GaussianMean => (self.theta, 1.0),
            ModelKind::GaussianVariance => (0.0, self.theta.sqrt()),
            ModelKind::GaussianCorrelation => (0.0, 1.0),
        }
    }

    /// `n` exact i.i.d. draws, deterministic in `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<Point> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with(n, &mut rng)
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Point> {
        (0..n).map(|_| self.draw(rng)).collect()
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        let z0: f64 = rng.sample(StandardNormal);
        match self.kind {
            ModelKind::GaussianMean => [self.theta + z0, 0.0],
            ModelKind::GaussianVariance => [self.theta.sqrt() * z0, 0.0],
            ModelKind::GaussianCorrelation => {
                // Cholesky factor of [[1, ρ], [ρ, 1]].
                let z1: f64 = rng.sample(StandardNormal);
                let rho = self.theta;
                [z0, rho * z0 + (1.0 - rho * rho).sqrt() * z1]
            }
        }
    }
}

impl fmt::Display for ScalarModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind, self.theta)
    }
}

impl FromStr for ScalarModel {
    type Err = Error;

    /// Parses `mean:<θ>`, `variance:<θ>` or `correlation:<θ>`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, theta) = s
            .split_once(':')
            .ok_or_else(|| Error::config("model", format!("expected <kind>:<theta>, got `{s}`")))?;
        let kind: ModelKind = kind.trim().parse()?;
        let theta: f64 = theta
            .trim()
            .parse()
            .map_err(|_| Error::config("model", format!("bad parameter `{theta}`")))?;
        ScalarModel::new(kind, theta).map_err(|e| Error::config("model", e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    const LN_2PI: f64 = 1.837_877_066_409_345_5;

    #[test]
    fn log_density_reference_values() {
        let m = ScalarModel::mean(0.0).unwrap();
        assert!((m.log_density(&[0.0, 0.0]) + 0.5 * LN_2PI).abs() < 1e-15);
        let v = ScalarModel::variance(1.0).unwrap();
        assert!((v.log_density(&[0.0, 0.0]) + 0.5 * LN_2PI).abs() < 1e-15);
        let c = ScalarModel::correlation(0.0).unwrap();
        assert!((c.log_density(&[0.0, 0.0]) + LN_2PI).abs() < 1e-15);
    }

    #[test]
    fn score_reference_values() {
        assert_eq!(ScalarModel::mean(0.0).unwrap().score(&[1.5, 0.0]), 1.5);
        assert!((ScalarModel::variance(1.0).unwrap().score(&[2.0, 0.0]) - 1.5).abs() < 1e-15);
        assert!((ScalarModel::correlation(0.0).unwrap().score(&[1.0, 1.0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn fisher_reference_values() {
        assert_eq!(ScalarModel::mean(3.0).unwrap().fisher_information(), 1.0);
        assert_eq!(ScalarModel::variance(1.0).unwrap().fisher_information(), 0.5);
        assert_eq!(ScalarModel::correlation(0.0).unwrap().fisher_information(), 1.0);
    }

    #[test]
    fn domain_is_enforced_at_construction() {
        assert!(ScalarModel::variance(0.0).is_err());
        assert!(ScalarModel::variance(-1.0).is_err());
        assert!(ScalarModel::correlation(1.0).is_err());
        assert!(ScalarModel::correlation(-1.2).is_err());
        assert!(ScalarModel::mean(f64::NAN).is_err());
    }

    fn fd(f: impl Fn(f64) -> f64, t: f64, h: f64) -> f64 {
        (f(t + h) - f(t - h)) / (2.0 * h)
    }

    #[test]
    fn score_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (kind, theta) in [
            (ModelKind::GaussianMean, 0.7),
            (ModelKind::GaussianVariance, 1.3),
            (ModelKind::GaussianCorrelation, 0.4),
            (ModelKind::GaussianCorrelation, -0.6),
        ] {
            for _ in 0..100 {
                let x = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
                let num = fd(|t| kind.log_density_at(t, &x), theta, 1e-5);
                let ana = kind.score_at(theta, &x);
                assert!((num - ana).abs() < 1e-6, "{kind} x={x:?}: {num} vs {ana}");
                let num2 = fd(|t| kind.score_at(t, &x), theta, 1e-5);
                let ana2 = kind.score_derivative_at(theta, &x);
                assert!((num2 - ana2).abs() < 1e-5 * (1.0 + ana2.abs()), "{kind}: {num2} vs {ana2}");
            }
        }
    }

    #[test]
    fn kl_is_zero_on_diagonal_and_positive_off() {
        for kind in ModelKind::ALL {
            let t = if kind == ModelKind::GaussianVariance { 1.2 } else { 0.3 };
            assert!(kind.kl_divergence(t, t).abs() < 1e-15);
            assert!(kind.kl_divergence(t, t + 0.1) > 0.0);
        }
    }

    #[test]
    fn sample_moments() {
        let n = 100_000;
        let xs = ScalarModel::mean(0.0).unwrap().sample(n, 1);
        let mean = xs.iter().map(|x| x[0]).sum::<f64>() / n as f64;
        assert!(mean.abs() < 4.0 / (n as f64).sqrt());

        let xs = ScalarModel::variance(2.0).unwrap().sample(n, 1);
        let var = xs.iter().map(|x| x[0] * x[0]).sum::<f64>() / n as f64;
        assert!((var / 2.0 - 1.0).abs() < 0.05);

        let xs = ScalarModel::correlation(0.3).unwrap().sample(n, 1);
        let sxy = xs.iter().map(|x| x[0] * x[1]).sum::<f64>() / n as f64;
        let sxx = xs.iter().map(|x| x[0] * x[0]).sum::<f64>() / n as f64;
        let syy = xs.iter().map(|x| x[1] * x[1]).sum::<f64>() / n as f64;
        assert!((sxy / (sxx * syy).sqrt() - 0.3).abs() < 0.02);
    }

    #[test]
    fn sampling_is_deterministic() {
        let m = ScalarModel::correlation(0.5).unwrap();
        assert_eq!(m.sample(50, 9), m.sample(50, 9));
        assert_ne!(m.sample(50, 9), m.sample(50, 10));
    }

    #[test]
    fn spec_string_round_trip() {
        for s in ["mean:0", "variance:3.84", "correlation:-0.25"] {
            let m: ScalarModel = s.parse().unwrap();
            assert_eq!(m.to_string(), s);
        }
        assert!("variance:0".parse::<ScalarModel>().is_err());
        assert!("gamma:1".parse::<ScalarModel>().is_err());
        assert!("mean".parse::<ScalarModel>().is_err());
    }
}
