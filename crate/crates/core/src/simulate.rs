//! Finite-sample NCE fits and replicated error estimates.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{asymptotic_kl, asymptotic_mse, generalized_moments};
use crate::densities::NoiseDensity;
use crate::error::{Error, Result};
use crate::models::{ModelKind, Point, ScalarModel};
use crate::quadrature::{CompensatedSum, Grid};

/// Logit clip applied before exponentiation.
const LOGIT_CLIP: f64 = 700.0;
const MAX_ITER: usize = 200;
/// Convergence threshold on the mean gradient of the NCE log-likelihood.
const GRAD_TOL: f64 = 1e-10;
/// Largest tolerated fraction of failed replicates.
const MAX_FAILURE_RATE: f64 = 0.05;

/// Outcome of one NCE fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NceRun {
    pub t_d: usize,
    pub t_n: usize,
    pub seed: u64,
    pub theta_hat: f64,
    /// NCE log-likelihood at `theta_hat`.
    pub objective_value: f64,
    pub converged: bool,
    pub iterations: usize,
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

struct Sample<'a> {
    points: &'a [Point],
    /// log(ν p_n) at every point.
    log_noise: Vec<f64>,
}

struct Fit<'a> {
    kind: ModelKind,
    data: Sample<'a>,
    noise: Sample<'a>,
}

impl Fit<'_> {
    fn logit(&self, theta: f64, x: &Point, log_noise: f64) -> f64 {
        (self.kind.log_density_at(theta, x) - log_noise).clamp(-LOGIT_CLIP, LOGIT_CLIP)
    }

    fn log_likelihood(&self, theta: f64) -> f64 {
        let mut acc = CompensatedSum::default();
        for (x, ln) in self.data.points.iter().zip(&self.data.log_noise) {
            acc.add(-softplus(-self.logit(theta, x, *ln)));
        }
        for (y, ln) in self.noise.points.iter().zip(&self.noise.log_noise) {
            acc.add(-softplus(self.logit(theta, y, *ln)));
        }
        acc.value()
    }

    /// First and second θ-derivatives of the log-likelihood.
    fn derivatives(&self, theta: f64) -> (f64, f64) {
        let (mut d1, mut d2) = (CompensatedSum::default(), CompensatedSum::default());
        for (x, ln) in self.data.points.iter().zip(&self.data.log_noise) {
            let s = sigmoid(self.logit(theta, x, *ln));
            let g = self.kind.score_at(theta, x);
            let dg = self.kind.score_derivative_at(theta, x);
            d1.add((1.0 - s) * g);
            d2.add(-s * (1.0 - s) * g * g + (1.0 - s) * dg);
        }
        for (y, ln) in self.noise.points.iter().zip(&self.noise.log_noise) {
            let s = sigmoid(self.logit(theta, y, *ln));
            let g = self.kind.score_at(theta, y);
            let dg = self.kind.score_derivative_at(theta, y);
            d1.add(-s * g);
            d2.add(-s * (1.0 - s) * g * g - s * dg);
        }
        (d1.value(), d2.value())
    }
}

/// Fits θ by maximizing the NCE log-likelihood
/// `Σ_data log σ(G) + Σ_noise log(1 − σ(G))`, `G = log p_θ − log(ν p_n)`,
/// with `ν = |noise| / |data|`.
///
/// The stationary point is found by Newton steps safeguarded by bisection on
/// a bracket of the gradient's sign change, kept inside the parameter domain.
pub fn nce_fit(
    data: &[Point],
    noise_points: &[Point],
    kind: ModelKind,
    noise: &NoiseDensity,
    init_theta: f64,
) -> Result<NceRun> {
    if data.is_empty() || noise_points.is_empty() {
        return Err(Error::Construction("data and noise samples must be nonempty".into()));
    }
    if !kind.contains(init_theta) {
        return Err(Error::Domain(format!("initial {kind} parameter {init_theta} outside domain")));
    }
    let nu = noise_points.len() as f64 / data.len() as f64;
    let log_nu = nu.ln();
    let sample = |points| Sample {
        points,
        log_noise: points.iter().map(|p| noise.log_density(p) + log_nu).collect(),
    };
    let fit = Fit {
        kind,
        data: sample(data),
        noise: sample(noise_points),
    };
    let n = (data.len() + noise_points.len()) as f64;
    let (dom_lo, dom_hi) = kind.domain();
    // Points where the gradient is known positive (root to the right) or
    // negative (root to the left).
    let mut lo: Option<f64> = None;
    let mut hi: Option<f64> = None;
    let mut theta = init_theta;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITER {
        iterations += 1;
        let (d1, d2) = fit.derivatives(theta);
        if !d1.is_finite() {
            break;
        }
        if (d1 / n).abs() <= GRAD_TOL {
            converged = true;
            break;
        }
        if d1 > 0.0 {
            lo = Some(theta);
        } else {
            hi = Some(theta);
        }
        let left = lo.unwrap_or(dom_lo);
        let right = hi.unwrap_or(dom_hi);
        let newton = theta - d1 / d2;
        let next = if d2 < 0.0 && newton > left && newton < right {
            newton
        } else {
            match (lo, hi) {
                (Some(a), Some(b)) => 0.5 * (a + b),
                (_, None) if dom_hi.is_finite() => 0.5 * (theta + dom_hi),
                (_, None) => theta + theta.abs().max(1.0),
                (None, _) if dom_lo.is_finite() => 0.5 * (theta + dom_lo),
                (None, _) => theta - theta.abs().max(1.0),
            }
        };
        if next == theta {
            break;
        }
        theta = next;
    }
    let objective_value = fit.log_likelihood(theta);
    Ok(NceRun {
        t_d: data.len(),
        t_n: noise_points.len(),
        seed: 0,
        theta_hat: theta,
        objective_value,
        converged: converged && objective_value.is_finite(),
        iterations,
    })
}

/// Replicated squared-error and KL estimates with asymptotic predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalReport {
    pub model: String,
    pub theta: f64,
    pub noise: String,
    pub nu: f64,
    #[serde(rename = "T")]
    pub t: usize,
    /// Replicates that converged and enter the averages.
    pub replicates: usize,
    pub failed: usize,
    pub mean_sq_error: f64,
    pub std_error: f64,
    pub mean_kl: f64,
    pub kl_std_error: f64,
    pub predicted_mse: f64,
    pub predicted_kl: f64,
}

impl EmpiricalReport {
    pub const CSV_HEADER: &'static str =
        "model,theta,noise,nu,T,replicates,mse,mse_se,kl,kl_se,predicted_mse,predicted_kl";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.model,
            self.theta,
            self.noise,
            self.nu,
            self.t,
            self.replicates,
            self.mean_sq_error,
            self.std_error,
            self.mean_kl,
            self.kl_std_error,
            self.predicted_mse,
            self.predicted_kl
        )
    }
}

/// Settings of a replication run.
#[derive(Debug, Clone, PartialEq)]
pub struct Replication {
    pub nu: f64,
    pub t: usize,
    pub replicates: usize,
    pub seed: u64,
}

impl Replication {
    /// `(T_d, T_n)` with `T_d = round(T/(1+ν))`.
    pub fn split(&self) -> Result<(usize, usize)> {
        if !(self.nu.is_finite() && self.nu > 0.0) {
            return Err(Error::Domain(format!("noise ratio must be positive, got {}", self.nu)));
        }
        let t_d = (self.t as f64 / (1.0 + self.nu)).round() as usize;
        if t_d == 0 || t_d >= self.t {
            return Err(Error::Domain(format!(
                "budget {} with ratio {} leaves no data or no noise samples",
                self.t, self.nu
            )));
        }
        Ok((t_d, self.t - t_d))
    }
}

/// One fit on freshly drawn samples. The generator for replicate `r` is the
/// master seed's ChaCha8 stream number `r`.
pub fn replicate_fit(
    model: &ScalarModel,
    noise: &NoiseDensity,
    t_d: usize,
    t_n: usize,
    seed: u64,
    r: u64,
) -> Result<NceRun> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(r);
    let data = model.sample_with(t_d, &mut rng);
    let noise_points = noise.sample_with(t_n, &mut rng);
    let mut run = nce_fit(&data, &noise_points, model.kind(), noise, model.theta())?;
    run.seed = seed;
    Ok(run)
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().copied().collect::<CompensatedSum>().value() / n;
    let ss = values.iter().map(|v| (v - mean).powi(2)).collect::<CompensatedSum>().value();
    let var = if values.len() > 1 { ss / (n - 1.0) } else { f64::INFINITY };
    (mean, (var / n).sqrt())
}

/// Replicated squared error and KL divergence of NCE fits, with the
/// asymptotic predictions computed on `grid`.
pub fn empirical_errors(
    model: &ScalarModel,
    noise: &NoiseDensity,
    noise_label: &str,
    rep: &Replication,
    grid: &Grid,
) -> Result<EmpiricalReport> {
    if rep.replicates < 2 {
        return Err(Error::Domain(format!("need at least 2 replicates, got {}", rep.replicates)));
    }
    let (t_d, t_n) = rep.split()?;
    let runs: Vec<Result<NceRun>> = (0..rep.replicates as u64)
        .into_par_iter()
        .map(|r| replicate_fit(model, noise, t_d, t_n, rep.seed, r))
        .collect();
    let theta = model.theta();
    let mut sq = Vec::with_capacity(runs.len());
    let mut kl = Vec::with_capacity(runs.len());
    let mut failed = 0;
    for run in runs {
        match run {
            Ok(r) if r.converged && model.kind().contains(r.theta_hat) => {
                sq.push((r.theta_hat - theta).powi(2));
                kl.push(model.kind().kl_divergence(theta, r.theta_hat));
            }
            _ => failed += 1,
        }
    }
    if failed as f64 > MAX_FAILURE_RATE * rep.replicates as f64 {
        return Err(Error::Numeric(format!(
            "{failed} of {} replicates failed to converge",
            rep.replicates
        )));
    }
    if sq.len() < 2 {
        return Err(Error::Numeric("fewer than 2 converged replicates".into()));
    }
    let (mse, mse_se) = mean_and_se(&sq);
    let (mkl, kl_se) = mean_and_se(&kl);
    let mp = generalized_moments(model, noise, rep.nu, grid)?;
    let t = rep.t as f64;
    Ok(EmpiricalReport {
        model: model.kind().name().to_string(),
        theta,
        noise: noise_label.to_string(),
        nu: rep.nu,
        t: rep.t,
        replicates: sq.len(),
        failed,
        mean_sq_error: mse,
        std_error: mse_se,
        mean_kl: mkl,
        kl_std_error: kl_se,
        predicted_mse: asymptotic_mse(t, &mp)?,
        predicted_kl: asymptotic_kl(t, &mp, model.fisher_information())?,
    })
}

/// Replicated squared error on the model's default grid.
pub fn empirical_mse(
    model: &ScalarModel,
    noise: &NoiseDensity,
    nu: f64,
    t: usize,
    replicates: usize,
    seed: u64,
) -> Result<EmpiricalReport> {
    let rep = Replication { nu, t, replicates, seed };
    empirical_errors(model, noise, &noise.label(), &rep, &Grid::for_model(model)?)
}

/// Replicated KL error. The fits are those of [`empirical_mse`] with the
/// same seed, so both fields of the report are filled either way.
pub fn empirical_kl(
    model: &ScalarModel,
    noise: &NoiseDensity,
    nu: f64,
    t: usize,
    replicates: usize,
    seed: u64,
) -> Result<EmpiricalReport> {
    empirical_mse(model, noise, nu, t, replicates, seed)
}
