//! The `nce` command-line front end.
//!
//! Every subcommand resolves a [`RunConfig`] (config file, then flags),
//! validates it, computes a list of named artifacts and writes them either to
//! stdout or, atomically, into the `--out` directory.

pub mod config;
mod figures;

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::asymptotics::{EfficiencyReport, Objective};
use crate::densities::{HistogramDensity, NoiseDensity, DEFAULT_FLOOR};
use crate::error::{Error, Result};
use crate::models::{ModelKind, ScalarModel};
use crate::optimize::{
    linspace, optimize_histogram, optimize_proportion, sweep_parametric_noise_on, HistogramOptions,
    SweepResult, DEFAULT_PROPORTION_POINTS,
};
use crate::quadrature::{Grid, DEFAULT_HALF_WIDTH, DEFAULT_NODES_1D, DEFAULT_NODES_2D};
use crate::simulate::{empirical_errors, EmpiricalReport, Replication};
use crate::theory::{
    default_eps1, optimal_noise_all_data_split, optimal_noise_all_noise, Regime, TheoreticalNoise,
    DEFAULT_EPS2,
};

pub use config::RunConfig;

const DEFAULT_T: f64 = 1000.0;
const DEFAULT_REPLICATES: usize = 1000;

#[derive(Parser, Debug)]
#[command(
    name = "nce",
    version,
    about = "Asymptotic efficiency of noise-contrastive estimation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Asymptotic MSE and KL error for one noise and noise-data ratio.
    Mse(Flags),
    /// Objective over same-family noise parameters.
    SweepNoise(Flags),
    /// Objective over the noise proportion at a fixed budget.
    SweepProportion(Flags),
    /// Optimize a histogram noise by conjugate gradient.
    OptimizeHistogram(Flags),
    /// Tabulate a closed-form limit-regime optimal noise.
    TheoryNoise(Flags),
    /// Replicated finite-sample NCE fits.
    Simulate(Flags),
    /// Run the preconfigured pipeline behind one figure.
    ReproduceFigure {
        figure: Figure,
        #[command(flatten)]
        flags: Flags,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Figure {
    #[value(name = "1")]
    One,
    #[value(name = "2a")]
    TwoA,
    #[value(name = "2b")]
    TwoB,
    #[value(name = "3")]
    Three,
    #[value(name = "4")]
    Four,
    #[value(name = "5")]
    Five,
    #[value(name = "S1")]
    S1,
    #[value(name = "S6")]
    S6,
}

#[derive(Args, Debug, Default)]
struct Flags {
    /// Data model, e.g. `variance:1`.
    #[arg(long)]
    model: Option<String>,
    /// `same-family:<θ>`, `histogram[:<lo>:<hi>:<bins>]` or `theory:<mse|kl>:<all-noise|all-data>`.
    #[arg(long)]
    noise: Option<String>,
    /// Noise-data ratio T_n/T_d.
    #[arg(long, conflicts_with = "proportion", allow_negative_numbers = true)]
    nu: Option<f64>,
    /// Noise proportion ν/(1+ν).
    #[arg(long, allow_negative_numbers = true)]
    proportion: Option<f64>,
    /// Total sample budget T_d + T_n.
    #[arg(long = "T", allow_negative_numbers = true)]
    t: Option<f64>,
    /// Quadrature nodes per axis.
    #[arg(long)]
    grid_n: Option<usize>,
    /// Quadrature half-width in data standard deviations.
    #[arg(long, allow_negative_numbers = true)]
    grid_range: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicates: Option<usize>,
    /// Output directory for all artifacts; the primary one goes to stdout when absent.
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    objective: Option<Objective>,
    /// Softmax temperature of the all-data noise.
    #[arg(long, allow_negative_numbers = true)]
    eps1: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    eps2: Option<f64>,
    /// Share of all-data noise mass left of the data centre.
    #[arg(long, allow_negative_numbers = true)]
    mass_left: Option<f64>,
    /// First noise parameter of a sweep.
    #[arg(long, allow_negative_numbers = true)]
    from: Option<f64>,
    /// Last noise parameter of a sweep.
    #[arg(long, allow_negative_numbers = true)]
    to: Option<f64>,
    /// Number of sweep points.
    #[arg(long)]
    points: Option<usize>,
    /// Conjugate-gradient iteration cap.
    #[arg(long)]
    max_iter: Option<usize>,
    /// Config file of `key=value` lines; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl Flags {
    fn resolve(self) -> Result<RunConfig> {
        let flags = RunConfig {
            model: self.model,
            noise: self.noise,
            nu: self.nu,
            proportion: self.proportion,
            t: self.t,
            grid_n: self.grid_n,
            grid_range: self.grid_range,
            seed: self.seed,
            replicates: self.replicates,
            out: self.out,
            threads: self.threads,
            objective: self.objective,
            eps1: self.eps1,
            eps2: self.eps2,
            mass_left: self.mass_left,
            from: self.from,
            to: self.to,
            points: self.points,
            max_iter: self.max_iter,
        };
        let file = match self.config {
            Some(path) => {
                let text = fs::read_to_string(&path).map_err(|e| {
                    Error::config("config", format!("cannot read {}: {e}", path.display()))
                })?;
                RunConfig::parse(&text)?
            }
            None => RunConfig::default(),
        };
        let merged = file.merge(flags);
        if merged.nu.is_some() && merged.proportion.is_some() {
            return Err(Error::config("proportion", "give either nu or proportion, not both"));
        }
        Ok(merged)
    }
}

/// A named output file.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

impl Artifact {
    fn new(name: impl Into<String>, contents: String) -> Self {
        Self {
            name: name.into(),
            contents,
        }
    }

    fn json<T: Serialize>(name: &str, value: &T) -> Result<Self> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        Ok(Self::new(name, text))
    }
}

/// Noise specification of the `--noise` flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseSpec {
    SameFamily(f64),
    /// Uniform initial histogram; the model's default box when `None`.
    Histogram(Option<(f64, f64, usize)>),
    Theory(Objective, Regime),
}

impl fmt::Display for NoiseSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseSpec::SameFamily(p) => write!(f, "same-family:{p}"),
            NoiseSpec::Histogram(None) => write!(f, "histogram"),
            NoiseSpec::Histogram(Some((lo, hi, k))) => write!(f, "histogram:{lo}:{hi}:{k}"),
            NoiseSpec::Theory(o, r) => write!(f, "theory:{o}:{r}"),
        }
    }
}

impl FromStr for NoiseSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |msg: String| Error::config("noise", msg);
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["same-family", p] => p
                .parse()
                .map(NoiseSpec::SameFamily)
                .map_err(|_| bad(format!("bad same-family parameter `{p}`"))),
            ["histogram"] => Ok(NoiseSpec::Histogram(None)),
            ["histogram", lo, hi, k] => {
                let lo: f64 = lo.parse().map_err(|_| bad(format!("bad histogram lower edge `{lo}`")))?;
                let hi: f64 = hi.parse().map_err(|_| bad(format!("bad histogram upper edge `{hi}`")))?;
                let k: usize = k.parse().map_err(|_| bad(format!("bad histogram bin count `{k}`")))?;
                if !(lo < hi) || k == 0 {
                    return Err(bad(format!("histogram needs lo < hi and bins > 0, got {s}")));
                }
                Ok(NoiseSpec::Histogram(Some((lo, hi, k))))
            }
            ["theory", o, r] => {
                let o = o.parse().map_err(|e: Error| bad(e.to_string()))?;
                let r = r.parse().map_err(|e: Error| bad(e.to_string()))?;
                Ok(NoiseSpec::Theory(o, r))
            }
            _ => Err(bad(format!(
                "expected same-family:<θ>, histogram[:<lo>:<hi>:<bins>] or theory:<objective>:<regime>, got `{s}`"
            ))),
        }
    }
}

/// A resolved noise with its label and, for closed-form noises, the
/// tabulated construction.
pub struct ResolvedNoise {
    pub density: NoiseDensity,
    pub label: String,
    pub theory: Option<TheoreticalNoise>,
    pub histogram: Option<HistogramDensity>,
}

/// Default same-family sweep `(from, to, points)`, in steps of 0.05 (0.05θ
/// for the variance).
fn default_sweep(model: &ScalarModel) -> (f64, f64, usize) {
    let theta = model.theta();
    match model.kind() {
        ModelKind::GaussianMean => (theta - 4.0, theta + 4.0, 161),
        ModelKind::GaussianVariance => (0.05 * theta, 8.0 * theta, 160),
        ModelKind::GaussianCorrelation => (-0.95, 0.95, 39),
    }
}

/// Validated view of a [`RunConfig`] with per-command defaults.
pub struct Context {
    config: RunConfig,
}

fn positive(field: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::config(field, format!("must be positive and finite, got {v}")))
    }
}

impl Context {
    pub fn new(config: RunConfig) -> Self {
        Self { config }
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn model(&self) -> Result<ScalarModel> {
        let spec = self
            .config
            .model
            .as_deref()
            .ok_or_else(|| Error::config("model", "missing; use e.g. --model variance:1"))?;
        spec.parse::<ScalarModel>()
            .map_err(|e| Error::config("model", e.to_string()))
    }

    /// Noise-data ratio from `nu` or `proportion`, 1 by default.
    pub fn nu(&self) -> Result<f64> {
        match (self.config.nu, self.config.proportion) {
            (Some(nu), _) => positive("nu", nu),
            (None, Some(p)) if p > 0.0 && p < 1.0 => Ok(p / (1.0 - p)),
            (None, Some(p)) => Err(Error::config("proportion", format!("must lie in (0, 1), got {p}"))),
            (None, None) => Ok(1.0),
        }
    }

    pub fn t(&self) -> Result<f64> {
        positive("T", self.config.t.unwrap_or(DEFAULT_T))
    }

    fn t_samples(&self) -> Result<usize> {
        let t = self.t()?;
        if t.fract() != 0.0 || !(2.0..=1e12).contains(&t) {
            return Err(Error::config("T", format!("must be a whole number of samples ≥ 2, got {t}")));
        }
        Ok(t as usize)
    }

    pub fn objective(&self) -> Objective {
        self.config.objective.unwrap_or(Objective::Mse)
    }

    pub fn seed(&self) -> u64 {
        self.config.seed.unwrap_or(0)
    }

    fn replicates(&self, default: usize) -> Result<usize> {
        match self.config.replicates.unwrap_or(default) {
            r if r >= 2 => Ok(r),
            r => Err(Error::config("replicates", format!("need at least 2, got {r}"))),
        }
    }

    fn max_iter(&self) -> usize {
        self.config.max_iter.unwrap_or(HistogramOptions::default().max_iter)
    }

    pub fn grid(&self, model: &ScalarModel) -> Result<Grid> {
        let n = self.config.grid_n.unwrap_or(if model.dim() == 1 {
            DEFAULT_NODES_1D
        } else {
            DEFAULT_NODES_2D
        });
        if n < 3 || n.is_multiple_of(2) {
            return Err(Error::config("grid-n", format!("must be odd and at least 3, got {n}")));
        }
        let range = positive("grid-range", self.config.grid_range.unwrap_or(DEFAULT_HALF_WIDTH))?;
        Grid::for_model_with(model, n, range).map_err(|e| Error::config("grid-n", e.to_string()))
    }

    /// Noise parameters of a sweep: `from`/`to`/`points` when set, otherwise
    /// a model-dependent default range.
    pub fn noise_params(&self, model: &ScalarModel) -> Result<Vec<f64>> {
        let (lo, hi, n) = default_sweep(model);
        let lo = self.config.from.unwrap_or(lo);
        let hi = self.config.to.unwrap_or(hi);
        let n = self.config.points.unwrap_or(n);
        if !(lo < hi) {
            return Err(Error::config("to", format!("sweep needs from < to, got [{lo}, {hi}]")));
        }
        if n < 3 {
            return Err(Error::config("points", format!("need at least 3, got {n}")));
        }
        Ok(linspace(lo, hi, n))
    }

    fn noise_spec(&self, model: &ScalarModel) -> Result<NoiseSpec> {
        match self.config.noise.as_deref() {
            Some(s) => s.parse(),
            None => Ok(NoiseSpec::SameFamily(model.theta())),
        }
    }

    fn theory_noise(
        &self,
        model: &ScalarModel,
        objective: Objective,
        regime: Regime,
        grid: &Grid,
    ) -> Result<TheoreticalNoise> {
        match regime {
            Regime::AllNoise => optimal_noise_all_noise(model, objective, grid),
            Regime::AllData => {
                let eps1 = match self.config.eps1 {
                    Some(e) => positive("eps1", e)?,
                    None => default_eps1(model, objective, grid),
                };
                let eps2 = positive("eps2", self.config.eps2.unwrap_or(DEFAULT_EPS2))?;
                let mass = self.config.mass_left.unwrap_or(0.5);
                if !(0.0..=1.0).contains(&mass) {
                    return Err(Error::config("mass-left", format!("must lie in [0, 1], got {mass}")));
                }
                optimal_noise_all_data_split(model, objective, eps1, eps2, mass, grid)
            }
        }
    }

    pub fn noise(&self, model: &ScalarModel, grid: &Grid) -> Result<ResolvedNoise> {
        let spec = self.noise_spec(model)?;
        let label = spec.to_string();
        Ok(match spec {
            NoiseSpec::SameFamily(p) => ResolvedNoise {
                density: NoiseDensity::Parametric(
                    model.with_theta(p).map_err(|e| Error::config("noise", e.to_string()))?,
                ),
                label,
                theory: None,
                histogram: None,
            },
            NoiseSpec::Histogram(bounds) => {
                let h = match bounds {
                    None => HistogramDensity::default_for(model),
                    Some((lo, hi, k)) => HistogramDensity::uniform(model.dim(), lo, hi, k, DEFAULT_FLOOR),
                }
                .map_err(|e| Error::config("noise", e.to_string()))?;
                ResolvedNoise {
                    density: NoiseDensity::Histogram(h.clone()),
                    label,
                    theory: None,
                    histogram: Some(h),
                }
            }
            NoiseSpec::Theory(objective, regime) => {
                let theory = self.theory_noise(model, objective, regime, grid)?;
                ResolvedNoise {
                    density: theory.noise(),
                    label,
                    theory: Some(theory),
                    histogram: None,
                }
            }
        })
    }
}

fn sweep_artifacts(r: &SweepResult) -> Result<Vec<Artifact>> {
    Ok(vec![
        Artifact::new("sweep.csv", r.to_csv()),
        Artifact::json("summary.json", &r.summary())?,
    ])
}

fn run_mse(ctx: &Context) -> Result<Vec<Artifact>> {
    let model = ctx.model()?;
    let grid = ctx.grid(&model)?;
    let noise = ctx.noise(&model, &grid)?;
    let report = EfficiencyReport::compute(&model, &noise.density, &noise.label, ctx.nu()?, ctx.t()?, &grid)?;
    Ok(vec![
        Artifact::json("report.json", &report)?,
        Artifact::new(
            "report.csv",
            format!("{}\n{}\n", EfficiencyReport::CSV_HEADER, report.csv_row()),
        ),
    ])
}

fn run_sweep_noise(ctx: &Context) -> Result<Vec<Artifact>> {
    let model = ctx.model()?;
    let grid = ctx.grid(&model)?;
    let params = ctx.noise_params(&model)?;
    let r = sweep_parametric_noise_on(&model, ctx.nu()?, ctx.t()?, &params, ctx.objective(), &grid)?;
    sweep_artifacts(&r)
}

fn run_sweep_proportion(ctx: &Context) -> Result<Vec<Artifact>> {
    let model = ctx.model()?;
    let grid = ctx.grid(&model)?;
    let noise = ctx.noise(&model, &grid)?;
    let points = ctx.config().points.unwrap_or(DEFAULT_PROPORTION_POINTS);
    if points < 3 {
        return Err(Error::config("points", format!("need at least 3, got {points}")));
    }
    let r = optimize_proportion(&model, &noise.density, ctx.t()?, ctx.objective(), &grid, points)?;
    sweep_artifacts(&r)
}

#[derive(Serialize)]
struct HistogramRun<'a> {
    objective: Objective,
    nu: f64,
    #[serde(rename = "T")]
    t: f64,
    value: f64,
    #[serde(flatten)]
    trace: &'a crate::optimize::OptimizerTrace,
}

fn run_optimize_histogram(ctx: &Context) -> Result<Vec<Artifact>> {
    let model = ctx.model()?;
    let init = match ctx.config().noise {
        None => HistogramDensity::default_for(&model)?,
        Some(_) => {
            let grid = ctx.grid(&model)?;
            ctx.noise(&model, &grid)?
                .histogram
                .ok_or_else(|| Error::config("noise", "optimize-histogram needs a histogram noise"))?
        }
    };
    let options = HistogramOptions {
        max_iter: ctx.max_iter(),
        ..HistogramOptions::default()
    };
    let (nu, t, objective) = (ctx.nu()?, ctx.t()?, ctx.objective());
    let (h, trace) = optimize_histogram(&model, nu, t, &init, objective, &options)?;
    let run = HistogramRun {
        objective,
        nu,
        t,
        value: *trace.objective_history.last().unwrap_or(&f64::NAN),
        trace: &trace,
    };
    Ok(vec![
        Artifact::new("histogram.csv", h.to_csv()),
        Artifact::json("trace.json", &run)?,
    ])
}

fn run_theory_noise(ctx: &Context) -> Result<Vec<Artifact>> {
    let model = ctx.model()?;
    let grid = ctx.grid(&model)?;
    let (objective, regime) = match ctx.config().noise.as_deref() {
        None => (ctx.objective(), Regime::AllNoise),
        Some(s) => match s.parse()? {
            NoiseSpec::Theory(o, r) => (o, r),
            _ => return Err(Error::config("noise", "theory-noise needs theory:<objective>:<regime>")),
        },
    };
    let theory = ctx.theory_noise(&model, objective, regime, &grid)?;
    Ok(vec![
        Artifact::new("density.csv", theory.to_csv()),
        Artifact::json("sidecar.json", &theory.sidecar())?,
    ])
}

fn run_simulate(ctx: &Context) -> Result<Vec<Artifact>> {
    let model = ctx.model()?;
    let grid = ctx.grid(&model)?;
    let noise = ctx.noise(&model, &grid)?;
    let rep = Replication {
        nu: ctx.nu()?,
        t: ctx.t_samples()?,
        replicates: ctx.replicates(DEFAULT_REPLICATES)?,
        seed: ctx.seed(),
    };
    rep.split().map_err(|e| Error::config("T", e.to_string()))?;
    let report = empirical_errors(&model, &noise.density, &noise.label, &rep, &grid)?;
    Ok(vec![
        Artifact::json("report.json", &report)?,
        Artifact::new(
            "report.csv",
            format!("{}\n{}\n", EmpiricalReport::CSV_HEADER, report.csv_row()),
        ),
    ])
}

type Runner = fn(&Context) -> Result<Vec<Artifact>>;

fn execute(command: Command) -> Result<()> {
    let (flags, runner, figure): (Flags, Option<Runner>, Option<Figure>) = match command {
        Command::Mse(f) => (f, Some(run_mse), None),
        Command::SweepNoise(f) => (f, Some(run_sweep_noise), None),
        Command::SweepProportion(f) => (f, Some(run_sweep_proportion), None),
        Command::OptimizeHistogram(f) => (f, Some(run_optimize_histogram), None),
        Command::TheoryNoise(f) => (f, Some(run_theory_noise), None),
        Command::Simulate(f) => (f, Some(run_simulate), None),
        Command::ReproduceFigure { figure, flags } => (flags, None, Some(figure)),
    };
    let ctx = Context::new(flags.resolve()?);
    let work = || match (runner, figure) {
        (Some(run), _) => run(&ctx),
        (None, Some(fig)) => figures::reproduce(fig, &ctx),
        (None, None) => unreachable!("every command has a runner or a figure"),
    };
    let artifacts = match ctx.config().threads {
        Some(0) => return Err(Error::config("threads", "must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::config("threads", e.to_string()))?
            .install(work)?,
        None => work()?,
    };
    emit(&artifacts, ctx.config().out.as_deref(), figure.is_some())
}

/// Writes `contents` to `dir/name` through a temporary file and a rename.
pub fn write_atomic(dir: &Path, name: &str, contents: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, dir.join(name))?;
    Ok(())
}

/// Writes every artifact into `out`. Without a directory only the first
/// artifact goes to stdout, unless `all` is set, in which case each is
/// printed after a `# name` line.
fn emit(artifacts: &[Artifact], out: Option<&str>, all: bool) -> Result<()> {
    match out {
        Some(dir) => {
            for a in artifacts {
                write_atomic(Path::new(dir), &a.name, &a.contents)?;
            }
        }
        None if !all || artifacts.len() == 1 => {
            if let Some(a) = artifacts.first() {
                print!("{}", a.contents);
            }
        }
        None => {
            for a in artifacts {
                println!("# {}", a.name);
                print!("{}", a.contents);
            }
        }
    }
    Ok(())
}

/// Exit status for a library error: 2 for invalid input, 3 for numeric
/// failures, 1 for I/O.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } | Error::Domain(_) | Error::Construction(_) => 2,
        Error::Numeric(_) | Error::Degenerate(_) => 3,
        Error::Io(_) | Error::Json(_) => 1,
    }
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
