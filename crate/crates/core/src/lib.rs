//! Asymptotic statistical efficiency of noise-contrastive estimation (NCE)
//! for one-parameter Gaussian models.

pub mod asymptotics;
pub mod cli;
pub mod densities;
pub mod error;
pub mod models;
pub mod optimize;
pub mod quadrature;
pub mod simulate;
pub mod theory;

pub use asymptotics::{EfficiencyReport, MomentPair, Objective};
pub use densities::{HistogramDensity, NoiseDensity, TabulatedDensity};
pub use error::{Error, Result};
pub use models::{ModelKind, Point, ScalarModel};
pub use quadrature::Grid;
