//! Noise densities p_n: same-family Gaussians, softmax-weighted histograms and
//! densities tabulated on a quadrature grid.

use std::fmt::Write as _;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::models::{Point, ScalarModel};
use crate::quadrature::{check_edges, Grid};

/// Default per-bin floor mass.
pub const DEFAULT_FLOOR: f64 = 1e-8;
/// Default number of histogram bins per axis.
pub const DEFAULT_BINS_1D: usize = 64;
pub const DEFAULT_BINS_2D: usize = 32;
/// Default histogram box half-width, in data standard deviations.
pub const DEFAULT_BOX: f64 = 6.0;

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Piecewise-constant density whose bin masses are a floored softmax of
/// free logits.
///
/// Bin k carries probability `(softmax(logits)_k + floor) / (1 + K·floor)`,
/// spread uniformly over its area. Outside the box the density is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramDensity {
    x_edges: Vec<f64>,
    y_edges: Option<Vec<f64>>,
    logits: Vec<f64>,
    floor: f64,
    probs: Vec<f64>,
    areas: Vec<f64>,
}

impl HistogramDensity {
    /// One-dimensional histogram over `edges` (K+1 values, K logits).
    pub fn from_weights(edges: &[f64], logits: &[f64], floor: f64) -> Result<Self> {
        Self::build(edges.to_vec(), None, logits.to_vec(), floor)
    }

    /// Two-dimensional histogram on the tensor product of the edge lists.
    /// Cell `(i, j)` has logit index `i * (y_edges.len() - 1) + j`.
    pub fn from_weights_2d(
        x_edges: &[f64],
        y_edges: &[f64],
        logits: &[f64],
        floor: f64,
    ) -> Result<Self> {
        Self::build(x_edges.to_vec(), Some(y_edges.to_vec()), logits.to_vec(), floor)
    }

    /// Uniform histogram on `[lo, hi]^dim` with `bins` bins per axis.
    pub fn uniform(dim: usize, lo: f64, hi: f64, bins: usize, floor: f64) -> Result<Self> {
        if bins == 0 {
            return Err(Error::Construction("need at least one bin".into()));
        }
        let edges = uniform_edges(lo, hi, bins);
        match dim {
            1 => Self::from_weights(&edges, &vec![0.0; bins], floor),
            2 => Self::from_weights_2d(&edges, &edges, &vec![0.0; bins * bins], floor),
            _ => Err(Error::Construction(format!("dimension must be 1 or 2, got {dim}"))),
        }
    }

    /// Default histogram for a data model: centre ± 6 standard deviations,
    /// 64 bins in 1-D and 32×32 in 2-D.
    pub fn default_for(model: &ScalarModel) -> Result<Self> {
        let (c, s) = model.location_scale();
        let bins = if model.dim() == 1 {
            DEFAULT_BINS_1D
        } else {
            DEFAULT_BINS_2D
        };
        Self::uniform(
            model.dim(),
            c - DEFAULT_BOX * s,
            c + DEFAULT_BOX * s,
            bins,
            DEFAULT_FLOOR,
        )
    }

    /// Histogram whose bin probabilities are proportional to `masses`
    /// (masses below the floor map to the floor).
    pub fn from_masses(&self, masses: &[f64]) -> Result<Self> {
        if masses.len() != self.len() {
            return Err(Error::Construction(format!(
                "expected {} masses, got {}",
                self.len(),
                masses.len()
            )));
        }
        if masses.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(Error::Construction("masses must be finite and non-negative".into()));
        }
        let total: f64 = masses.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Construction("masses sum to zero".into()));
        }
        // Undo the floor so that bin probabilities come out proportional to
        // `masses` whenever every mass exceeds the floor.
        let k = self.len() as f64;
        let logits: Vec<f64> = masses
            .iter()
            .map(|&m| {
                let q = m / total * (1.0 + k * self.floor) - self.floor;
                if q > 0.0 {
                    q.ln()
                } else {
                    -745.0
                }
            })
            .collect();
        self.with_logits(&logits)
    }

    fn build(
        x_edges: Vec<f64>,
        y_edges: Option<Vec<f64>>,
        logits: Vec<f64>,
        floor: f64,
    ) -> Result<Self> {
        check_edges(&x_edges)?;
        if let Some(y) = &y_edges {
            check_edges(y)?;
        }
        if !(floor.is_finite() && floor > 0.0) {
            return Err(Error::Construction(format!("floor must be positive, got {floor}")));
        }
        let widths = |e: &[f64]| e.windows(2).map(|w| w[1] - w[0]).collect::<Vec<_>>();
        let wx = widths(&x_edges);
        let areas: Vec<f64> = match &y_edges {
            None => wx,
            Some(y) => {
                let wy = widths(y);
                wx.iter()
                    .flat_map(|a| wy.iter().map(move |b| a * b))
                    .collect()
            }
        };
        if logits.len() != areas.len() {
            return Err(Error::Construction(format!(
                "{} bins but {} logits",
                areas.len(),
                logits.len()
            )));
        }
        if logits.iter().any(|l| l.is_nan() || *l == f64::INFINITY) {
            return Err(Error::Construction("logits must not be NaN or +inf".into()));
        }
        let k = areas.len() as f64;
        let probs = softmax(&logits)
            .into_iter()
            .map(|q| (q + floor) / (1.0 + k * floor))
            .collect();
        Ok(Self {
            x_edges,
            y_edges,
            logits,
            floor,
            probs,
            areas,
        })
    }

    /// Same bins and floor, new logits.
    pub fn with_logits(&self, logits: &[f64]) -> Result<Self> {
        Self::build(
            self.x_edges.clone(),
            self.y_edges.clone(),
            logits.to_vec(),
            self.floor,
        )
    }

    pub fn dim(&self) -> usize {
        if self.y_edges.is_some() {
            2
        } else {
            1
        }
    }

    /// Total number of bins K.
    pub fn len(&self) -> usize {
        self.areas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.areas.is_empty()
    }

    pub fn x_edges(&self) -> &[f64] {
        &self.x_edges
    }

    pub fn y_edges(&self) -> Option<&[f64]> {
        self.y_edges.as_deref()
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn areas(&self) -> &[f64] {
        &self.areas
    }

    /// Probability mass of every bin.
    pub fn bin_probabilities(&self) -> &[f64] {
        &self.probs
    }

    /// Density value inside every bin.
    pub fn bin_densities(&self) -> Vec<f64> {
        self.probs.iter().zip(&self.areas).map(|(p, a)| p / a).collect()
    }

    /// Bin containing `x`; bins are half-open `[lo, hi)` except the last,
    /// which also contains its upper edge.
    pub fn bin_index(&self, x: &Point) -> Option<usize> {
        let ix = axis_bin(&self.x_edges, x[0])?;
        match &self.y_edges {
            None => Some(ix),
            Some(y) => {
                let iy = axis_bin(y, x[1])?;
                Some(ix * (y.len() - 1) + iy)
            }
        }
    }

    pub fn density(&self, x: &Point) -> f64 {
        self.bin_index(x)
            .map_or(0.0, |k| self.probs[k] / self.areas[k])
    }

    /// Bounds `(x_lo, x_hi, y_lo, y_hi)` of bin `k` (y bounds are zero in 1-D).
    pub fn bin_bounds(&self, k: usize) -> (f64, f64, f64, f64) {
        match &self.y_edges {
            None => (self.x_edges[k], self.x_edges[k + 1], 0.0, 0.0),
            Some(y) => {
                let ny = y.len() - 1;
                let (i, j) = (k / ny, k % ny);
                (self.x_edges[i], self.x_edges[i + 1], y[j], y[j + 1])
            }
        }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R, bins: &WeightedIndex<f64>) -> Point {
        let k = bins.sample(rng);
        let (x0, x1, y0, y1) = self.bin_bounds(k);
        let x = x0 + (x1 - x0) * rng.random::<f64>();
        if self.y_edges.is_some() {
            [x, y0 + (y1 - y0) * rng.random::<f64>()]
        } else {
            [x, 0.0]
        }
    }

    /// CSV with header `bin_lo,bin_hi,density` (1-D) or
    /// `x_lo,x_hi,y_lo,y_hi,density` (2-D).
    pub fn to_csv(&self) -> String {
        let dens = self.bin_densities();
        let rows = (0..self.len()).map(|k| (self.bin_bounds(k), dens[k]));
        bins_to_csv(self.dim(), rows)
    }

    /// Parses the CSV written by [`to_csv`](Self::to_csv). Bins must tile a
    /// tensor grid; bin masses become logits on top of `floor`.
    pub fn from_csv(text: &str, floor: f64) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Construction("empty histogram CSV".into()))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        let two_d = match cols.as_slice() {
            ["bin_lo", "bin_hi", "density"] => false,
            ["x_lo", "x_hi", "y_lo", "y_hi", "density"] => true,
            _ => return Err(Error::Construction(format!("unexpected header `{header}`"))),
        };
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let vals: std::result::Result<Vec<f64>, _> =
                line.split(',').map(|v| v.trim().parse::<f64>()).collect();
            let vals = vals.map_err(|e| Error::Construction(format!("row {}: {e}", i + 1)))?;
            if vals.len() != cols.len() {
                return Err(Error::Construction(format!("row {} has {} fields", i + 1, vals.len())));
            }
            rows.push(vals);
        }
        let collect_edges = |lo: usize, hi: usize| {
            let mut e: Vec<f64> = rows.iter().flat_map(|r| [r[lo], r[hi]]).collect();
            e.sort_by(|a, b| a.total_cmp(b));
            e.dedup();
            e
        };
        let dens_col = cols.len() - 1;
        let hist = if two_d {
            let xe = collect_edges(0, 1);
            let ye = collect_edges(2, 3);
            Self::from_weights_2d(&xe, &ye, &vec![0.0; (xe.len() - 1) * (ye.len() - 1)], floor)?
        } else {
            let xe = collect_edges(0, 1);
            Self::from_weights(&xe, &vec![0.0; xe.len() - 1], floor)?
        };
        if rows.len() != hist.len() {
            return Err(Error::Construction("bins do not tile a grid".into()));
        }
        let mut masses = vec![0.0; hist.len()];
        for r in &rows {
            let centre = if two_d {
                [0.5 * (r[0] + r[1]), 0.5 * (r[2] + r[3])]
            } else {
                [0.5 * (r[0] + r[1]), 0.0]
            };
            let k = hist.bin_index(&centre).unwrap();
            masses[k] = r[dens_col] * hist.areas[k];
        }
        hist.from_masses(&masses)
    }
}

pub(crate) fn uniform_edges(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let h = (hi - lo) / bins as f64;
    (0..=bins)
        .map(|i| if i == bins { hi } else { lo + h * i as f64 })
        .collect()
}

fn axis_bin(edges: &[f64], x: f64) -> Option<usize> {
    let k = edges.len() - 1;
    if !(x >= edges[0] && x <= edges[k]) {
        return None;
    }
    let i = edges.partition_point(|&e| e <= x);
    Some(i.saturating_sub(1).min(k - 1))
}

pub(crate) fn bins_to_csv(
    dim: usize,
    rows: impl Iterator<Item = ((f64, f64, f64, f64), f64)>,
) -> String {
    let mut out = String::new();
    if dim == 1 {
        out.push_str("bin_lo,bin_hi,density\n");
        for ((a, b, _, _), d) in rows {
            let _ = writeln!(out, "{a},{b},{d}");
        }
    } else {
        out.push_str("x_lo,x_hi,y_lo,y_hi,density\n");
        for ((a, b, c, e), d) in rows {
            let _ = writeln!(out, "{a},{b},{c},{e},{d}");
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interpolation {
    Nearest,
    Linear,
}

/// Density given by its values on the nodes of a uniform tensor grid.
///
/// With linear (bilinear in 2-D) interpolation, the trapezoid integral of the
/// node values is exactly the integral of the interpolant; nearest-node
/// interpolation on a uniform grid has the same property.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedDensity {
    axes: Vec<Vec<f64>>,
    values: Vec<f64>,
    interpolation: Interpolation,
}

impl TabulatedDensity {
    /// Tabulates non-negative `values` (one per grid node) and rescales them
    /// to unit trapezoid mass.
    pub fn from_grid(grid: &Grid, values: Vec<f64>, interpolation: Interpolation) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Construction(format!(
                "{} values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Construction("tabulated values must be finite and non-negative".into()));
        }
        for axis in grid.axes() {
            let h = axis.nodes[1] - axis.nodes[0];
            let uniform = axis
                .nodes
                .windows(2)
                .all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h);
            if !uniform {
                return Err(Error::Construction("tabulated densities need uniform axes".into()));
            }
        }
        let mass = grid.integrate_values(&values)?;
        if !(mass > 0.0) {
            return Err(Error::Numeric("tabulated values have zero mass".into()));
        }
        let values = values.into_iter().map(|v| v / mass).collect();
        Ok(Self {
            axes: grid.axes().iter().map(|a| a.nodes.clone()).collect(),
            values,
            interpolation,
        })
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn axes(&self) -> &[Vec<f64>] {
        &self.axes
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interpolation
    }

    fn value_at(&self, idx: &[usize]) -> f64 {
        match idx {
            [i] => self.values[*i],
            [i, j] => self.values[i * self.axes[1].len() + j],
            _ => unreachable!(),
        }
    }

    /// Cell index and fractional offset along one axis; `None` outside.
    fn locate(axis: &[f64], x: f64) -> Option<(usize, f64)> {
        let n = axis.len();
        let (lo, hi) = (axis[0], axis[n - 1]);
        if !(x >= lo && x <= hi) {
            return None;
        }
        let h = (hi - lo) / (n - 1) as f64;
        let t = (x - lo) / h;
        let i = (t.floor() as usize).min(n - 2);
        Some((i, (t - i as f64).clamp(0.0, 1.0)))
    }

    pub fn density(&self, x: &Point) -> f64 {
        let mut cells = [(0usize, 0.0f64); 2];
        for (d, axis) in self.axes.iter().enumerate() {
            match Self::locate(axis, x[d]) {
                Some(c) => cells[d] = c,
                None => return 0.0,
            }
        }
        match (self.interpolation, self.dim()) {
            (Interpolation::Nearest, 1) => {
                let (i, t) = cells[0];
                self.value_at(&[i + usize::from(t >= 0.5)])
            }
            (Interpolation::Nearest, _) => {
                let (i, s) = cells[0];
                let (j, t) = cells[1];
                self.value_at(&[i + usize::from(s >= 0.5), j + usize::from(t >= 0.5)])
            }
            (Interpolation::Linear, 1) => {
                let (i, t) = cells[0];
                self.value_at(&[i]) * (1.0 - t) + self.value_at(&[i + 1]) * t
            }
            (Interpolation::Linear, _) => {
                let (i, s) = cells[0];
                let (j, t) = cells[1];
                let v00 = self.value_at(&[i, j]);
                let v01 = self.value_at(&[i, j + 1]);
                let v10 = self.value_at(&[i + 1, j]);
                let v11 = self.value_at(&[i + 1, j + 1]);
                (1.0 - s) * ((1.0 - t) * v00 + t * v01) + s * ((1.0 - t) * v10 + t * v11)
            }
        }
    }

    /// Cells used for exact sampling: bounds, mass and the density bound used
    /// for rejection inside the cell.
    fn sampling_cells(&self) -> Vec<((f64, f64, f64, f64), f64, f64)> {
        let spans = |axis: &Vec<f64>| -> Vec<(f64, f64, Vec<usize>)> {
            let n = axis.len();
            match self.interpolation {
                Interpolation::Linear => (0..n - 1)
                    .map(|i| (axis[i], axis[i + 1], vec![i, i + 1]))
                    .collect(),
                Interpolation::Nearest => {
                    let h = (axis[n - 1] - axis[0]) / (n - 1) as f64;
                    (0..n)
                        .map(|i| {
                            let a = if i == 0 { axis[0] } else { axis[i] - 0.5 * h };
                            let b = if i == n - 1 { axis[n - 1] } else { axis[i] + 0.5 * h };
                            (a, b, vec![i])
                        })
                        .collect()
                }
            }
        };
        let xs = spans(&self.axes[0]);
        let mut cells = Vec::new();
        if self.dim() == 1 {
            for (a, b, idx) in xs {
                let vals: Vec<f64> = idx.iter().map(|&i| self.value_at(&[i])).collect();
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                let max = vals.iter().copied().fold(0.0, f64::max);
                cells.push(((a, b, 0.0, 0.0), (b - a) * mean, max));
            }
        } else {
            let ys = spans(&self.axes[1]);
            for (a, b, ix) in &xs {
                for (c, d, iy) in &ys {
                    let vals: Vec<f64> = ix
                        .iter()
                        .flat_map(|&i| iy.iter().map(move |&j| (i, j)))
                        .map(|(i, j)| self.value_at(&[i, j]))
                        .collect();
                    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                    let max = vals.iter().copied().fold(0.0, f64::max);
                    cells.push(((*a, *b, *c, *d), (b - a) * (d - c) * mean, max));
                }
            }
        }
        cells
    }
}

/// A noise distribution p_n.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseDensity {
    Parametric(ScalarModel),
    Histogram(HistogramDensity),
    Tabulated(TabulatedDensity),
}

impl NoiseDensity {
    pub fn dim(&self) -> usize {
        match self {
            NoiseDensity::Parametric(m) => m.dim(),
            NoiseDensity::Histogram(h) => h.dim(),
            NoiseDensity::Tabulated(t) => t.dim(),
        }
    }

    /// p_n(x); zero outside the support.
    pub fn density(&self, x: &Point) -> f64 {
        match self {
            NoiseDensity::Parametric(m) => m.density(x),
            NoiseDensity::Histogram(h) => h.density(x),
            NoiseDensity::Tabulated(t) => t.density(x),
        }
    }

    /// log p_n(x); `-inf` outside the support.
    pub fn log_density(&self, x: &Point) -> f64 {
        match self {
            NoiseDensity::Parametric(m) => m.log_density(x),
            other => other.density(x).ln(),
        }
    }

    pub fn sample(&self, n: usize, seed: u64) -> Vec<Point> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with(n, &mut rng)
    }

    /// Exact i.i.d. draws. Histograms draw a bin then a uniform point inside
    /// it; tabulated densities draw a cell then use rejection inside the cell.
    pub fn sample_with<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Point> {
        match self {
            NoiseDensity::Parametric(m) => m.sample_with(n, rng),
            NoiseDensity::Histogram(h) => {
                let bins = WeightedIndex::new(h.bin_probabilities())
                    .expect("histogram probabilities are positive");
                (0..n).map(|_| h.draw(rng, &bins)).collect()
            }
            NoiseDensity::Tabulated(t) => {
                let cells = t.sampling_cells();
                let pick = WeightedIndex::new(cells.iter().map(|c| c.1))
                    .expect("tabulated density has positive mass");
                let two_d = t.dim() == 2;
                (0..n)
                    .map(|_| {
                        let ((a, b, c, d), _, max) = cells[pick.sample(rng)];
                        loop {
                            let x = a + (b - a) * rng.random::<f64>();
                            let y = if two_d { c + (d - c) * rng.random::<f64>() } else { 0.0 };
                            let p = [x, y];
                            if rng.random::<f64>() * max <= t.density(&p) {
                                break p;
                            }
                        }
                    })
                    .collect()
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            NoiseDensity::Parametric(m) => format!("same-family:{}", m.theta()),
            NoiseDensity::Histogram(h) => format!("histogram:{}", h.len()),
            NoiseDensity::Tabulated(_) => "tabulated".to_string(),
        }
    }
}

impl From<ScalarModel> for NoiseDensity {
    fn from(m: ScalarModel) -> Self {
        NoiseDensity::Parametric(m)
    }
}

impl From<HistogramDensity> for NoiseDensity {
    fn from(h: HistogramDensity) -> Self {
        NoiseDensity::Histogram(h)
    }
}

impl From<TabulatedDensity> for NoiseDensity {
    fn from(t: TabulatedDensity) -> Self {
        NoiseDensity::Tabulated(t)
    }
}

/// CSV of a tabulated density as cells between consecutive nodes, each with
/// its mean interpolated density (mass over area).
pub fn tabulated_to_csv(t: &TabulatedDensity) -> String {
    let dim = t.dim();
    let xs = &t.axes[0];
    let rows: Vec<((f64, f64, f64, f64), f64)> = if dim == 1 {
        (0..xs.len() - 1)
            .map(|i| {
                let d = match t.interpolation {
                    Interpolation::Linear => 0.5 * (t.value_at(&[i]) + t.value_at(&[i + 1])),
                    Interpolation::Nearest => t.density(&[0.5 * (xs[i] + xs[i + 1]), 0.0]),
                };
                ((xs[i], xs[i + 1], 0.0, 0.0), d)
            })
            .collect()
    } else {
        let ys = &t.axes[1];
        let mut rows = Vec::with_capacity((xs.len() - 1) * (ys.len() - 1));
        for i in 0..xs.len() - 1 {
            for j in 0..ys.len() - 1 {
                let d = match t.interpolation {
                    Interpolation::Linear => {
                        0.25 * (t.value_at(&[i, j])
                            + t.value_at(&[i + 1, j])
                            + t.value_at(&[i, j + 1])
                            + t.value_at(&[i + 1, j + 1]))
                    }
                    Interpolation::Nearest => {
                        t.density(&[0.5 * (xs[i] + xs[i + 1]), 0.5 * (ys[j] + ys[j + 1])])
                    }
                };
                rows.push(((xs[i], xs[i + 1], ys[j], ys[j + 1]), d));
            }
        }
        rows
    };
    bins_to_csv(dim, rows.into_iter())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{build_grid, Axis};

    fn uniform8() -> HistogramDensity {
        HistogramDensity::uniform(1, -4.0, 4.0, 8, DEFAULT_FLOOR).unwrap()
    }

    #[test]
    fn parametric_density_value() {
        let n = NoiseDensity::from(ScalarModel::mean(0.0).unwrap());
        let expected = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        assert!((n.density(&[0.0, 0.0]) - expected).abs() < 1e-15);
    }

    #[test]
    fn uniform_histogram_values() {
        let h = uniform8();
        assert!((h.density(&[0.0, 0.0]) - 0.125).abs() < 1e-15);
        assert!((h.density(&[-4.0, 0.0]) - 0.125).abs() < 1e-15);
        assert!((h.density(&[4.0, 0.0]) - 0.125).abs() < 1e-15);
        assert_eq!(h.density(&[4.0001, 0.0]), 0.0);
        assert_eq!(h.density(&[-7.0, 0.0]), 0.0);
        assert_eq!(h.density(&[f64::NAN, 0.0]), 0.0);
    }

    #[test]
    fn inconsistent_lengths_rejected() {
        assert!(HistogramDensity::from_weights(&[0.0, 1.0, 2.0], &[0.0], 1e-8).is_err());
        assert!(HistogramDensity::from_weights(&[0.0, 2.0, 1.0], &[0.0, 0.0], 1e-8).is_err());
        assert!(HistogramDensity::from_weights(&[0.0, 1.0], &[0.0], 0.0).is_err());
        assert!(HistogramDensity::from_weights_2d(&[0.0, 1.0], &[0.0, 1.0, 2.0], &[0.0], 1e-8).is_err());
    }

    #[test]
    fn one_hot_concentrates_up_to_floor() {
        let mut logits = vec![0.0; 8];
        logits[3] = 800.0;
        let h = uniform8().with_logits(&logits).unwrap();
        let p = h.bin_probabilities();
        let floor = DEFAULT_FLOOR;
        let expected_other = floor / (1.0 + 8.0 * floor);
        let expected_hot = (1.0 + floor) / (1.0 + 8.0 * floor);
        for (k, &pk) in p.iter().enumerate() {
            let e = if k == 3 { expected_hot } else { expected_other };
            assert!((pk - e).abs() <= 1e-15 * e.max(1e-300) + 1e-300, "bin {k}: {pk} vs {e}");
        }
        let xs = NoiseDensity::from(h).sample(10_000, 3);
        let in_bin = xs.iter().filter(|x| (-1.0..0.0).contains(&x[0])).count();
        assert!(in_bin >= 9_999);
    }

    #[test]
    fn histogram_normalizes_under_quadrature() {
        let logits: Vec<f64> = (0..8).map(|i| (i as f64 * 0.7).sin() * 3.0).collect();
        let h = uniform8().with_logits(&logits).unwrap();
        let edges = h.x_edges().to_vec();
        let grid = Grid::from_axes(vec![Axis::binned(&edges, 4).unwrap()]).unwrap();
        let total = grid.integrate(|x| h.density(x)).unwrap();
        assert!((total - 1.0).abs() < 1e-12);

        let h2 = HistogramDensity::uniform(2, -1.0, 1.0, 4, 1e-6).unwrap();
        let logits: Vec<f64> = (0..16).map(|i| (i as f64).cos()).collect();
        let h2 = h2.with_logits(&logits).unwrap();
        let e = h2.x_edges().to_vec();
        let ax = Axis::binned(&e, 3).unwrap();
        let grid = Grid::from_axes(vec![ax.clone(), ax]).unwrap();
        let total = grid.integrate(|x| h2.density(x)).unwrap();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn histogram_sampling_goodness_of_fit() {
        let n = 100_000;
        let xs = NoiseDensity::from(uniform8()).sample(n, 17);
        let mut counts = [0usize; 8];
        for x in &xs {
            counts[((x[0] + 4.0) as usize).min(7)] += 1;
        }
        let expected = n as f64 / 8.0;
        let sd = (n as f64 * 0.125 * 0.875).sqrt();
        for c in counts {
            assert!((c as f64 - expected).abs() < 4.0 * sd);
        }

        let logits = [0.0, 1.0, 2.0, 0.5, -1.0, 0.0, 1.5, 0.2];
        let h = uniform8().with_logits(&logits).unwrap();
        let p = h.bin_probabilities().to_vec();
        let xs = NoiseDensity::from(h).sample(n, 18);
        let mut counts = [0usize; 8];
        for x in &xs {
            counts[((x[0] + 4.0) as usize).min(7)] += 1;
        }
        let chi2: f64 = counts
            .iter()
            .zip(&p)
            .map(|(&c, &pk)| {
                let e = pk * n as f64;
                (c as f64 - e).powi(2) / e
            })
            .sum();
        // 7 degrees of freedom; 99.9% quantile is 24.3.
        assert!(chi2 < 24.3, "chi2 = {chi2}");
    }

    #[test]
    fn parametric_sampling_variance() {
        let xs = NoiseDensity::from(ScalarModel::variance(1.0).unwrap()).sample(100_000, 5);
        let v = xs.iter().map(|x| x[0] * x[0]).sum::<f64>() / xs.len() as f64;
        assert!((v - 1.0).abs() < 0.05);
    }

    #[test]
    fn csv_round_trip_preserves_density() {
        let logits = [0.0, 1.0, 2.0, 0.5, -1.0, 0.0, 1.5, 0.2];
        let h = uniform8().with_logits(&logits).unwrap();
        let back = HistogramDensity::from_csv(&h.to_csv(), DEFAULT_FLOOR).unwrap();
        for k in 0..8 {
            let x = [-3.5 + k as f64, 0.0];
            assert!((back.density(&x) - h.density(&x)).abs() < 1e-7 * h.density(&x));
        }
        let h2 = HistogramDensity::uniform(2, -1.0, 1.0, 3, DEFAULT_FLOOR).unwrap();
        let csv = h2.to_csv();
        assert!(csv.starts_with("x_lo,x_hi,y_lo,y_hi,density\n"));
        let back = HistogramDensity::from_csv(&csv, DEFAULT_FLOOR).unwrap();
        assert_eq!(back.len(), 9);
    }

    #[test]
    fn tabulated_linear_interpolates_and_normalizes() {
        let grid = build_grid(1, -1.0, 1.0, 5).unwrap();
        let vals = vec![0.0, 1.0, 2.0, 1.0, 0.0];
        let t = TabulatedDensity::from_grid(&grid, vals, Interpolation::Linear).unwrap();
        // Trapezoid mass of the raw values is 2 -> values halved.
        assert!((t.density(&[0.0, 0.0]) - 1.0).abs() < 1e-15);
        assert!((t.density(&[0.25, 0.0]) - 0.75).abs() < 1e-15);
        assert_eq!(t.density(&[1.5, 0.0]), 0.0);
        let fine = build_grid(1, -1.0, 1.0, 401).unwrap();
        let mass = fine.integrate(|x| t.density(x)).unwrap();
        assert!((mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tabulated_sampling_matches_density() {
        let grid = build_grid(1, -2.0, 2.0, 9).unwrap();
        let vals: Vec<f64> = grid.nodes().iter().map(|x| x[0].abs()).collect();
        let t = TabulatedDensity::from_grid(&grid, vals, Interpolation::Linear).unwrap();
        let noise = NoiseDensity::from(t.clone());
        let n = 200_000;
        let xs = noise.sample(n, 2);
        // Mass of [1, 2] under the interpolant |x|/4 is 3/8.
        let frac = xs.iter().filter(|x| x[0] >= 1.0).count() as f64 / n as f64;
        assert!((frac - 0.375).abs() < 4.0 * (0.375f64 * 0.625 / n as f64).sqrt());

        let g2 = build_grid(2, -1.0, 1.0, 5).unwrap();
        let vals: Vec<f64> = g2.nodes().iter().map(|x| 1.0 + x[0]).collect();
        let t2 = TabulatedDensity::from_grid(&g2, vals, Interpolation::Nearest).unwrap();
        let xs = NoiseDensity::from(t2).sample(50_000, 4);
        assert!(xs.iter().all(|x| x[0].abs() <= 1.0 && x[1].abs() <= 1.0));
        let mean_x = xs.iter().map(|x| x[0]).sum::<f64>() / xs.len() as f64;
        assert!(mean_x > 0.2);
    }

    #[test]
    fn tabulated_csv_cells_carry_mass() {
        let grid = build_grid(1, 0.0, 1.0, 3).unwrap();
        let t = TabulatedDensity::from_grid(&grid, vec![1.0, 1.0, 1.0], Interpolation::Linear).unwrap();
        let csv = tabulated_to_csv(&t);
        assert_eq!(csv, "bin_lo,bin_hi,density\n0,0.5,1\n0.5,1,1\n");
    }
}
