//! Composite trapezoid quadrature on uniform 1-D grids and their 2-D tensor
//! products.
//!
//! Sums are accumulated with Neumaier compensation in a fixed order, so
//! results do not depend on how the integrand evaluations were scheduled.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::models::{Point, ScalarModel};

/// Default nodes per axis for one-dimensional models.
pub const DEFAULT_NODES_1D: usize = 2001;
/// Default nodes per axis for two-dimensional models.
pub const DEFAULT_NODES_2D: usize = 201;
/// Default half-width of the integration box, in data standard deviations.
pub const DEFAULT_HALF_WIDTH: f64 = 8.0;

/// Nodes and trapezoid weights along one axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Axis {
    /// Uniform composite trapezoid rule with `n` nodes on `[lo, hi]`.
    pub fn uniform(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Construction(format!("invalid bounds [{lo}, {hi}]")));
        }
        if n < 3 || n % 2 == 0 {
            return Err(Error::Construction(format!(
                "node count must be odd and at least 3, got {n}"
            )));
        }
        let h = (hi - lo) / (n - 1) as f64;
        let centre = 0.5 * (lo + hi);
        let mid = ((n - 1) / 2) as f64;
        // Offsets from the centre keep symmetric boxes exactly symmetric.
        let nodes: Vec<f64> = (0..n)
            .map(|i| match i {
                0 => lo,
                i if i == n - 1 => hi,
                i => centre + h * (i as f64 - mid),
            })
            .collect();
        let mut weights = vec![h; n];
        weights[0] = 0.5 * h;
        weights[n - 1] = 0.5 * h;
        Ok(Self { nodes, weights })
    }

    /// Trapezoid rule applied separately inside every bin of `edges`, with
    /// `per_bin` sub-intervals per bin.
    ///
    /// The closing node of each bin is moved one ulp inside the bin so that
    /// piecewise-constant integrands are looked up on the correct side of
    /// every edge. Nodes at interior edges therefore appear twice, once per
    /// adjacent bin.
    pub fn binned(edges: &[f64], per_bin: usize) -> Result<Self> {
        check_edges(edges)?;
        if per_bin == 0 {
            return Err(Error::Construction("per_bin must be positive".into()));
        }
        let mut nodes = Vec::with_capacity((edges.len() - 1) * (per_bin + 1));
        let mut weights = Vec::with_capacity(nodes.capacity());
        for w in edges.windows(2) {
            let (a, b) = (w[0], w[1]);
            let h = (b - a) / per_bin as f64;
            for j in 0..=per_bin {
                let x = if j == per_bin {
                    b.next_down()
                } else {
                    a + h * j as f64
                };
                nodes.push(x);
                weights.push(if j == 0 || j == per_bin { 0.5 * h } else { h });
            }
        }
        Ok(Self { nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn lo(&self) -> f64 {
        self.nodes[0]
    }

    fn hi(&self) -> f64 {
        *self.nodes.last().unwrap()
    }
}

pub(crate) fn check_edges(edges: &[f64]) -> Result<()> {
    if edges.len() < 2 {
        return Err(Error::Construction("need at least two edges".into()));
    }
    if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Construction(
            "edges must be finite and strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Quadrature grid: nodes with positive weights covering a box.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    axes: Vec<Axis>,
    nodes: Vec<Point>,
    weights: Vec<f64>,
}

impl Grid {
    pub fn from_axes(axes: Vec<Axis>) -> Result<Self> {
        let (nodes, weights) = match axes.as_slice() {
            [x] => (
                x.nodes.iter().map(|&v| [v, 0.0]).collect(),
                x.weights.clone(),
            ),
            [x, y] => {
                let mut nodes = Vec::with_capacity(x.len() * y.len());
                let mut weights = Vec::with_capacity(x.len() * y.len());
                for (&xv, &xw) in x.nodes.iter().zip(&x.weights) {
                    for (&yv, &yw) in y.nodes.iter().zip(&y.weights) {
                        nodes.push([xv, yv]);
                        weights.push(xw * yw);
                    }
                }
                (nodes, weights)
            }
            _ => {
                return Err(Error::Construction(format!(
                    "grids must have 1 or 2 axes, got {}",
                    axes.len()
                )))
            }
        };
        Ok(Self {
            axes,
            nodes,
            weights,
        })
    }

    /// Default grid for a data model: centre ± 8 standard deviations,
    /// 2001 nodes in 1-D and 201 per axis in 2-D.
    pub fn for_model(model: &ScalarModel) -> Result<Self> {
        let n = if model.dim() == 1 {
            DEFAULT_NODES_1D
        } else {
            DEFAULT_NODES_2D
        };
        Self::for_model_with(model, n, DEFAULT_HALF_WIDTH)
    }

    pub fn for_model_with(model: &ScalarModel, n_per_axis: usize, half_width: f64) -> Result<Self> {
        let (c, s) = model.location_scale();
        build_grid(
            model.dim(),
            c - half_width * s,
            c + half_width * s,
            n_per_axis,
        )
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Box bounds `(lo, hi)` per axis.
    pub fn range(&self) -> Vec<(f64, f64)> {
        self.axes.iter().map(|a| (a.lo(), a.hi())).collect()
    }

    /// Σ_k w_k f(x_k), with an error naming the first node where f is not finite.
    pub fn integrate<F>(&self, f: F) -> Result<f64>
    where
        F: Fn(&Point) -> f64 + Sync,
    {
        let values = self.evaluate(f);
        self.integrate_values(&values)
    }

    /// Evaluates `f` on every node, in node order.
    pub fn evaluate<F>(&self, f: F) -> Vec<f64>
    where
        F: Fn(&Point) -> f64 + Sync,
    {
        self.nodes.par_iter().with_min_len(1024).map(&f).collect()
    }

    /// Weighted sum of precomputed node values.
    pub fn integrate_values(&self, values: &[f64]) -> Result<f64> {
        debug_assert_eq!(values.len(), self.weights.len());
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "integrand is {} at node {i} ({:?})",
                values[i], self.nodes[i]
            )));
        }
        Ok(weighted_sum(&self.weights, values))
    }
}

/// Composite trapezoid grid on `[lo, hi]^dim` with `n_per_axis` nodes per axis.
pub fn build_grid(dim: usize, lo: f64, hi: f64, n_per_axis: usize) -> Result<Grid> {
    let axis = Axis::uniform(lo, hi, n_per_axis)?;
    match dim {
        1 => Grid::from_axes(vec![axis]),
        2 => Grid::from_axes(vec![axis.clone(), axis]),
        _ => Err(Error::Construction(format!("dimension must be 1 or 2, got {dim}"))),
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry += (self.sum - t) + v;
        } else {
            self.carry += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::default();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<CompensatedSum>().value()
}

/// Σ w_k v_k, folding mirrored pairs `(k, n-1-k)` first so that integrands
/// odd about the centre of a symmetric grid cancel exactly.
pub fn weighted_sum(weights: &[f64], values: &[f64]) -> f64 {
    let n = weights.len().min(values.len());
    let term = |k: usize| weights[k] * values[k];
    let mut acc: CompensatedSum = (0..n / 2).map(|k| term(k) + term(n - 1 - k)).collect();
    if n % 2 == 1 {
        acc.add(term(n / 2));
    }
    acc.value()
}
