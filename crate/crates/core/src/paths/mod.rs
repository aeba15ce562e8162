//! Uniform-grid paths with piecewise-linear interpolation semantics, and the
//! path statistics built on them.
//!
//! Every continuous-time quantity in this module (variation norms, stopping
//! times, running extrema) is evaluated on the linear interpolation of the
//! node values, so results are exact for the interpolated path rather than
//! approximations of some underlying continuous one.

mod control;
pub mod io;
mod oscillation;
mod variation;

pub use control::Control;
pub use oscillation::{oscillation_count, Oscillation};
pub use variation::{holder_norm, p_variation, p_variation_power, prune_to_extrema};

use crate::error::{invalid, Error, Result};

/// How increments of a multi-dimensional path are measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IncrementNorm {
    /// Euclidean norm of the increment vector.
    #[default]
    Euclidean,
    /// Absolute increment of a single coordinate.
    Component(usize),
}

/// A `d`-dimensional path sampled at `t0 + i·dt`, `i = 0..len`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPath {
    t0: f64,
    dt: f64,
    dim: usize,
    /// Row-major node values, `len * dim` entries.
    values: Vec<f64>,
}

impl GridPath {
    /// Builds a path from row-major node values.
    pub fn new(t0: f64, dt: f64, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("path dimension must be at least 1"));
        }
        if !(dt > 0.0) || !dt.is_finite() || !t0.is_finite() {
            return Err(invalid(format!("grid needs finite t0 and dt > 0 (got t0={t0}, dt={dt})")));
        }
        if !values.len().is_multiple_of(dim) {
            return Err(Error::InvalidInput(format!(
                "{} values do not split into points of dimension {dim}",
                values.len()
            )));
        }
        if values.len() / dim < 2 {
            return Err(Error::InvalidInput("a path needs at least two nodes".into()));
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite value at node {}", bad / dim)));
        }
        Ok(Self { t0, dt, dim, values })
    }

    pub fn from_scalar(t0: f64, dt: f64, values: Vec<f64>) -> Result<Self> {
        Self::new(t0, dt, 1, values)
    }

    pub fn from_points(t0: f64, dt: f64, points: &[Vec<f64>]) -> Result<Self> {
        let dim = points.first().map_or(0, Vec::len);
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::InvalidInput("points have inconsistent dimensions".into()));
        }
        Self::new(t0, dt, dim, points.concat())
    }

    /// Samples a scalar function on `steps + 1` uniform nodes of `[t0, t1]`.
    pub fn from_fn(t0: f64, t1: f64, steps: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        if steps == 0 || !(t1 > t0) {
            return Err(invalid("from_fn needs t1 > t0 and at least one step"));
        }
        let dt = (t1 - t0) / steps as f64;
        let values = (0..=steps).map(|i| f(t0 + i as f64 * dt)).collect();
        Self::from_scalar(t0, dt, values)
    }

    /// Constant path equal to `point` on `len` nodes.
    pub fn constant(t0: f64, dt: f64, len: usize, point: &[f64]) -> Result<Self> {
        let values = point.iter().copied().cycle().take(len * point.len()).collect();
        Self::new(t0, dt, point.len(), values)
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of nodes.
    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn steps(&self) -> usize {
        self.len() - 1
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    /// Time of the last node.
    pub fn horizon(&self) -> f64 {
        self.time(self.len() - 1)
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn value(&self, i: usize, component: usize) -> f64 {
        self.values[i * self.dim + component]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Node values of one coordinate.
    pub fn component_values(&self, component: usize) -> Vec<f64> {
        self.values.iter().skip(component).step_by(self.dim).copied().collect()
    }

    pub fn component(&self, component: usize) -> Result<GridPath> {
        if component >= self.dim {
            return Err(invalid(format!("component {component} out of range for dimension {}", self.dim)));
        }
        GridPath::from_scalar(self.t0, self.dt, self.component_values(component))
    }

    /// Reassembles a path from per-coordinate node sequences of equal length.
    pub fn from_components(t0: f64, dt: f64, components: &[Vec<f64>]) -> Result<Self> {
        let dim = components.len();
        let len = components.first().map_or(0, Vec::len);
        if components.iter().any(|c| c.len() != len) {
            return Err(Error::InvalidInput("components have different lengths".into()));
        }
        let mut values = Vec::with_capacity(dim * len);
        for i in 0..len {
            values.extend(components.iter().map(|c| c[i]));
        }
        Self::new(t0, dt, dim, values)
    }

    /// Same time grid and dimension.
    pub fn same_grid(&self, other: &GridPath) -> bool {
        self.len() == other.len() && self.dim == other.dim && self.t0 == other.t0 && self.dt == other.dt
    }

    fn check_grid(&self, other: &GridPath) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::InvalidInput("paths do not share a grid".into()))
        }
    }

    pub fn zip_with(&self, other: &GridPath, f: impl Fn(f64, f64) -> f64) -> Result<GridPath> {
        self.check_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        GridPath::new(self.t0, self.dt, self.dim, values)
    }

    pub fn add(&self, other: &GridPath) -> Result<GridPath> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &GridPath) -> Result<GridPath> {
        self.zip_with(other, |a, b| a - b)
    }

    /// Adds the same vector to every node.
    pub fn shift(&self, offset: &[f64]) -> GridPath {
        assert_eq!(offset.len(), self.dim, "offset dimension mismatch");
        let mut values = self.values.clone();
        for row in values.chunks_mut(self.dim) {
            for (v, o) in row.iter_mut().zip(offset) {
                *v += o;
            }
        }
        GridPath { values, ..*self }
    }

    pub fn scale(&self, factor: f64) -> GridPath {
        GridPath { values: self.values.iter().map(|v| v * factor).collect(), ..*self }
    }

    /// Applies `f` to every node value, keeping the grid.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridPath {
        GridPath { values: self.values.iter().map(|&v| f(v)).collect(), ..*self }
    }

    /// Keeps every `stride`-th node; the last node must land on the stride.
    pub fn subsample(&self, stride: usize) -> Result<GridPath> {
        if stride == 0 || !self.steps().is_multiple_of(stride) {
            return Err(invalid(format!("stride {stride} does not divide {} steps", self.steps())));
        }
        let values = (0..self.len()).step_by(stride).flat_map(|i| self.point(i).iter().copied()).collect();
        GridPath::new(self.t0, self.dt * stride as f64, self.dim, values)
    }

    /// Sup-norm distance between two paths on the same grid.
    pub fn sup_distance(&self, other: &GridPath) -> Result<f64> {
        self.check_grid(other)?;
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Full index window `(0, len - 1)`.
    pub fn full_window(&self) -> (usize, usize) {
        (0, self.len() - 1)
    }

    pub(crate) fn check_window(&self, window: (usize, usize)) -> Result<()> {
        let (start, end) = window;
        if start > end || end >= self.len() {
            return Err(Error::InvalidWindow { start, end, len: self.len() });
        }
        Ok(())
    }

    /// Length of the increment between nodes `i` and `j` under `norm`.
    pub fn increment(&self, i: usize, j: usize, norm: IncrementNorm) -> f64 {
        match norm {
            IncrementNorm::Component(c) => (self.value(j, c) - self.value(i, c)).abs(),
            IncrementNorm::Euclidean if self.dim == 1 => (self.values[j] - self.values[i]).abs(),
            IncrementNorm::Euclidean => {
                self.point(i).iter().zip(self.point(j)).map(|(a, b)| (b - a) * (b - a)).sum::<f64>().sqrt()
            }
        }
    }
}

/// Componentwise running maximum `sup_{s ≤ t} x(s)` at the nodes.
pub fn running_max(path: &GridPath) -> GridPath {
    running_extremum(path, f64::max)
}

/// Componentwise running minimum `inf_{s ≤ t} x(s)` at the nodes.
pub fn running_min(path: &GridPath) -> GridPath {
    running_extremum(path, f64::min)
}

fn running_extremum(path: &GridPath, pick: fn(f64, f64) -> f64) -> GridPath {
    let dim = path.dim;
    let mut values = path.values.clone();
    for i in 1..path.len() {
        for c in 0..dim {
            values[i * dim + c] = pick(values[(i - 1) * dim + c], values[i * dim + c]);
        }
    }
    GridPath { values, ..*path }
}

/// Running maximum of a scalar sequence.
pub(crate) fn prefix_max(xs: &[f64]) -> Vec<f64> {
    xs.iter()
        .scan(f64::NEG_INFINITY, |m, &x| {
            *m = m.max(x);
            Some(*m)
        })
        .collect()
}

/// Running minimum of a scalar sequence.
pub(crate) fn prefix_min(xs: &[f64]) -> Vec<f64> {
    xs.iter()
        .scan(f64::INFINITY, |m, &x| {
            *m = m.min(x);
            Some(*m)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_degenerate_paths() {
        assert!(GridPath::from_scalar(0.0, 1.0, vec![1.0]).is_err());
        assert!(GridPath::from_scalar(0.0, 0.0, vec![1.0, 2.0]).is_err());
        assert!(GridPath::from_scalar(0.0, 1.0, vec![1.0, f64::NAN]).is_err());
        assert!(GridPath::new(0.0, 1.0, 2, vec![1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn running_extrema_examples() {
        let p = GridPath::from_scalar(0.0, 1.0, vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(running_max(&p).values(), &[0.0, 1.0, 1.0]);
        let p = GridPath::from_scalar(0.0, 1.0, vec![0.0, -1.0, -2.0]).unwrap();
        assert_eq!(running_min(&p).values(), &[0.0, -1.0, -2.0]);
        let mono = GridPath::from_fn(0.0, 1.0, 10, |t| t * t).unwrap();
        assert_eq!(running_max(&mono), mono);
    }

    #[test]
    fn running_extrema_are_componentwise() {
        let p = GridPath::from_points(0.0, 1.0, &[vec![0.0, 0.0], vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap();
        assert_eq!(running_max(&p).values(), &[0.0, 0.0, 1.0, 0.0, 1.0, 1.0]);
        assert_eq!(running_min(&p).values(), &[0.0, 0.0, 0.0, -1.0, -1.0, -1.0]);
    }

    #[test]
    fn components_round_trip() {
        let p = GridPath::from_points(0.5, 0.25, &[vec![0.0, 1.0], vec![2.0, 3.0], vec![4.0, 5.0]]).unwrap();
        let comps = [p.component_values(0), p.component_values(1)];
        assert_eq!(comps[1], vec![1.0, 3.0, 5.0]);
        assert_eq!(GridPath::from_components(0.5, 0.25, &comps).unwrap(), p);
    }

    #[test]
    fn subsample_keeps_endpoints() {
        let p = GridPath::from_fn(0.0, 1.0, 8, |t| t).unwrap();
        let q = p.subsample(4).unwrap();
        assert_eq!(q.values(), &[0.0, 0.5, 1.0]);
        assert_eq!(q.dt(), 0.5);
        assert!(p.subsample(3).is_err());
    }
}
