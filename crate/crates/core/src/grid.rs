//! Time grids on `[0, 1]` and vector-valued paths sampled on them.

use crate::error::{ensure, ensure_domain, Error, Result};

/// Strictly increasing nodes inside `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    nodes: Vec<f64>,
}

impl TimeGrid {
    pub fn new(nodes: Vec<f64>) -> Result<Self> {
        ensure_domain(!nodes.is_empty(), || "time grid must have at least one node".into())?;
        for &t in &nodes {
            ensure_domain(t.is_finite() && (0.0..=1.0).contains(&t), || {
                format!("grid node {t} outside [0, 1]")
            })?;
        }
        for w in nodes.windows(2) {
            ensure_domain(w[1] > w[0], || {
                format!("grid nodes not strictly increasing at {} -> {}", w[0], w[1])
            })?;
        }
        Ok(Self { nodes })
    }

    /// `steps + 1` equispaced nodes from 0 to 1; the last node is exactly 1.
    pub fn uniform(steps: usize) -> Result<Self> {
        ensure(steps >= 1, || "uniform grid needs at least one step".into())?;
        let n = steps as f64;
        let mut nodes: Vec<f64> = (0..=steps).map(|k| k as f64 / n).collect();
        nodes[steps] = 1.0;
        Ok(Self { nodes })
    }

    /// Merge with extra nodes. Nodes closer than `tol` to an existing node are dropped.
    pub fn union(&self, extra: &[f64], tol: f64) -> Result<Self> {
        let mut all: Vec<f64> = self.nodes.iter().chain(extra.iter()).copied().collect();
        all.sort_by(f64::total_cmp);
        let mut merged: Vec<f64> = Vec::with_capacity(all.len());
        for t in all {
            match merged.last() {
                Some(&last) if t - last <= tol => {}
                _ => merged.push(t),
            }
        }
        Self::new(merged)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn steps(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn first(&self) -> f64 {
        self.nodes[0]
    }

    pub fn last(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    /// Width of step `k`, i.e. `t_{k+1} - t_k`.
    pub fn step(&self, k: usize) -> f64 {
        self.nodes[k + 1] - self.nodes[k]
    }

    pub fn max_step(&self) -> f64 {
        self.nodes.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    /// Index of the node within `tol` of `t`, if any.
    pub fn locate(&self, t: f64, tol: f64) -> Option<usize> {
        let i = self.nodes.partition_point(|&s| s < t);
        [i.checked_sub(1), Some(i)]
            .into_iter()
            .flatten()
            .filter(|&j| j < self.nodes.len())
            .min_by(|&a, &b| (self.nodes[a] - t).abs().total_cmp(&(self.nodes[b] - t).abs()))
            .filter(|&j| (self.nodes[j] - t).abs() <= tol)
    }
}

/// A path with one `d`-vector per grid node, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledPath {
    grid: TimeGrid,
    dim: usize,
    values: Vec<f64>,
}

impl SampledPath {
    pub fn new(grid: TimeGrid, dim: usize, values: Vec<f64>) -> Result<Self> {
        ensure(dim >= 1, || "path dimension must be at least 1".into())?;
        if values.len() != grid.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: grid.len() * dim,
                got: values.len(),
            });
        }
        ensure(values.iter().all(|v| v.is_finite()), || "path values must be finite".into())?;
        Ok(Self { grid, dim, values })
    }

    pub fn zeros(grid: TimeGrid, dim: usize) -> Self {
        let values = vec![0.0; grid.len() * dim];
        Self { grid, dim, values }
    }

    pub fn constant(grid: TimeGrid, value: &[f64]) -> Self {
        let values = value.repeat(grid.len());
        Self { grid, dim: value.len(), values }
    }

    /// Sample `f(t)` at every node.
    pub fn from_fn(grid: TimeGrid, dim: usize, mut f: impl FnMut(f64, &mut [f64])) -> Result<Self> {
        let mut values = vec![0.0; grid.len() * dim];
        for (k, &t) in grid.nodes().iter().enumerate() {
            f(t, &mut values[k * dim..(k + 1) * dim]);
        }
        Self::new(grid, dim, values)
    }

    /// Scalar path from one value per node.
    pub fn scalar(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        Self::new(grid, 1, values)
    }

    pub(crate) fn from_parts_unchecked(grid: TimeGrid, dim: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len() * dim);
        Self { grid, dim, values }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn at(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn at_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim)
    }

    /// Euclidean norm at node `k`.
    pub fn norm_at(&self, k: usize) -> f64 {
        norm(self.at(k))
    }

    /// `max_k |f(t_k)|`.
    pub fn sup_norm(&self) -> f64 {
        (0..self.len()).map(|k| self.norm_at(k)).fold(0.0, f64::max)
    }

    /// Node-wise sum with another path on the same grid.
    pub fn add(&self, other: &SampledPath) -> Result<SampledPath> {
        self.check_aligned(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Ok(Self::from_parts_unchecked(self.grid.clone(), self.dim, values))
    }

    /// Adds the constant vector `c` at every node.
    pub fn add_constant(&self, c: &[f64]) -> Result<SampledPath> {
        if c.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: c.len() });
        }
        let mut out = self.clone();
        for row in out.values.chunks_exact_mut(self.dim) {
            row.iter_mut().zip(c).for_each(|(v, ci)| *v += ci);
        }
        Ok(out)
    }

    pub fn scale(&self, s: f64) -> SampledPath {
        let values = self.values.iter().map(|v| v * s).collect();
        Self::from_parts_unchecked(self.grid.clone(), self.dim, values)
    }

    pub fn check_aligned(&self, other: &SampledPath) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: other.dim });
        }
        ensure_domain(self.grid == other.grid, || "paths live on different grids".into())
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_grid_hits_endpoints() {
        let g = TimeGrid::uniform(7).unwrap();
        assert_eq!(g.len(), 8);
        assert_eq!(g.first(), 0.0);
        assert_eq!(g.last(), 1.0);
        assert!((g.max_step() - 1.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(TimeGrid::new(vec![]).is_err());
        assert!(TimeGrid::new(vec![0.0, 0.5, 0.5, 1.0]).is_err());
        assert!(TimeGrid::new(vec![0.0, 1.5]).is_err());
        assert!(TimeGrid::new(vec![-0.1, 1.0]).is_err());
    }

    #[test]
    fn union_and_locate() {
        let g = TimeGrid::uniform(4).unwrap();
        let u = g.union(&[0.3, 0.5 + 1e-16, 0.9], 1e-14).unwrap();
        assert_eq!(u.nodes(), &[0.0, 0.25, 0.3, 0.5, 0.75, 0.9, 1.0]);
        assert_eq!(u.locate(0.3, 1e-12), Some(2));
        assert_eq!(u.locate(0.31, 1e-12), None);
        assert_eq!(u.locate(1.0, 0.0), Some(6));
        assert_eq!(u.locate(0.0, 0.0), Some(0));
    }

    #[test]
    fn path_shape_is_checked() {
        let g = TimeGrid::uniform(2).unwrap();
        assert!(SampledPath::new(g.clone(), 2, vec![0.0; 5]).is_err());
        assert!(SampledPath::new(g.clone(), 1, vec![0.0, f64::NAN, 1.0]).is_err());
        let p = SampledPath::new(g, 2, vec![3.0, 4.0, 0.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(p.sup_norm(), 5.0);
        assert_eq!(p.at(2), &[1.0, 0.0]);
    }
}
