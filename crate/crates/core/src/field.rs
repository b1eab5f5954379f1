use serde::{Deserialize, Serialize};

use crate::grid::Grid;

/// Scalar field indexed by grid node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueField(pub Vec<f64>);

impl ValueField {
    pub fn constant(n: usize, v: f64) -> Self {
        Self(vec![v; n])
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(&[f64]) -> f64) -> Self {
        Self((0..grid.len()).map(|i| f(grid.point(i))).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_over(&self, nodes: &[usize]) -> f64 {
        nodes.iter().map(|&i| self.0[i]).fold(f64::INFINITY, f64::min)
    }

    pub fn max_over(&self, nodes: &[usize]) -> f64 {
        nodes.iter().map(|&i| self.0[i]).fold(f64::NEG_INFINITY, f64::max)
    }

    /// `sup |self - other|` over `nodes`, with the maximizing node.
    pub fn sup_diff(&self, other: &ValueField, nodes: &[usize]) -> (f64, Option<usize>) {
        let mut best = (0.0, None);
        for &i in nodes {
            let d = (self.0[i] - other.0[i]).abs();
            if best.1.is_none() || d > best.0 {
                best = (d, Some(i));
            }
        }
        best
    }

    pub fn shifted(&self, c: f64) -> Self {
        Self(self.0.iter().map(|v| v + c).collect())
    }
}

impl std::ops::Index<usize> for ValueField {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}
