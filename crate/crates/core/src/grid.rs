//! Box discretization, finite velocity sets and semi-Lagrangian foot-point transitions.
//!
//! Nodes are numbered lexicographically with the last axis varying fastest. A transition
//! `(i, q)` moves from node `x_i` to the foot point `x_i + h q`; the foot point is clipped to
//! the box (state constraint) and expressed as a multilinear combination of the corners of its
//! enclosing cell.

use serde::{Deserialize, Serialize};
use thiserror::Error;

const SNAP: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("degenerate box: axis {axis} has {nodes} nodes (at least 4 required)")]
    DegenerateBox { axis: usize, nodes: usize },
    #[error("axis {axis}: box length {length} is not an integer multiple of h = {h}")]
    NonIntegralSpacing { axis: usize, length: f64, h: f64 },
    #[error("invalid box: {0}")]
    InvalidBox(String),
    #[error("invalid velocity set: {0}")]
    InvalidVelocities(String),
}

/// Axis-aligned box `[lo, hi]` in `R^N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, GridError> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(GridError::InvalidBox(format!(
                "lo has {} entries, hi has {}",
                lo.len(),
                hi.len()
            )));
        }
        for (a, (l, h)) in lo.iter().zip(&hi).enumerate() {
            if !(l.is_finite() && h.is_finite() && l < h) {
                return Err(GridError::InvalidBox(format!("axis {a}: [{l}, {h}] is empty")));
            }
        }
        Ok(Self { lo, hi })
    }

    /// Symmetric box `[-r, r]^dim`.
    pub fn centered(dim: usize, r: f64) -> Self {
        Self { lo: vec![-r; dim], hi: vec![r; dim] }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (l + h)).collect()
    }

    pub fn half_widths(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (h - l)).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (l, h))| *v >= l - 1e-12 && *v <= h + 1e-12)
    }

    /// Same center, half-widths multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let c = self.center();
        let w = self.half_widths();
        Self {
            lo: c.iter().zip(&w).map(|(c, w)| c - factor * w).collect(),
            hi: c.iter().zip(&w).map(|(c, w)| c + factor * w).collect(),
        }
    }

    /// Normalized sup-distance from the center: 0 at the center, 1 on the boundary.
    pub fn relative_radius(&self, x: &[f64]) -> f64 {
        let c = self.center();
        let w = self.half_widths();
        x.iter()
            .zip(c.iter().zip(&w))
            .map(|(v, (c, w))| (v - c).abs() / w)
            .fold(0.0, f64::max)
    }

    /// True when `x` lies in the outer shell of relative thickness `frac`.
    pub fn in_outer_shell(&self, x: &[f64], frac: f64) -> bool {
        self.relative_radius(x) >= 1.0 - frac - 1e-12
    }

    /// `per_axis^N` lattice points including the corners.
    pub fn lattice(&self, per_axis: usize) -> Vec<Vec<f64>> {
        let per_axis = per_axis.max(2);
        let dim = self.dim();
        let total = per_axis.pow(dim as u32);
        let mut out = Vec::with_capacity(total);
        for flat in 0..total {
            let mut rem = flat;
            let mut p = vec![0.0; dim];
            for a in (0..dim).rev() {
                let k = rem % per_axis;
                rem /= per_axis;
                let t = k as f64 / (per_axis - 1) as f64;
                p[a] = self.lo[a] + t * (self.hi[a] - self.lo[a]);
            }
            out.push(p);
        }
        out
    }
}

/// Uniform grid on a box.
#[derive(Debug, Clone)]
pub struct Grid {
    domain: BoxDomain,
    h: f64,
    counts: Vec<usize>,
    strides: Vec<usize>,
    coords: Vec<f64>,
}

impl Grid {
    pub fn new(domain: BoxDomain, h: f64) -> Result<Self, GridError> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(GridError::InvalidBox(format!("h must be positive, got {h}")));
        }
        let dim = domain.dim();
        let mut counts = Vec::with_capacity(dim);
        for a in 0..dim {
            let length = domain.hi[a] - domain.lo[a];
            let cells = length / h;
            let rounded = cells.round();
            if (cells - rounded).abs() > SNAP * rounded.max(1.0) {
                return Err(GridError::NonIntegralSpacing { axis: a, length, h });
            }
            let nodes = rounded as usize + 1;
            if nodes < 4 {
                return Err(GridError::DegenerateBox { axis: a, nodes });
            }
            counts.push(nodes);
        }
        let mut strides = vec![1; dim];
        for a in (0..dim.saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * counts[a + 1];
        }
        let len: usize = counts.iter().product();
        let mut coords = vec![0.0; len * dim];
        for i in 0..len {
            let mut rem = i;
            for a in (0..dim).rev() {
                let k = rem % counts[a];
                rem /= counts[a];
                coords[i * dim + a] = domain.lo[a] + k as f64 * h;
            }
        }
        Ok(Self { domain, h, counts, strides, coords })
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn point(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.coords[i * d..(i + 1) * d]
    }

    pub fn multi_index(&self, i: usize) -> Vec<usize> {
        self.strides
            .iter()
            .zip(&self.counts)
            .map(|(s, n)| (i / s) % n)
            .collect()
    }

    pub fn index(&self, multi: &[usize]) -> usize {
        multi.iter().zip(&self.strides).map(|(k, s)| k * s).sum()
    }

    /// Nearest node to `x`, clamped to the box.
    pub fn nearest_node(&self, x: &[f64]) -> usize {
        let multi: Vec<usize> = (0..self.dim())
            .map(|a| {
                let t = ((x[a] - self.domain.lo[a]) / self.h).round();
                t.clamp(0.0, (self.counts[a] - 1) as f64) as usize
            })
            .collect();
        self.index(&multi)
    }

    pub fn is_boundary(&self, i: usize) -> bool {
        self.multi_index(i)
            .iter()
            .zip(&self.counts)
            .any(|(k, n)| *k == 0 || *k == n - 1)
    }

    pub fn boundary_mask(&self) -> Vec<bool> {
        (0..self.len()).map(|i| self.is_boundary(i)).collect()
    }

    /// Nodes lying in `sub` (closed box).
    pub fn nodes_in(&self, sub: &BoxDomain) -> Vec<usize> {
        (0..self.len()).filter(|&i| sub.contains(self.point(i))).collect()
    }

    /// Axis neighbours of node `i` (at most `2N`).
    pub fn axis_neighbors(&self, i: usize) -> Vec<usize> {
        let m = self.multi_index(i);
        let mut out = Vec::with_capacity(2 * self.dim());
        for a in 0..self.dim() {
            if m[a] > 0 {
                out.push(i - self.strides[a]);
            }
            if m[a] + 1 < self.counts[a] {
                out.push(i + self.strides[a]);
            }
        }
        out
    }

    /// Multilinear interpolation stencil of `x` after clipping to the box. Returns the
    /// nonzero weights (renormalized to sum to one) and whether clipping occurred.
    pub fn stencil(&self, x: &[f64]) -> (Vec<(usize, f64)>, bool) {
        let dim = self.dim();
        let mut clipped = false;
        let mut axis_parts: Vec<[(usize, f64); 2]> = Vec::with_capacity(dim);
        let mut axis_len: Vec<usize> = Vec::with_capacity(dim);
        for a in 0..dim {
            let (lo, hi) = (self.domain.lo[a], self.domain.hi[a]);
            let mut v = x[a];
            if v < lo - SNAP * self.h || v > hi + SNAP * self.h {
                clipped = true;
            }
            v = v.clamp(lo, hi);
            let t = (v - lo) / self.h;
            let mut k = t.floor();
            let mut frac = t - k;
            if frac < SNAP {
                frac = 0.0;
            } else if frac > 1.0 - SNAP {
                frac = 0.0;
                k += 1.0;
            }
            let n = self.counts[a];
            let mut k = (k.max(0.0) as usize).min(n - 1);
            if k == n - 1 && frac > 0.0 {
                k = n - 2;
                frac = 1.0;
            }
            if frac == 0.0 {
                axis_parts.push([(k, 1.0), (k, 0.0)]);
                axis_len.push(1);
            } else {
                axis_parts.push([(k, 1.0 - frac), (k + 1, frac)]);
                axis_len.push(2);
            }
        }
        let total: usize = axis_len.iter().product();
        let mut out = Vec::with_capacity(total);
        for flat in 0..total {
            let mut rem = flat;
            let mut idx = 0;
            let mut w = 1.0;
            for a in (0..dim).rev() {
                let c = rem % axis_len[a];
                rem /= axis_len[a];
                let (k, wa) = axis_parts[a][c];
                idx += k * self.strides[a];
                w *= wa;
            }
            if w > 0.0 {
                out.push((idx, w));
            }
        }
        let s: f64 = out.iter().map(|e| e.1).sum();
        for e in &mut out {
            e.1 /= s;
        }
        (out, clipped)
    }

    pub fn interpolate(&self, values: &[f64], x: &[f64]) -> f64 {
        let (st, _) = self.stencil(x);
        st.iter().map(|(j, w)| w * values[*j]).sum()
    }
}

/// Finite symmetric velocity set containing 0: the tensor product of a symmetric per-axis
/// set `{-q_max, ..., 0, ..., q_max}` with an odd number of entries.
#[derive(Debug, Clone)]
pub struct VelocitySet {
    dim: usize,
    q_max: f64,
    vectors: Vec<f64>,
    zero: usize,
    negate: Vec<usize>,
}

impl VelocitySet {
    pub fn new(q_max: f64, per_axis_count: usize, dim: usize) -> Result<Self, GridError> {
        if per_axis_count.is_multiple_of(2) {
            return Err(GridError::InvalidVelocities(format!(
                "per-axis count must be odd so that 0 belongs to the set, got {per_axis_count}"
            )));
        }
        if !(q_max > 0.0 && q_max.is_finite()) {
            return Err(GridError::InvalidVelocities(format!("q_max must be positive, got {q_max}")));
        }
        if dim == 0 {
            return Err(GridError::InvalidVelocities("dimension must be positive".into()));
        }
        let half = (per_axis_count / 2) as i64;
        let axis: Vec<f64> = (-half..=half)
            .map(|k| if half == 0 { 0.0 } else { q_max * k as f64 / half as f64 })
            .collect();
        let total = per_axis_count.pow(dim as u32);
        let mut vectors = vec![0.0; total * dim];
        for flat in 0..total {
            let mut rem = flat;
            for a in (0..dim).rev() {
                vectors[flat * dim + a] = axis[rem % per_axis_count];
                rem /= per_axis_count;
            }
        }
        // Lexicographic order over a symmetric axis makes negation the index reversal.
        let negate = (0..total).rev().collect();
        Ok(Self { dim, q_max, vectors, zero: total / 2, negate })
    }

    pub fn len(&self) -> usize {
        self.vectors.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn q_max(&self) -> f64 {
        self.q_max
    }

    pub fn get(&self, k: usize) -> &[f64] {
        &self.vectors[k * self.dim..(k + 1) * self.dim]
    }

    pub fn zero_index(&self) -> usize {
        self.zero
    }

    pub fn negate(&self, k: usize) -> usize {
        self.negate[k]
    }

    pub fn norm(&self, k: usize) -> f64 {
        self.get(k).iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Foot points and interpolation weights for every `(node, velocity)` pair.
#[derive(Debug, Clone)]
pub struct Transition {
    n_vel: usize,
    offsets: Vec<usize>,
    entries: Vec<(usize, f64)>,
    clipped: Vec<bool>,
}

impl Transition {
    pub fn build(grid: &Grid, velocities: &VelocitySet) -> Self {
        assert_eq!(grid.dim(), velocities.dim(), "grid and velocity set dimensions differ");
        if velocities.q_max() > 1.0 + 1e-12 {
            log::warn!(
                "q_max = {} moves foot points more than one cell per step",
                velocities.q_max()
            );
        }
        let n = grid.len();
        let nq = velocities.len();
        let h = grid.h();
        let mut offsets = Vec::with_capacity(n * nq + 1);
        let mut entries = Vec::new();
        let mut clipped = Vec::with_capacity(n * nq);
        offsets.push(0);
        let mut foot = vec![0.0; grid.dim()];
        for i in 0..n {
            let x = grid.point(i);
            for k in 0..nq {
                let q = velocities.get(k);
                for a in 0..grid.dim() {
                    foot[a] = x[a] + h * q[a];
                }
                let (st, c) = grid.stencil(&foot);
                entries.extend(st);
                clipped.push(c);
                offsets.push(entries.len());
            }
        }
        Self { n_vel: nq, offsets, entries, clipped }
    }

    /// Stencil of the forward foot point `x_i + h q_k`.
    pub fn entries(&self, i: usize, k: usize) -> &[(usize, f64)] {
        let s = i * self.n_vel + k;
        &self.entries[self.offsets[s]..self.offsets[s + 1]]
    }

    pub fn is_clipped(&self, i: usize, k: usize) -> bool {
        self.clipped[i * self.n_vel + k]
    }

    /// Weight of node `j` in the stencil of `(i, k)`.
    pub fn weight(&self, i: usize, k: usize, j: usize) -> f64 {
        self.entries(i, k).iter().filter(|e| e.0 == j).map(|e| e.1).sum()
    }

    pub fn n_velocities(&self) -> usize {
        self.n_vel
    }
}

/// Grid, velocity set and transition structure built once and shared read-only.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub grid: Grid,
    pub velocities: VelocitySet,
    pub transition: Transition,
}

impl Discretization {
    pub fn new(grid: Grid, velocities: VelocitySet) -> Self {
        let transition = Transition::build(&grid, &velocities);
        Self { grid, velocities, transition }
    }

    pub fn build(
        domain: BoxDomain,
        h: f64,
        q_max: f64,
        per_axis_count: usize,
    ) -> Result<Self, GridError> {
        let dim = domain.dim();
        let grid = Grid::new(domain, h)?;
        let velocities = VelocitySet::new(q_max, per_axis_count, dim)?;
        Ok(Self::new(grid, velocities))
    }

    /// Stencil of the backward foot point `x_i - h q_k`: where a trajectory arriving at `x_i`
    /// with velocity `q_k` was one step earlier.
    pub fn backward(&self, i: usize, k: usize) -> &[(usize, f64)] {
        self.transition.entries(i, self.velocities.negate(k))
    }

    pub fn backward_clipped(&self, i: usize, k: usize) -> bool {
        self.transition.is_clipped(i, self.velocities.negate(k))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(lo: f64, hi: f64, h: f64) -> Grid {
        Grid::new(BoxDomain::new(vec![lo], vec![hi]).unwrap(), h).unwrap()
    }

    #[test]
    fn five_nodes_on_unit_box() {
        let g = line(-1.0, 1.0, 0.5);
        let xs: Vec<f64> = (0..g.len()).map(|i| g.point(i)[0]).collect();
        assert_eq!(xs, vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
    }

    #[test]
    fn three_velocities() {
        let v = VelocitySet::new(1.0, 3, 1).unwrap();
        let qs: Vec<f64> = (0..v.len()).map(|k| v.get(k)[0]).collect();
        assert_eq!(qs, vec![-1.0, 0.0, 1.0]);
        assert_eq!(v.zero_index(), 1);
        assert_eq!(v.negate(0), 2);
    }

    #[test]
    fn exact_node_hit() {
        let d = Discretization::build(BoxDomain::new(vec![-1.0], vec![1.0]).unwrap(), 0.5, 1.0, 3)
            .unwrap();
        assert_eq!(d.grid.point(2), &[0.0]);
        assert_eq!(d.velocities.get(2), &[1.0]);
        assert_eq!(d.transition.entries(2, 2), &[(3, 1.0)]);
        assert!(!d.transition.is_clipped(2, 2));
        assert_eq!(d.backward(2, 2), &[(1, 1.0)]);
    }

    #[test]
    fn degenerate_box() {
        let err = Grid::new(BoxDomain::new(vec![0.0], vec![1.0]).unwrap(), 0.5).unwrap_err();
        assert_eq!(err, GridError::DegenerateBox { axis: 0, nodes: 3 });
    }

    #[test]
    fn non_integral_spacing() {
        assert!(matches!(
            Grid::new(BoxDomain::new(vec![0.0], vec![1.0]).unwrap(), 0.3),
            Err(GridError::NonIntegralSpacing { .. })
        ));
    }

    #[test]
    fn clipping_flags_foot_outside() {
        let d = Discretization::build(BoxDomain::new(vec![-1.0], vec![1.0]).unwrap(), 0.5, 1.0, 3)
            .unwrap();
        assert!(d.transition.is_clipped(4, 2));
        assert_eq!(d.transition.entries(4, 2), &[(4, 1.0)]);
        assert!(!d.transition.is_clipped(4, 0));
    }

    #[test]
    fn rows_are_stochastic_2d() {
        let d = Discretization::build(BoxDomain::centered(2, 1.0), 0.25, 1.5, 5).unwrap();
        for i in 0..d.grid.len() {
            for k in 0..d.velocities.len() {
                let e = d.transition.entries(i, k);
                assert!(e.iter().all(|(_, w)| *w >= 0.0));
                let s: f64 = e.iter().map(|e| e.1).sum();
                assert!((s - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn lattice_hits_corners() {
        let b = BoxDomain::centered(2, 2.0);
        let l = b.lattice(3);
        assert_eq!(l.len(), 9);
        assert_eq!(l[0], vec![-2.0, -2.0]);
        assert_eq!(l[8], vec![2.0, 2.0]);
        assert!(b.in_outer_shell(&[1.9, 0.0], 0.1));
        assert!(!b.in_outer_shell(&[1.0, 1.0], 0.1));
    }
}
