//! Hamiltonians tabulated on a momentum grid per sample node.
//!
//! `H(x, p)` is multilinear in `x` (over the sample grid) and in `p` (over the momentum grid),
//! and `+∞` outside the momentum box. Tables are convexified in `p` node by node on
//! construction.

use std::io::Read;

use thiserror::Error;

use crate::grid::Grid;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SampledError {
    #[error("momentum grid: {0}")]
    Momentum(String),
    #[error("expected {expected} samples, got {got}")]
    Size { expected: usize, got: usize },
    #[error("csv line {line}: {msg}")]
    Csv { line: usize, msg: String },
    #[error("missing sample for node {node}, momentum index {p}")]
    Missing { node: usize, p: usize },
}

/// Tensor momentum grid `∏ [lo_a, hi_a]` with `counts[a]` points per axis.
#[derive(Debug, Clone)]
pub struct MomentumGrid {
    lo: Vec<f64>,
    hi: Vec<f64>,
    counts: Vec<usize>,
    strides: Vec<usize>,
}

impl MomentumGrid {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, counts: Vec<usize>) -> Result<Self, SampledError> {
        if lo.len() != hi.len() || lo.len() != counts.len() || lo.is_empty() {
            return Err(SampledError::Momentum("lo, hi and counts must have equal length".into()));
        }
        for a in 0..lo.len() {
            if !(lo[a] < 0.0 && hi[a] > 0.0) {
                return Err(SampledError::Momentum(format!(
                    "axis {a}: [{}, {}] must contain 0 in its interior",
                    lo[a], hi[a]
                )));
            }
            if counts[a] < 3 {
                return Err(SampledError::Momentum(format!("axis {a}: at least 3 points required")));
            }
        }
        let mut strides = vec![1; counts.len()];
        for a in (0..counts.len() - 1).rev() {
            strides[a] = strides[a + 1] * counts[a + 1];
        }
        Ok(Self { lo, hi, counts, strides })
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn spacing(&self, a: usize) -> f64 {
        (self.hi[a] - self.lo[a]) / (self.counts[a] - 1) as f64
    }

    pub fn multi_index(&self, v: usize) -> Vec<usize> {
        self.strides.iter().zip(&self.counts).map(|(s, n)| (v / s) % n).collect()
    }

    pub fn point(&self, v: usize) -> Vec<f64> {
        self.multi_index(v)
            .iter()
            .enumerate()
            .map(|(a, &k)| self.lo[a] + k as f64 * self.spacing(a))
            .collect()
    }

    /// Radius of the largest centered ball inside the box.
    pub fn inner_radius(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| l.abs().min(*h))
            .fold(f64::INFINITY, f64::min)
    }

    fn contains(&self, p: &[f64]) -> bool {
        p.iter()
            .enumerate()
            .all(|(a, v)| *v >= self.lo[a] - 1e-12 && *v <= self.hi[a] + 1e-12)
    }

    /// Multilinear stencil of `p`, `None` outside the box.
    fn stencil(&self, p: &[f64]) -> Option<Vec<(usize, f64)>> {
        if !self.contains(p) {
            return None;
        }
        let dim = self.dim();
        let mut parts = Vec::with_capacity(dim);
        for a in 0..dim {
            let t = ((p[a] - self.lo[a]) / self.spacing(a)).clamp(0.0, (self.counts[a] - 1) as f64);
            let mut k = t.floor() as usize;
            if k >= self.counts[a] - 1 {
                k = self.counts[a] - 2;
            }
            let f = t - k as f64;
            parts.push((k, f));
        }
        let mut out = Vec::with_capacity(1 << dim);
        for mask in 0..(1usize << dim) {
            let mut idx = 0;
            let mut w = 1.0;
            for (a, &(k, f)) in parts.iter().enumerate() {
                if mask >> a & 1 == 1 {
                    idx += (k + 1) * self.strides[a];
                    w *= f;
                } else {
                    idx += k * self.strides[a];
                    w *= 1.0 - f;
                }
            }
            if w > 0.0 {
                out.push((idx, w));
            }
        }
        Some(out)
    }

    fn on_outward_boundary(&self, v: usize, q: &[f64]) -> bool {
        self.multi_index(v).iter().enumerate().any(|(a, &k)| {
            (k == 0 && q[a] < 0.0) || (k + 1 == self.counts[a] && q[a] > 0.0)
        })
    }
}

#[derive(Debug, Clone)]
pub struct SampledTable {
    nodes: Grid,
    momentum: MomentumGrid,
    values: Vec<f64>,
    convexified_nodes: usize,
}

impl SampledTable {
    /// `values[node * momentum.len() + p_index]`.
    pub fn new(nodes: Grid, momentum: MomentumGrid, mut values: Vec<f64>) -> Result<Self, SampledError> {
        if momentum.dim() != nodes.dim() {
            return Err(SampledError::Momentum("momentum and node grid dimensions differ".into()));
        }
        let np = momentum.len();
        let expected = nodes.len() * np;
        if values.len() != expected {
            return Err(SampledError::Size { expected, got: values.len() });
        }
        let mut convexified_nodes = 0;
        for node in 0..nodes.len() {
            let slice = &mut values[node * np..(node + 1) * np];
            if convexify(&momentum, slice) {
                convexified_nodes += 1;
            }
        }
        if convexified_nodes > 0 {
            log::warn!("sampled Hamiltonian convexified in p at {convexified_nodes} nodes");
        }
        Ok(Self { nodes, momentum, values, convexified_nodes })
    }

    /// Tabulates `h(x, p)` at every (node, momentum) pair.
    pub fn from_fn(
        nodes: Grid,
        momentum: MomentumGrid,
        h: impl Fn(&[f64], &[f64]) -> f64,
    ) -> Result<Self, SampledError> {
        let mut values = Vec::with_capacity(nodes.len() * momentum.len());
        for i in 0..nodes.len() {
            let x = nodes.point(i).to_vec();
            for v in 0..momentum.len() {
                values.push(h(&x, &momentum.point(v)));
            }
        }
        Self::new(nodes, momentum, values)
    }

    /// Reads `(node_index, p_index, value)` triples; a non-numeric first line is a header.
    pub fn from_csv<R: Read>(reader: R, nodes: Grid, momentum: MomentumGrid) -> Result<Self, SampledError> {
        let np = momentum.len();
        let total = nodes.len() * np;
        let mut values = vec![f64::NAN; total];
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(reader);
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| SampledError::Csv { line: line + 1, msg: e.to_string() })?;
            if rec.len() != 3 {
                return Err(SampledError::Csv { line: line + 1, msg: format!("expected 3 fields, got {}", rec.len()) });
            }
            let node = rec[0].parse::<usize>();
            let p = rec[1].parse::<usize>();
            let v = rec[2].parse::<f64>();
            let (node, p, v) = match (node, p, v) {
                (Ok(n), Ok(p), Ok(v)) => (n, p, v),
                _ if line == 0 => continue,
                _ => return Err(SampledError::Csv { line: line + 1, msg: "non-numeric field".into() }),
            };
            if node >= nodes.len() || p >= np {
                return Err(SampledError::Csv { line: line + 1, msg: format!("index ({node}, {p}) out of range") });
            }
            values[node * np + p] = v;
        }
        if let Some(pos) = values.iter().position(|v| v.is_nan()) {
            return Err(SampledError::Missing { node: pos / np, p: pos % np });
        }
        Self::new(nodes, momentum, values)
    }

    pub fn dim(&self) -> usize {
        self.nodes.dim()
    }

    pub fn momentum(&self) -> &MomentumGrid {
        &self.momentum
    }

    pub fn nodes(&self) -> &Grid {
        &self.nodes
    }

    pub fn convexified_nodes(&self) -> usize {
        self.convexified_nodes
    }

    /// Bound on the midpoint-convexity defect introduced by multilinear interpolation.
    pub fn interpolation_tolerance(&self) -> f64 {
        if self.dim() == 1 {
            return 0.0;
        }
        let np = self.momentum.len();
        let mut worst: f64 = 0.0;
        for node in 0..self.nodes.len() {
            let s = &self.values[node * np..(node + 1) * np];
            for v in 0..np {
                let m = self.momentum.multi_index(v);
                for a in 0..self.dim() {
                    if m[a] > 0 && m[a] + 1 < self.momentum.counts[a] {
                        let st = self.momentum.strides[a];
                        worst = worst.max((s[v - st] + s[v + st] - 2.0 * s[v]).abs());
                    }
                }
            }
        }
        0.25 * worst
    }

    /// Values at every momentum vertex for the point `x`.
    fn vertex_values(&self, x: &[f64]) -> Vec<f64> {
        let np = self.momentum.len();
        let (st, _) = self.nodes.stencil(x);
        let mut out = vec![0.0; np];
        for (j, w) in st {
            for (o, v) in out.iter_mut().zip(&self.values[j * np..(j + 1) * np]) {
                *o += w * v;
            }
        }
        out
    }

    pub fn eval(&self, x: &[f64], p: &[f64]) -> f64 {
        let Some(pst) = self.momentum.stencil(p) else {
            return f64::INFINITY;
        };
        let np = self.momentum.len();
        let (st, _) = self.nodes.stencil(x);
        st.iter()
            .map(|(j, w)| w * pst.iter().map(|(v, wp)| wp * self.values[j * np + v]).sum::<f64>())
            .sum()
    }

    pub fn min_over_p(&self, x: &[f64]) -> f64 {
        self.vertex_values(x).into_iter().fold(f64::INFINITY, f64::min)
    }

    pub fn max_over_ball(&self, x: &[f64], eps: f64) -> f64 {
        let dim = self.dim();
        let dirs: Vec<Vec<f64>> = if dim == 2 {
            (0..64)
                .map(|k| {
                    let t = std::f64::consts::TAU * k as f64 / 64.0;
                    vec![t.cos(), t.sin()]
                })
                .collect()
        } else {
            let mut d = Vec::new();
            for a in 0..dim {
                for s in [-1.0, 1.0] {
                    let mut e = vec![0.0; dim];
                    e[a] = s;
                    d.push(e);
                }
            }
            d
        };
        dirs.iter()
            .map(|d| {
                let p: Vec<f64> = d.iter().map(|v| v * eps).collect();
                self.eval(x, &p)
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `sup_p p·q - lift(H(x, p))` over the momentum box. `None` when the maximizer sits on
    /// the box face the velocity points through, where the box truncates the supremum.
    pub fn conjugate(&self, x: &[f64], q: &[f64], lift: impl Fn(f64) -> f64) -> Option<f64> {
        let vals = self.vertex_values(x);
        let dim = self.dim();
        let mut best = (f64::NEG_INFINITY, 0usize);
        for (v, hv) in vals.iter().enumerate() {
            let p = self.momentum.point(v);
            let phi = dot(&p, q) - lift(*hv);
            if phi > best.0 {
                best = (phi, v);
            }
        }
        if self.momentum.on_outward_boundary(best.1, q) {
            return None;
        }
        // Coordinate golden-section refinement within one cell of the best vertex.
        let mut p = self.momentum.point(best.1);
        let mut value = best.0;
        let phi = |p: &[f64]| dot(p, q) - lift(self.eval(x, p));
        for _ in 0..2 {
            for a in 0..dim {
                let d = self.momentum.spacing(a);
                let lo = (p[a] - d).max(self.momentum.lo[a]);
                let hi = (p[a] + d).min(self.momentum.hi[a]);
                let mut trial = p.clone();
                let t = golden_max(lo, hi, |t| {
                    trial[a] = t;
                    phi(&trial)
                });
                trial[a] = t;
                let v = phi(&trial);
                if v > value {
                    value = v;
                    p = trial;
                }
            }
        }
        Some(value)
    }

    /// `max{p·q : lift(H(x, p)) ≤ a}`, `None` when the sublevel set is empty.
    pub fn support(&self, x: &[f64], q: &[f64], a: f64, lift: impl Fn(f64) -> f64) -> Option<f64> {
        let vals: Vec<f64> = self.vertex_values(x).into_iter().map(&lift).collect();
        let mut best: Option<f64> = None;
        let np = self.momentum.len();
        for v in 0..np {
            if vals[v] > a {
                continue;
            }
            let pv = self.momentum.point(v);
            let s = dot(&pv, q);
            best = Some(best.map_or(s, |b: f64| b.max(s)));
            let m = self.momentum.multi_index(v);
            for ax in 0..self.dim() {
                let st = self.momentum.strides[ax];
                let mut nbrs = Vec::with_capacity(2);
                if m[ax] > 0 {
                    nbrs.push(v - st);
                }
                if m[ax] + 1 < self.momentum.counts[ax] {
                    nbrs.push(v + st);
                }
                for u in nbrs {
                    if vals[u] <= a {
                        continue;
                    }
                    let pu = self.momentum.point(u);
                    // Crossing of the level a on the segment [pv, pu].
                    let (mut lo, mut hi) = (0.0, 1.0);
                    for _ in 0..60 {
                        let mid = 0.5 * (lo + hi);
                        let pm: Vec<f64> = pv.iter().zip(&pu).map(|(a, b)| a + mid * (b - a)).collect();
                        if lift(self.eval(x, &pm)) <= a {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    let pc: Vec<f64> = pv.iter().zip(&pu).map(|(a, b)| a + lo * (b - a)).collect();
                    let s = dot(&pc, q);
                    best = Some(best.map_or(s, |b: f64| b.max(s)));
                }
            }
        }
        best
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn golden_max(mut lo: f64, mut hi: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = hi - r * (hi - lo);
    let mut d = lo + r * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..80 {
        if hi - lo < 1e-13 {
            break;
        }
        if fc > fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - r * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + r * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

/// Replaces the samples of one node by their lower convex envelope; true when anything moved.
fn convexify(grid: &MomentumGrid, values: &mut [f64]) -> bool {
    if grid.dim() == 1 {
        return lower_hull_1d(grid, values);
    }
    if is_discretely_convex(grid, values) {
        return false;
    }
    biconjugate(grid, values);
    true
}

fn lower_hull_1d(grid: &MomentumGrid, values: &mut [f64]) -> bool {
    let pts: Vec<(f64, f64)> = (0..values.len()).map(|v| (grid.point(v)[0], values[v])).collect();
    let mut hull: Vec<(f64, f64)> = Vec::new();
    for &p in &pts {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    let mut changed = false;
    let mut seg = 0;
    for (v, &(x, y)) in pts.iter().enumerate() {
        while seg + 1 < hull.len() - 1 && hull[seg + 1].0 < x {
            seg += 1;
        }
        let (a, b) = (hull[seg], hull[(seg + 1).min(hull.len() - 1)]);
        let env = if b.0 > a.0 { a.1 + (b.1 - a.1) * (x - a.0) / (b.0 - a.0) } else { a.1 };
        if env < y - 1e-12 * (1.0 + y.abs()) {
            values[v] = env;
            changed = true;
        }
    }
    changed
}

fn is_discretely_convex(grid: &MomentumGrid, values: &[f64]) -> bool {
    let dim = grid.dim();
    // Axis and (in 2D) diagonal second differences.
    let mut dirs: Vec<Vec<i64>> = (0..dim)
        .map(|a| (0..dim).map(|b| i64::from(a == b)).collect())
        .collect();
    if dim == 2 {
        dirs.push(vec![1, 1]);
        dirs.push(vec![1, -1]);
    }
    for v in 0..values.len() {
        let m = grid.multi_index(v);
        for d in &dirs {
            let fwd: Vec<i64> = m.iter().zip(d).map(|(k, s)| *k as i64 + s).collect();
            let bwd: Vec<i64> = m.iter().zip(d).map(|(k, s)| *k as i64 - s).collect();
            let inside = |idx: &[i64]| idx.iter().zip(&grid.counts).all(|(k, n)| *k >= 0 && (*k as usize) < *n);
            if inside(&fwd) && inside(&bwd) {
                let flat = |idx: &[i64]| -> usize {
                    idx.iter().zip(&grid.strides).map(|(k, s)| *k as usize * s).sum()
                };
                let dd = values[flat(&fwd)] + values[flat(&bwd)] - 2.0 * values[v];
                if dd < -1e-12 * (1.0 + values[v].abs()) {
                    return false;
                }
            }
        }
    }
    true
}

/// Discrete Legendre biconjugate over a slope lattice spanning the sampled difference
/// quotients: a convex minorant of the samples.
fn biconjugate(grid: &MomentumGrid, values: &mut [f64]) {
    let dim = grid.dim();
    let np = values.len();
    let mut smin = vec![f64::INFINITY; dim];
    let mut smax = vec![f64::NEG_INFINITY; dim];
    for v in 0..np {
        let m = grid.multi_index(v);
        for a in 0..dim {
            if m[a] + 1 < grid.counts[a] {
                let s = (values[v + grid.strides[a]] - values[v]) / grid.spacing(a);
                smin[a] = smin[a].min(s);
                smax[a] = smax[a].max(s);
            }
        }
    }
    let per_axis: Vec<usize> = grid.counts.iter().map(|n| 2 * n).collect();
    let ns: usize = per_axis.iter().product();
    let points: Vec<Vec<f64>> = (0..np).map(|v| grid.point(v)).collect();
    let slopes: Vec<Vec<f64>> = (0..ns)
        .map(|flat| {
            let mut rem = flat;
            let mut s = vec![0.0; dim];
            for a in (0..dim).rev() {
                let k = rem % per_axis[a];
                rem /= per_axis[a];
                s[a] = smin[a] + (smax[a] - smin[a]) * k as f64 / (per_axis[a] - 1) as f64;
            }
            s
        })
        .collect();
    let conj: Vec<f64> = slopes
        .iter()
        .map(|s| {
            points
                .iter()
                .zip(values.iter())
                .map(|(p, v)| dot(p, s) - v)
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    for (v, p) in points.iter().enumerate() {
        let env = slopes
            .iter()
            .zip(&conj)
            .map(|(s, c)| dot(p, s) - c)
            .fold(f64::NEG_INFINITY, f64::max);
        values[v] = values[v].min(env);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::BoxDomain;

    fn nodes() -> Grid {
        Grid::new(BoxDomain::centered(1, 1.0), 0.5).unwrap()
    }

    #[test]
    fn hull_removes_bump() {
        let mg = MomentumGrid::new(vec![-1.0], vec![1.0], vec![5]).unwrap();
        let t = SampledTable::new(
            nodes(),
            mg.clone(),
            (0..5).flat_map(|_| [1.0, 0.5, 0.8, 0.5, 1.0]).collect(),
        )
        .unwrap();
        assert_eq!(t.convexified_nodes(), 5);
        assert!((t.eval(&[0.0], &[0.0]) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn quadratic_samples_reproduce_transform() {
        let mg = MomentumGrid::new(vec![-3.0], vec![3.0], vec![601]).unwrap();
        let t = SampledTable::from_fn(nodes(), mg, |x, p| 0.5 * p[0] * p[0] - 0.5 * x[0] * x[0]).unwrap();
        assert_eq!(t.convexified_nodes(), 0);
        let l = t.conjugate(&[0.5], &[1.0], |v| v).unwrap();
        assert!((l - 0.625).abs() < 1e-4, "{l}");
        let s = t.support(&[1.0], &[1.0], 0.0, |v| v).unwrap();
        assert!((s - 1.0).abs() < 1e-4, "{s}");
        assert!(t.support(&[0.0], &[1.0], -0.1, |v| v).is_none());
        // velocity beyond what the box resolves
        assert!(t.conjugate(&[0.0], &[5.0], |v| v).is_none());
    }

    #[test]
    fn csv_roundtrip_and_missing() {
        let mg = MomentumGrid::new(vec![-1.0], vec![1.0], vec![3]).unwrap();
        let mut text = String::from("node_index,p_index,value\n");
        for n in 0..5 {
            for p in 0..3 {
                text.push_str(&format!("{n},{p},{}\n", (p as f64 - 1.0).abs()));
            }
        }
        let t = SampledTable::from_csv(text.as_bytes(), nodes(), mg.clone()).unwrap();
        assert_eq!(t.eval(&[0.2], &[0.5]), 0.5);
        let short: String = text.lines().take(10).map(|l| format!("{l}\n")).collect();
        assert!(matches!(
            SampledTable::from_csv(short.as_bytes(), nodes(), mg),
            Err(SampledError::Missing { .. })
        ));
    }
}
