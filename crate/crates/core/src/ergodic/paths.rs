//! Directed Finsler graphs at a fixed level and their shortest paths.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::grid::Discretization;
use crate::model::{HamiltonianModel, Support};

/// A node whose sublevel set `{H(x, ·) ≤ a}` is empty.
#[derive(Debug, Clone, PartialEq)]
pub struct SubcriticalCertificate {
    pub node: usize,
    pub level: f64,
}

/// A negative cycle was reached while relaxing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NegativeCycle;

/// Compressed adjacency lists.
#[derive(Debug, Clone)]
struct Adjacency {
    offsets: Vec<usize>,
    edges: Vec<(usize, f64)>,
}

impl Adjacency {
    fn from_edges(n: usize, mut list: Vec<(usize, usize, f64)>) -> Self {
        list.sort_by_key(|e| (e.0, e.1));
        list.dedup_by(|b, a| a.0 == b.0 && a.1 == b.1);
        let mut offsets = vec![0; n + 1];
        for e in &list {
            offsets[e.0 + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        Self { offsets, edges: list.into_iter().map(|e| (e.1, e.2)).collect() }
    }

    fn of(&self, i: usize) -> &[(usize, f64)] {
        &self.edges[self.offsets[i]..self.offsets[i + 1]]
    }
}

/// Graph on the grid nodes with edges `i → j` for every node `j` in the stencil of an
/// unclipped foot point `x_i + h q`, `q ≠ 0`. The edge carries the frozen-coefficient
/// length `σ_a(x_i, x_j - x_i)` of the straight displacement; when the foot point is a node
/// this is exactly `h σ_a(x_i, q)`.
#[derive(Debug, Clone)]
pub struct LevelGraph {
    n: usize,
    level: f64,
    out: Adjacency,
    inn: Adjacency,
    nonnegative: bool,
}

impl LevelGraph {
    pub fn build(
        model: &HamiltonianModel,
        disc: &Discretization,
        level: f64,
    ) -> Result<Self, SubcriticalCertificate> {
        let grid = &disc.grid;
        let n = grid.len();
        let zero = disc.velocities.zero_index();
        let dim = grid.dim();
        let origin = vec![0.0; dim];
        let mut list = Vec::new();
        let mut d = vec![0.0; dim];
        for i in 0..n {
            let x = grid.point(i);
            if model.support_function(level, x, &origin) == Support::EmptySublevel {
                return Err(SubcriticalCertificate { node: i, level });
            }
            for k in 0..disc.velocities.len() {
                if k == zero || disc.transition.is_clipped(i, k) {
                    continue;
                }
                for &(j, _) in disc.transition.entries(i, k) {
                    if j == i {
                        continue;
                    }
                    let y = grid.point(j);
                    for a in 0..dim {
                        d[a] = y[a] - x[a];
                    }
                    match model.support_function(level, x, &d) {
                        Support::Value(c) => list.push((i, j, c)),
                        Support::EmptySublevel => return Err(SubcriticalCertificate { node: i, level }),
                    }
                }
            }
        }
        let nonnegative = list.iter().all(|e| e.2 >= 0.0);
        let rev: Vec<(usize, usize, f64)> = list.iter().map(|&(i, j, c)| (j, i, c)).collect();
        Ok(Self {
            n,
            level,
            out: Adjacency::from_edges(n, list),
            inn: Adjacency::from_edges(n, rev),
            nonnegative,
        })
    }

    /// Builds a graph from an explicit edge list (used by tests and small oracles).
    pub fn from_edges(n: usize, level: f64, edges: Vec<(usize, usize, f64)>) -> Self {
        let nonnegative = edges.iter().all(|e| e.2 >= 0.0);
        let rev = edges.iter().map(|&(i, j, c)| (j, i, c)).collect();
        Self {
            n,
            level,
            out: Adjacency::from_edges(n, edges),
            inn: Adjacency::from_edges(n, rev),
            nonnegative,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    pub fn is_nonnegative(&self) -> bool {
        self.nonnegative
    }

    pub fn out_edges(&self, i: usize) -> &[(usize, f64)] {
        self.out.of(i)
    }

    pub fn in_edges(&self, i: usize) -> &[(usize, f64)] {
        self.inn.of(i)
    }

    pub fn edge_count(&self) -> usize {
        self.out.edges.len()
    }

    /// Negative-cycle detection: Bellman–Ford from a virtual source joined to every node.
    pub fn has_negative_cycle(&self) -> bool {
        self.potential().is_err()
    }

    /// Bellman–Ford distances from a virtual source with zero-cost edges to all nodes;
    /// a feasible potential for Johnson reweighting.
    pub fn potential(&self) -> Result<Vec<f64>, NegativeCycle> {
        bellman_ford(&self.out, self.n, None)
    }

    /// `S_a(source, ·)`: Dijkstra when every edge is nonnegative, Bellman–Ford otherwise.
    pub fn distances_from(&self, source: usize) -> Result<Vec<f64>, NegativeCycle> {
        if self.nonnegative {
            Ok(dijkstra(&self.out, self.n, source, None))
        } else {
            bellman_ford(&self.out, self.n, Some(source))
        }
    }

    /// `S_a(·, target)`, on the reversed graph.
    pub fn distances_to(&self, target: usize) -> Result<Vec<f64>, NegativeCycle> {
        if self.nonnegative {
            Ok(dijkstra(&self.inn, self.n, target, None))
        } else {
            bellman_ford(&self.inn, self.n, Some(target))
        }
    }

    /// Plain Bellman–Ford from `source`, regardless of edge signs.
    pub fn distances_from_bellman_ford(&self, source: usize) -> Result<Vec<f64>, NegativeCycle> {
        bellman_ford(&self.out, self.n, Some(source))
    }

    /// Many backward single-source problems sharing one potential (Johnson reweighting).
    pub fn reweighted(&self) -> Result<Reweighted<'_>, NegativeCycle> {
        let phi = if self.nonnegative { vec![0.0; self.n] } else { self.potential()? };
        Ok(Reweighted { graph: self, phi })
    }
}

/// Graph with a feasible potential `φ`, so that `c(u, v) + φ(u) - φ(v) ≥ 0`.
pub struct Reweighted<'a> {
    graph: &'a LevelGraph,
    phi: Vec<f64>,
}

impl Reweighted<'_> {
    pub fn distances_from(&self, source: usize) -> Vec<f64> {
        let d = dijkstra(&self.graph.out, self.graph.n, source, Some((&self.phi, false)));
        d.iter()
            .enumerate()
            .map(|(v, dv)| dv - self.phi[source] + self.phi[v])
            .collect()
    }

    pub fn distances_to(&self, target: usize) -> Vec<f64> {
        let d = dijkstra(&self.graph.inn, self.graph.n, target, Some((&self.phi, true)));
        d.iter()
            .enumerate()
            .map(|(u, du)| du - self.phi[u] + self.phi[target])
            .collect()
    }
}

fn relax_tol(v: f64) -> f64 {
    if v.is_finite() {
        1e-12 * (1.0 + v.abs())
    } else {
        0.0
    }
}

fn bellman_ford(adj: &Adjacency, n: usize, source: Option<usize>) -> Result<Vec<f64>, NegativeCycle> {
    let mut dist = match source {
        Some(s) => {
            let mut d = vec![f64::INFINITY; n];
            d[s] = 0.0;
            d
        }
        None => vec![0.0; n],
    };
    for _ in 0..=n {
        let mut changed = false;
        for u in 0..n {
            let du = dist[u];
            if !du.is_finite() {
                continue;
            }
            for &(v, c) in adj.of(u) {
                let cand = du + c;
                if cand < dist[v] - relax_tol(dist[v]) {
                    dist[v] = cand;
                    changed = true;
                }
            }
        }
        if !changed {
            return Ok(dist);
        }
    }
    Err(NegativeCycle)
}

#[derive(PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Dijkstra on `adj`; with `reweight = Some((φ, reversed))` edge costs become
/// `c + φ(tail) - φ(head)` (tail/head taken in the original orientation).
fn dijkstra(adj: &Adjacency, n: usize, source: usize, reweight: Option<(&[f64], bool)>) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(Entry(0.0, source));
    while let Some(Entry(d, u)) = heap.pop() {
        if done[u] {
            continue;
        }
        done[u] = true;
        for &(v, c) in adj.of(u) {
            let w = match reweight {
                Some((phi, false)) => (c + phi[u] - phi[v]).max(0.0),
                Some((phi, true)) => (c + phi[v] - phi[u]).max(0.0),
                None => c,
            };
            let cand = d + w;
            if cand < dist[v] {
                dist[v] = cand;
                heap.push(Entry(cand, v));
            }
        }
    }
    dist
}
