//! Dense revised simplex for equality-form linear programs
//! `min cᵀx  s.t.  A x = b,  x ≥ 0`.
//!
//! Columns are stored sparsely; the basis inverse is kept explicitly and updated with
//! product-form pivots, with a periodic refactorization. The default pricing is Dantzig's
//! rule with a lexicographic ratio test; Bland's smallest-index rule is available as an
//! option. Both terminate on degenerate programs.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("linear program is infeasible (phase-one residual {residual:.3e})")]
    Infeasible { residual: f64 },
    #[error("linear program is unbounded along column {column}")]
    Unbounded { column: usize },
    #[error("simplex pivot limit {pivots} reached")]
    IterationLimit { pivots: usize },
    #[error("basis matrix became singular during refactorization")]
    Singular,
    #[error("malformed program: {0}")]
    Malformed(String),
}

/// Equality-form program with sparse columns.
#[derive(Debug, Clone, Default)]
pub struct LinearProgram {
    rows: usize,
    columns: Vec<Vec<(usize, f64)>>,
    cost: Vec<f64>,
    rhs: Vec<f64>,
}

impl LinearProgram {
    pub fn new(rows: usize) -> Self {
        Self { rows, columns: Vec::new(), cost: Vec::new(), rhs: vec![0.0; rows] }
    }

    /// Adds a column; repeated row entries are summed and exact zeros dropped.
    pub fn add_column(&mut self, mut entries: Vec<(usize, f64)>, cost: f64) -> usize {
        entries.sort_by_key(|e| e.0);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
        for (r, v) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == r => last.1 += v,
                _ => merged.push((r, v)),
            }
        }
        merged.retain(|e| e.1 != 0.0);
        self.columns.push(merged);
        self.cost.push(cost);
        self.columns.len() - 1
    }

    pub fn set_rhs(&mut self, row: usize, value: f64) {
        self.rhs[row] = value;
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, j: usize) -> &[(usize, f64)] {
        &self.columns[j]
    }

    pub fn cost(&self) -> &[f64] {
        &self.cost
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    /// `max_r |(A x - b)_r|`.
    pub fn residual(&self, x: &[f64]) -> f64 {
        let mut ax = vec![0.0; self.rows];
        for (j, col) in self.columns.iter().enumerate() {
            if x[j] != 0.0 {
                for &(r, v) in col {
                    ax[r] += v * x[j];
                }
            }
        }
        ax.iter().zip(&self.rhs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.cost.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    fn validate(&self) -> Result<(), LpError> {
        if self.cost.iter().any(|c| !c.is_finite()) {
            return Err(LpError::Malformed("non-finite objective coefficient".into()));
        }
        if self.rhs.iter().any(|b| !b.is_finite()) {
            return Err(LpError::Malformed("non-finite right-hand side".into()));
        }
        for col in &self.columns {
            for &(r, v) in col {
                if r >= self.rows || !v.is_finite() {
                    return Err(LpError::Malformed(format!("bad entry ({r}, {v})")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pricing {
    /// Smallest-index entering and leaving variables.
    Bland,
    /// Most negative reduced cost, with a lexicographic ratio test.
    Dantzig,
}

#[derive(Debug, Clone)]
pub struct SimplexOptions {
    pub pricing: Pricing,
    pub feasibility_tol: f64,
    pub pivot_tol: f64,
    pub optimality_tol: f64,
    pub max_pivots: usize,
    pub refactor_every: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            pricing: Pricing::Dantzig,
            feasibility_tol: 1e-9,
            pivot_tol: 1e-9,
            optimality_tol: 1e-10,
            max_pivots: 1_000_000,
            refactor_every: 200,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Row multipliers `y` with `c - Aᵀy ≥ 0` at optimality.
    pub duals: Vec<f64>,
    pub reduced_costs: Vec<f64>,
    pub pivots: usize,
}

/// Solver state; keeps an optimal basis so that a new objective can be warm-started.
pub struct Simplex<'a> {
    lp: &'a LinearProgram,
    opts: SimplexOptions,
    m: usize,
    n: usize,
    sign: Vec<f64>,
    b: Vec<f64>,
    /// Basic variable per row; indices `≥ n` are artificials `n + r`.
    basis: Vec<usize>,
    position: Vec<Option<usize>>,
    binv: Vec<f64>,
    xb: Vec<f64>,
    pivots: usize,
    since_refactor: usize,
}

impl<'a> Simplex<'a> {
    /// Solves `lp` from scratch.
    pub fn solve(lp: &'a LinearProgram, opts: SimplexOptions) -> Result<(Self, LpSolution), LpError> {
        lp.validate()?;
        let mut s = Self::crash(lp, opts);
        s.phase_one()?;
        s.drive_out_artificials();
        let cost = lp.cost.clone();
        let sol = s.phase_two(&cost)?;
        Ok((s, sol))
    }

    /// Re-optimizes from the current feasible basis under a new objective.
    pub fn reoptimize(&mut self, cost: &[f64]) -> Result<LpSolution, LpError> {
        if cost.len() != self.n || cost.iter().any(|c| !c.is_finite()) {
            return Err(LpError::Malformed("objective length or value".into()));
        }
        self.phase_two(cost)
    }

    fn crash(lp: &'a LinearProgram, opts: SimplexOptions) -> Self {
        let m = lp.rows;
        let n = lp.cols();
        let sign: Vec<f64> = lp.rhs.iter().map(|&v| if v < 0.0 { -1.0 } else { 1.0 }).collect();
        let b: Vec<f64> = lp.rhs.iter().zip(&sign).map(|(v, s)| v * s).collect();
        let mut chosen: Vec<Option<(usize, f64)>> = vec![None; m];
        for (j, col) in lp.columns.iter().enumerate() {
            if let [(r, v)] = col.as_slice() {
                let coef = v * sign[*r];
                if coef > opts.pivot_tol {
                    let better = match chosen[*r] {
                        None => true,
                        Some((k, _)) => lp.cost[j] < lp.cost[k],
                    };
                    if better {
                        chosen[*r] = Some((j, coef));
                    }
                }
            }
        }
        let mut basis = vec![0; m];
        let mut position = vec![None; n + m];
        let mut binv = vec![0.0; m * m];
        let mut xb = vec![0.0; m];
        for r in 0..m {
            let (var, coef) = match chosen[r] {
                Some((j, c)) => (j, c),
                None => (n + r, 1.0),
            };
            basis[r] = var;
            position[var] = Some(r);
            binv[r * m + r] = 1.0 / coef;
            xb[r] = b[r] / coef;
        }
        Self { lp, opts, m, n, sign, b, basis, position, binv, xb, pivots: 0, since_refactor: 0 }
    }

    fn is_artificial(&self, var: usize) -> bool {
        var >= self.n
    }

    /// Column of a variable in the sign-flipped row space.
    fn column_entries(&self, var: usize) -> Vec<(usize, f64)> {
        if self.is_artificial(var) {
            vec![(var - self.n, 1.0)]
        } else {
            self.lp.columns[var].iter().map(|&(r, v)| (r, v * self.sign[r])).collect()
        }
    }

    fn ftran(&self, var: usize) -> Vec<f64> {
        let m = self.m;
        let mut alpha = vec![0.0; m];
        for (r, v) in self.column_entries(var) {
            for i in 0..m {
                alpha[i] += self.binv[i * m + r] * v;
            }
        }
        alpha
    }

    fn duals_for(&self, cost_of: &dyn Fn(usize) -> f64) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for i in 0..m {
            let cb = cost_of(self.basis[i]);
            if cb != 0.0 {
                let row = &self.binv[i * m..(i + 1) * m];
                for r in 0..m {
                    y[r] += cb * row[r];
                }
            }
        }
        y
    }

    fn reduced_cost(&self, j: usize, cj: f64, y: &[f64]) -> f64 {
        let mut d = cj;
        for &(r, v) in &self.lp.columns[j] {
            d -= y[r] * v * self.sign[r];
        }
        d
    }

    fn pivot(&mut self, row: usize, entering: usize, alpha: &[f64]) {
        let m = self.m;
        let p = alpha[row];
        let t = self.xb[row] / p;
        for i in 0..m {
            if i != row {
                self.xb[i] -= t * alpha[i];
            }
        }
        self.xb[row] = t;
        let pivot_row: Vec<f64> = self.binv[row * m..(row + 1) * m].iter().map(|v| v / p).collect();
        for i in 0..m {
            if i == row || alpha[i] == 0.0 {
                continue;
            }
            let f = alpha[i];
            let dst = &mut self.binv[i * m..(i + 1) * m];
            for (d, s) in dst.iter_mut().zip(&pivot_row) {
                *d -= f * s;
            }
        }
        self.binv[row * m..(row + 1) * m].copy_from_slice(&pivot_row);
        let leaving = self.basis[row];
        self.position[leaving] = None;
        self.basis[row] = entering;
        self.position[entering] = Some(row);
        self.pivots += 1;
        self.since_refactor += 1;
        if self.since_refactor >= self.opts.refactor_every {
            // A failed refactorization keeps the updated inverse.
            let _ = self.refactor();
        }
    }

    /// Rebuilds `B⁻¹` by Gauss–Jordan elimination with partial pivoting and recomputes `x_B`.
    fn refactor(&mut self) -> Result<(), LpError> {
        let m = self.m;
        let mut a = vec![0.0; m * m];
        for (c, &var) in self.basis.iter().enumerate() {
            for (r, v) in self.column_entries(var) {
                a[r * m + c] = v;
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for col in 0..m {
            let mut piv = col;
            let mut best = a[col * m + col].abs();
            for r in col + 1..m {
                let v = a[r * m + col].abs();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if best < 1e-14 {
                return Err(LpError::Singular);
            }
            if piv != col {
                for k in 0..m {
                    a.swap(piv * m + k, col * m + k);
                    inv.swap(piv * m + k, col * m + k);
                }
            }
            let p = a[col * m + col];
            for k in 0..m {
                a[col * m + k] /= p;
                inv[col * m + k] /= p;
            }
            for r in 0..m {
                if r == col {
                    continue;
                }
                let f = a[r * m + col];
                if f == 0.0 {
                    continue;
                }
                for k in 0..m {
                    a[r * m + k] -= f * a[col * m + k];
                    inv[r * m + k] -= f * inv[col * m + k];
                }
            }
        }
        // Gauss–Jordan on B gives rows of B⁻¹ ordered by basis position.
        self.binv = inv;
        for i in 0..m {
            let row = &self.binv[i * m..(i + 1) * m];
            self.xb[i] = row.iter().zip(&self.b).map(|(u, v)| u * v).sum();
        }
        self.since_refactor = 0;
        Ok(())
    }

    fn phase_one(&mut self) -> Result<(), LpError> {
        let infeasible: f64 =
            (0..self.m).filter(|&r| self.is_artificial(self.basis[r])).map(|r| self.xb[r]).sum();
        if infeasible <= self.opts.feasibility_tol {
            return Ok(());
        }
        let n = self.n;
        let cost: Vec<f64> = vec![0.0; n];
        self.iterate(&cost, 1.0)?;
        let residual: f64 =
            (0..self.m).filter(|&r| self.is_artificial(self.basis[r])).map(|r| self.xb[r].max(0.0)).sum();
        let scale = 1.0 + self.b.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if residual > self.opts.feasibility_tol * scale {
            return Err(LpError::Infeasible { residual });
        }
        Ok(())
    }

    /// Replaces zero-level artificials by structural columns where the row allows it;
    /// the rest belong to redundant rows and stay basic at zero.
    fn drive_out_artificials(&mut self) {
        let m = self.m;
        for r in 0..m {
            if !self.is_artificial(self.basis[r]) {
                continue;
            }
            let rho: Vec<f64> = self.binv[r * m..(r + 1) * m].to_vec();
            let mut best: Option<(usize, f64)> = None;
            for j in 0..self.n {
                if self.position[j].is_some() {
                    continue;
                }
                let v: f64 = self.lp.columns[j].iter().map(|&(i, a)| rho[i] * a * self.sign[i]).sum();
                if v.abs() > self.opts.pivot_tol * 1e3 && best.is_none_or(|(_, bv)| v.abs() > bv.abs() * (1.0 + 1e-12)) {
                    best = Some((j, v));
                }
            }
            if let Some((j, _)) = best {
                let alpha = self.ftran(j);
                self.pivot(r, j, &alpha);
            }
        }
    }

    fn phase_two(&mut self, cost: &[f64]) -> Result<LpSolution, LpError> {
        self.iterate(cost, 0.0)?;
        self.refactor()?;
        for v in self.xb.iter_mut() {
            if *v < 0.0 && *v > -self.opts.feasibility_tol * 1e3 {
                *v = 0.0;
            }
        }
        let n = self.n;
        let cost_of = |var: usize| if var < n { cost[var] } else { 0.0 };
        let y = self.duals_for(&cost_of);
        let reduced_costs: Vec<f64> = (0..n).map(|j| self.reduced_cost(j, cost[j], &y)).collect();
        let mut x = vec![0.0; n];
        for (r, &var) in self.basis.iter().enumerate() {
            if var < n {
                x[var] = self.xb[r];
            }
        }
        let objective = cost.iter().zip(&x).map(|(c, v)| c * v).sum();
        let duals = y.iter().zip(&self.sign).map(|(v, s)| v * s).collect();
        Ok(LpSolution { x, objective, duals, reduced_costs, pivots: self.pivots })
    }

    /// Primal simplex from the current feasible basis. `artificial_cost` is the cost of
    /// every artificial variable (1 in phase one, 0 afterwards); artificials never enter.
    fn iterate(&mut self, cost: &[f64], artificial_cost: f64) -> Result<(), LpError> {
        let n = self.n;
        let bland = self.opts.pricing == Pricing::Bland;
        loop {
            if self.pivots >= self.opts.max_pivots {
                return Err(LpError::IterationLimit { pivots: self.pivots });
            }
            let cost_of = |var: usize| if var < n { cost[var] } else { artificial_cost };
            let y = self.duals_for(&cost_of);
            let mut entering: Option<(usize, f64)> = None;
            for j in 0..n {
                if self.position[j].is_some() {
                    continue;
                }
                let d = self.reduced_cost(j, cost[j], &y);
                if d < -self.opts.optimality_tol {
                    if bland {
                        entering = Some((j, d));
                        break;
                    }
                    if entering.is_none_or(|(_, bd)| d < bd) {
                        entering = Some((j, d));
                    }
                }
            }
            let Some((j, _)) = entering else { return Ok(()) };
            let alpha = self.ftran(j);
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.m {
                let a = alpha[r];
                let locked = artificial_cost == 0.0 && self.is_artificial(self.basis[r]);
                let t = if locked && a.abs() > self.opts.pivot_tol {
                    0.0
                } else if a > self.opts.pivot_tol {
                    self.xb[r].max(0.0) / a
                } else {
                    continue;
                };
                leave = match leave {
                    None => Some((r, t)),
                    Some((br, bt)) => {
                        let tie = (t - bt).abs() <= 1e-12 * (1.0 + bt.abs());
                        if !tie {
                            if t < bt { Some((r, t)) } else { Some((br, bt)) }
                        } else if self.prefer_on_tie(r, br, &alpha, bland) {
                            Some((r, t.min(bt)))
                        } else {
                            Some((br, t.min(bt)))
                        }
                    }
                };
            }
            let Some((r, _)) = leave else { return Err(LpError::Unbounded { column: j }) };
            if self.xb[r] < 0.0 {
                self.xb[r] = 0.0;
            }
            self.pivot(r, j, &alpha);
        }
    }

    /// Tie-break in the ratio test: smallest basic index under Bland's rule, otherwise the
    /// lexicographically smallest row of `B⁻¹ / α`, which rules out cycling under any
    /// entering rule.
    fn prefer_on_tie(&self, r: usize, incumbent: usize, alpha: &[f64], bland: bool) -> bool {
        if bland {
            return self.basis[r] < self.basis[incumbent];
        }
        let m = self.m;
        let (ar, ai) = (alpha[r], alpha[incumbent]);
        for k in 0..m {
            let u = self.binv[r * m + k] / ar;
            let v = self.binv[incumbent * m + k] / ai;
            if (u - v).abs() > 1e-12 * (1.0 + u.abs().max(v.abs())) {
                return u < v;
            }
        }
        self.basis[r] < self.basis[incumbent]
    }
}

/// One-shot solve.
pub fn solve(lp: &LinearProgram, opts: SimplexOptions) -> Result<LpSolution, LpError> {
    Simplex::solve(lp, opts).map(|(_, s)| s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn two_variable_toy() {
        let mut lp = LinearProgram::new(1);
        lp.add_column(vec![(0, 1.0)], 1.0);
        lp.add_column(vec![(0, 1.0)], 0.0);
        lp.set_rhs(0, 1.0);
        let s = solve(&lp, SimplexOptions::default()).unwrap();
        assert_eq!(s.x, vec![0.0, 1.0]);
        assert_eq!(s.objective, 0.0);
    }

    #[test]
    fn needs_phase_one_and_reports_duals() {
        // min -x1 - 2x2 s.t. x1 + x2 + s1 = 4, x1 + 3x2 + s2 = 6, with s1 absent from crash.
        let mut lp = LinearProgram::new(2);
        lp.add_column(vec![(0, 1.0), (1, 1.0)], -1.0);
        lp.add_column(vec![(0, 1.0), (1, 3.0)], -2.0);
        lp.add_column(vec![(0, 1.0), (1, 0.0)], 0.0);
        lp.add_column(vec![(1, 1.0)], 0.0);
        lp.set_rhs(0, 4.0);
        lp.set_rhs(1, 6.0);
        let s = solve(&lp, SimplexOptions::default()).unwrap();
        assert_abs_diff_eq!(s.objective, -5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.x[0], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.x[1], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.duals[0], -0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(s.duals[1], -0.5, epsilon = 1e-12);
        assert!(s.reduced_costs.iter().all(|&d| d >= -1e-12));
    }

    #[test]
    fn negative_rhs_and_infeasible() {
        let mut lp = LinearProgram::new(1);
        lp.add_column(vec![(0, -1.0)], 1.0);
        lp.set_rhs(0, -2.0);
        let s = solve(&lp, SimplexOptions::default()).unwrap();
        assert_abs_diff_eq!(s.x[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.duals[0], -1.0, epsilon = 1e-12);

        let mut bad = LinearProgram::new(1);
        bad.add_column(vec![(0, 1.0)], 0.0);
        bad.set_rhs(0, -1.0);
        assert!(matches!(solve(&bad, SimplexOptions::default()), Err(LpError::Infeasible { .. })));
    }

    #[test]
    fn unbounded_detected() {
        let mut lp = LinearProgram::new(1);
        lp.add_column(vec![(0, 1.0)], 0.0);
        lp.add_column(vec![(0, 1.0), (0, -1.0)], -1.0);
        lp.add_column(vec![(0, -1.0)], -1.0);
        lp.set_rhs(0, 1.0);
        assert!(matches!(solve(&lp, SimplexOptions::default()), Err(LpError::Unbounded { .. })));
    }

    #[test]
    fn degenerate_ties_are_deterministic() {
        // Two symmetric minima with equal cost; a redundant row.
        let mut lp = LinearProgram::new(3);
        lp.add_column(vec![(0, 1.0), (2, 1.0)], 0.0);
        lp.add_column(vec![(1, 1.0), (2, 1.0)], 0.0);
        lp.add_column(vec![(0, 1.0), (1, 1.0), (2, 2.0)], 1.0);
        lp.set_rhs(0, 0.5);
        lp.set_rhs(1, 0.5);
        lp.set_rhs(2, 1.0);
        let a = solve(&lp, SimplexOptions::default()).unwrap();
        let b = solve(&lp, SimplexOptions::default()).unwrap();
        assert_eq!(a.x, b.x);
        assert_abs_diff_eq!(a.objective, 0.0, epsilon = 1e-12);
        assert!(lp.residual(&a.x) < 1e-12);
    }

    #[test]
    fn warm_start_matches_cold_solve() {
        let mut lp = LinearProgram::new(2);
        for k in 0..6 {
            let t = k as f64;
            lp.add_column(vec![(0, 1.0), (1, t)], (t - 2.5).powi(2));
        }
        lp.set_rhs(0, 1.0);
        lp.set_rhs(1, 2.0);
        let (mut s, first) = Simplex::solve(&lp, SimplexOptions::default()).unwrap();
        assert!(lp.residual(&first.x) < 1e-12);
        let new_cost: Vec<f64> = (0..6).map(|k| -(k as f64)).collect();
        let warm = s.reoptimize(&new_cost).unwrap();
        let mut lp2 = lp.clone();
        lp2.cost = new_cost;
        let cold = solve(&lp2, SimplexOptions::default()).unwrap();
        assert_abs_diff_eq!(warm.objective, cold.objective, epsilon = 1e-12);
        assert!(lp.residual(&warm.x) < 1e-12);
    }

    #[test]
    fn dantzig_agrees_with_bland() {
        let mut lp = LinearProgram::new(3);
        let costs = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0];
        for (k, c) in costs.iter().enumerate() {
            let a = (k % 3) as f64 + 1.0;
            lp.add_column(vec![(0, 1.0), (1, a), (2, (k as f64) * 0.5)], *c);
        }
        lp.set_rhs(0, 1.0);
        lp.set_rhs(1, 2.0);
        lp.set_rhs(2, 1.5);
        let bland = solve(&lp, SimplexOptions::default()).unwrap();
        let opts = SimplexOptions { pricing: Pricing::Dantzig, ..Default::default() };
        let dantzig = solve(&lp, opts).unwrap();
        assert_abs_diff_eq!(bland.objective, dantzig.objective, epsilon = 1e-10);
    }
}
