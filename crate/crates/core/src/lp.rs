//! Dense two-phase tableau simplex.
//!
//! Maximizes `c·x` subject to `A_eq x = b_eq`, `A_ge x ≥ b_ge`, `x ≥ 0`.
//! Pivoting follows Bland's rule in both phases, so the method terminates on
//! degenerate programs. Callers go through [`LpBackend`] so that another
//! backend (exact arithmetic, say) can replace [`DenseSimplex`].

use crate::error::{Error, Result};

/// A linear program over nonnegative variables.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearProgram {
    num_vars: usize,
    objective: Vec<f64>,
    eq_rows: Vec<Vec<f64>>,
    eq_rhs: Vec<f64>,
    ge_rows: Vec<Vec<f64>>,
    ge_rhs: Vec<f64>,
}

impl LinearProgram {
    pub fn new(num_vars: usize) -> Self {
        Self {
            num_vars,
            objective: vec![0.0; num_vars],
            eq_rows: Vec::new(),
            eq_rhs: Vec::new(),
            ge_rows: Vec::new(),
            ge_rhs: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn set_objective(&mut self, var: usize, coef: f64) {
        self.objective[var] = coef;
    }

    fn dense(&self, terms: &[(usize, f64)]) -> Vec<f64> {
        let mut row = vec![0.0; self.num_vars];
        for &(j, c) in terms {
            row[j] += c;
        }
        row
    }

    /// Adds `Σ coef·x_j = rhs`. Repeated indices are summed.
    pub fn add_eq(&mut self, terms: &[(usize, f64)], rhs: f64) {
        let row = self.dense(terms);
        self.eq_rows.push(row);
        self.eq_rhs.push(rhs);
    }

    /// Adds `Σ coef·x_j ≥ rhs`. Repeated indices are summed.
    pub fn add_ge(&mut self, terms: &[(usize, f64)], rhs: f64) {
        let row = self.dense(terms);
        self.ge_rows.push(row);
        self.ge_rhs.push(rhs);
    }

    pub fn eq_constraints(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.eq_rows.iter().map(Vec::as_slice).zip(self.eq_rhs.iter().copied())
    }

    pub fn ge_constraints(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.ge_rows.iter().map(Vec::as_slice).zip(self.ge_rhs.iter().copied())
    }

    pub fn num_eq(&self) -> usize {
        self.eq_rows.len()
    }

    pub fn num_ge(&self) -> usize {
        self.ge_rows.len()
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        dot(&self.objective, x)
    }

    /// Largest violation of any constraint (including `x ≥ 0`) at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = x.iter().fold(0.0_f64, |w, &v| w.max(-v));
        for (row, b) in self.eq_constraints() {
            worst = worst.max((dot(row, x) - b).abs());
        }
        for (row, b) in self.ge_constraints() {
            worst = worst.max(b - dot(row, x));
        }
        worst
    }

    pub fn check(&self) -> Result<()> {
        let rows_ok = self
            .eq_rows
            .iter()
            .chain(&self.ge_rows)
            .all(|r| r.len() == self.num_vars && r.iter().all(|c| c.is_finite()));
        let rest_ok = self.objective.len() == self.num_vars
            && self.objective.iter().all(|c| c.is_finite())
            && self.eq_rhs.iter().chain(&self.ge_rhs).all(|b| b.is_finite());
        if rows_ok && rest_ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(
                "linear program has inconsistent dimensions or non-finite coefficients".into(),
            ))
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpOutcome {
    pub status: LpStatus,
    /// Optimal point; empty unless `status == Optimal`.
    pub x: Vec<f64>,
    pub objective: f64,
    pub pivots: usize,
}

impl LpOutcome {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

pub trait LpBackend {
    fn solve(&mut self, lp: &LinearProgram) -> LpOutcome;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimplexTolerances {
    /// Phase-1 infeasibility above this is reported as infeasible.
    pub feasibility: f64,
    /// Smallest magnitude accepted as a pivot element.
    pub pivot: f64,
    /// Reduced costs above this count as improving.
    pub optimality: f64,
}

impl Default for SimplexTolerances {
    fn default() -> Self {
        Self {
            feasibility: 1e-7,
            pivot: 1e-10,
            optimality: 1e-9,
        }
    }
}

/// Dense tableau simplex with per-solve scratch space.
#[derive(Debug, Default)]
pub struct DenseSimplex {
    pub tol: SimplexTolerances,
    tab: Vec<f64>,
    width: usize,
    rows: usize,
    basis: Vec<usize>,
    cost: Vec<f64>,
    pivots: usize,
}

impl LpBackend for DenseSimplex {
    fn solve(&mut self, lp: &LinearProgram) -> LpOutcome {
        self.run(lp)
    }
}

/// Solves `lp` with a fresh [`DenseSimplex`].
pub fn lp_solve(lp: &LinearProgram) -> LpOutcome {
    DenseSimplex::default().solve(lp)
}

enum Step {
    Optimal,
    Unbounded,
}

impl DenseSimplex {
    pub fn with_tolerances(tol: SimplexTolerances) -> Self {
        Self { tol, ..Self::default() }
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.tab[i * self.width + j]
    }

    fn run(&mut self, lp: &LinearProgram) -> LpOutcome {
        let n = lp.num_vars;
        let n_ge = lp.num_ge();
        let m = lp.num_eq() + n_ge;

        // Columns: originals, one surplus per ≥ row, one artificial per row
        // that lacks a usable slack, then the right-hand side.
        let mut needs_art = Vec::with_capacity(m);
        let mut signed: Vec<(Vec<f64>, f64, Option<usize>)> = Vec::with_capacity(m);
        for (row, b) in lp.eq_constraints() {
            let (row, b) = if b < 0.0 {
                (row.iter().map(|c| -c).collect(), -b)
            } else {
                (row.to_vec(), b)
            };
            signed.push((row, b, None));
            needs_art.push(true);
        }
        for (k, (row, b)) in lp.ge_constraints().enumerate() {
            if b <= 0.0 {
                // -a·x + s = -b ≥ 0: the surplus column is a ready basic variable.
                signed.push((row.iter().map(|c| -c).collect(), -b, Some(k)));
                needs_art.push(false);
            } else {
                signed.push((row.to_vec(), b, Some(k)));
                needs_art.push(true);
            }
        }
        let n_art = needs_art.iter().filter(|&&x| x).count();
        let art0 = n + n_ge;
        let cols = art0 + n_art;
        self.width = cols + 1;
        self.rows = m;
        self.tab.clear();
        self.tab.resize(m * self.width, 0.0);
        self.basis.clear();
        self.pivots = 0;

        let mut next_art = art0;
        for (i, (row, b, surplus)) in signed.iter().enumerate() {
            let base = i * self.width;
            self.tab[base..base + n].copy_from_slice(row);
            if let Some(k) = surplus {
                self.tab[base + n + k] = if needs_art[i] { -1.0 } else { 1.0 };
            }
            self.tab[base + cols] = *b;
            if needs_art[i] {
                self.tab[base + next_art] = 1.0;
                self.basis.push(next_art);
                next_art += 1;
            } else {
                self.basis.push(n + surplus.expect("slack rows carry a surplus"));
            }
        }

        // Phase 1: maximize -Σ artificials.
        if n_art > 0 {
            self.cost = vec![0.0; self.width];
            for c in &mut self.cost[art0..cols] {
                *c = -1.0;
            }
            self.price_out();
            if let Step::Unbounded = self.iterate(cols) {
                // Phase 1 is bounded above by zero; reaching here means numerical trouble.
                return self.outcome(LpStatus::Infeasible, lp);
            }
            let infeasibility = self.cost[cols];
            if infeasibility > self.tol.feasibility {
                return self.outcome(LpStatus::Infeasible, lp);
            }
            self.expel_artificials(art0);
        }

        // Phase 2 on the original objective; artificial columns may not re-enter.
        self.cost = vec![0.0; self.width];
        self.cost[..n].copy_from_slice(&lp.objective);
        self.price_out();
        match self.iterate(art0) {
            Step::Optimal => self.outcome(LpStatus::Optimal, lp),
            Step::Unbounded => self.outcome(LpStatus::Unbounded, lp),
        }
    }

    /// Turns `cost` (holding raw costs) into reduced costs for the current
    /// basis. The last entry ends up as `-z` for the current objective `z`.
    fn price_out(&mut self) {
        let cols = self.width - 1;
        for i in 0..self.rows {
            let cb = self.cost[self.basis[i]];
            if cb == 0.0 {
                continue;
            }
            let base = i * self.width;
            for j in 0..=cols {
                self.cost[j] -= cb * self.tab[base + j];
            }
        }
    }

    fn iterate(&mut self, allowed: usize) -> Step {
        let rhs = self.width - 1;
        loop {
            // Bland: lowest-index improving column.
            let Some(e) = (0..allowed).find(|&j| self.cost[j] > self.tol.optimality) else {
                return Step::Optimal;
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows {
                let a = self.at(i, e);
                if a <= self.tol.pivot {
                    continue;
                }
                let ratio = self.at(i, rhs).max(0.0) / a;
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((r, best)) => {
                        let tie = (ratio - best).abs() <= 1e-12 * best.abs().max(1.0);
                        if (!tie && ratio < best) || (tie && self.basis[i] < self.basis[r]) {
                            Some((i, ratio))
                        } else {
                            Some((r, best))
                        }
                    }
                };
            }
            let Some((r, _)) = leave else {
                return Step::Unbounded;
            };
            self.pivot(r, e);
        }
    }

    fn pivot(&mut self, r: usize, e: usize) {
        let w = self.width;
        let inv = 1.0 / self.tab[r * w + e];
        for v in &mut self.tab[r * w..(r + 1) * w] {
            *v *= inv;
        }
        self.tab[r * w + e] = 1.0;
        let pivot_row: Vec<f64> = self.tab[r * w..(r + 1) * w].to_vec();
        for i in 0..self.rows {
            if i == r {
                continue;
            }
            let f = self.tab[i * w + e];
            if f == 0.0 {
                continue;
            }
            let row = &mut self.tab[i * w..(i + 1) * w];
            for (v, p) in row.iter_mut().zip(&pivot_row) {
                *v -= f * p;
            }
            row[e] = 0.0;
        }
        let f = self.cost[e];
        if f != 0.0 {
            for (v, p) in self.cost.iter_mut().zip(&pivot_row) {
                *v -= f * p;
            }
            self.cost[e] = 0.0;
        }
        self.basis[r] = e;
        self.pivots += 1;
    }

    /// Pivots zero-level artificials out of the basis; rows where that is
    /// impossible are linearly dependent and get dropped.
    fn expel_artificials(&mut self, art0: usize) {
        let mut i = 0;
        while i < self.rows {
            if self.basis[i] < art0 {
                i += 1;
                continue;
            }
            let candidate = (0..art0)
                .filter(|&j| self.at(i, j).abs() > self.tol.pivot)
                .max_by(|&a, &b| self.at(i, a).abs().total_cmp(&self.at(i, b).abs()));
            match candidate {
                Some(j) => {
                    self.pivot(i, j);
                    i += 1;
                }
                None => self.drop_row(i),
            }
        }
    }

    fn drop_row(&mut self, i: usize) {
        let w = self.width;
        self.tab.drain(i * w..(i + 1) * w);
        self.basis.remove(i);
        self.rows -= 1;
    }

    fn outcome(&self, status: LpStatus, lp: &LinearProgram) -> LpOutcome {
        if status != LpStatus::Optimal {
            return LpOutcome {
                status,
                x: Vec::new(),
                objective: match status {
                    LpStatus::Unbounded => f64::INFINITY,
                    _ => f64::NEG_INFINITY,
                },
                pivots: self.pivots,
            };
        }
        let n = lp.num_vars;
        let rhs = self.width - 1;
        let mut x = vec![0.0; n];
        for i in 0..self.rows {
            let j = self.basis[i];
            if j < n {
                x[j] = self.at(i, rhs).max(0.0);
            }
        }
        LpOutcome {
            status,
            objective: lp.evaluate(&x),
            x,
            pivots: self.pivots,
        }
    }
}
