//! The promise grid and the backward sweep that fills one value table per
//! step and assembles a promise-form scheme from the oracle's answers.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{deviation_values, DeviationValues, PersuasionMdp};
use crate::oracle::{approximate_oracle, OracleResult, TableValue, ValueTable};
use crate::scheme::{scheme_values, PromiseScheme};

/// Grids with more points than this are refused.
pub const MAX_GRID_POINTS: usize = 100_000;

/// Tolerance for recognizing exact grid multiples.
const GRID_SNAP: f64 = 1e-12;

/// Promise grid `{0, δ, 2δ, ..., ⌊H/δ⌋δ}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub delta: f64,
    pub num_points: usize,
}

impl GridSpec {
    pub fn new(delta: f64, horizon: usize) -> Result<Self> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "grid step must be positive, got {delta}"
            )));
        }
        let span = horizon as f64 / delta;
        if span >= MAX_GRID_POINTS as f64 {
            return Err(Error::InvalidArgument(format!(
                "grid step {delta} over horizon {horizon} needs more than {MAX_GRID_POINTS} points"
            )));
        }
        let num_points = (span + 1e-9).floor() as usize + 1;
        Ok(Self { delta, num_points })
    }

    /// The grid for target persuasiveness `epsilon`: `δ = ε / (2H)`.
    pub fn for_epsilon(epsilon: f64, horizon: usize) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        if horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be positive".into()));
        }
        Self::new(epsilon / (2.0 * horizon as f64), horizon)
    }

    pub fn value(&self, k: usize) -> f64 {
        k as f64 * self.delta
    }

    pub fn last(&self) -> usize {
        self.num_points - 1
    }
}

fn snapped(x: f64, grid: &GridSpec) -> Option<f64> {
    let r = x / grid.delta;
    let n = r.round();
    ((r - n).abs() <= GRID_SNAP * r.abs().max(1.0)).then_some(n)
}

/// Index of the largest grid point at or below `x`, clamped to the grid.
pub fn floor_to_grid(x: f64, grid: &GridSpec) -> usize {
    let idx = snapped(x, grid).unwrap_or_else(|| (x / grid.delta).floor());
    idx.clamp(0.0, grid.last() as f64) as usize
}

/// Index of the smallest grid point at or above `x`, clamped to the grid.
pub fn ceil_to_grid(x: f64, grid: &GridSpec) -> usize {
    let idx = snapped(x, grid).unwrap_or_else(|| (x / grid.delta).ceil());
    idx.clamp(0.0, grid.last() as f64) as usize
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DpOptions {
    /// Stop sweeping a `(h, s)` row after its first unrealizable promise.
    /// Only used while the row's solved values are nonincreasing; a row
    /// that breaks monotonicity is swept in full.
    pub skip_after_infeasible: bool,
    /// Solve the cells of one step on the rayon pool.
    pub parallel: bool,
}

impl Default for DpOptions {
    fn default() -> Self {
        Self {
            skip_after_infeasible: false,
            parallel: true,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub cells_solved: usize,
    pub infeasible_cells: usize,
    pub skipped_cells: usize,
    pub total_pivots: usize,
    /// Largest `|LP objective − relaxed value|` over solved cells.
    pub max_objective_gap: f64,
    pub wall_time_secs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub grid: GridSpec,
    pub scheme: PromiseScheme,
    /// `tables[h]` for `h in 0..=H`; the last one is the terminal table.
    pub tables: Vec<ValueTable>,
    /// `Σ_s β(s)·M_1(s, 0)`.
    pub sender_value: f64,
    /// `Σ_s β(s)·𝒱^S_1(s, 0)` of the assembled scheme.
    pub scheme_value: f64,
    pub diagnostics: Diagnostics,
}

fn solve_row(
    inst: &PersuasionMdp,
    dev: &DeviationValues,
    grid: &GridSpec,
    h: usize,
    s: usize,
    next: &ValueTable,
    skip: bool,
) -> Result<Vec<Option<OracleResult>>> {
    let mut out = Vec::with_capacity(grid.num_points);
    let mut last = f64::INFINITY;
    let mut monotone = true;
    let mut stopped = false;
    for k in 0..grid.num_points {
        if stopped && monotone {
            out.push(None);
            continue;
        }
        let r = approximate_oracle(inst, dev, h, s, grid.value(k) - grid.delta, next)?;
        match r.value {
            TableValue::Finite(v) => {
                if v > last + 1e-9 || stopped {
                    monotone = false;
                }
                last = v;
            }
            TableValue::Unrealizable => stopped = skip,
        }
        out.push(Some(r));
    }
    if stopped && !monotone {
        // The shortcut's premise failed: redo the row without it.
        return solve_row(inst, dev, grid, h, s, next, false);
    }
    Ok(out)
}

/// Runs the backward sweep for target persuasiveness `epsilon`.
pub fn dp_solve(inst: &PersuasionMdp, epsilon: f64) -> Result<SolveResult> {
    dp_solve_with(inst, epsilon, DpOptions::default())
}

pub fn dp_solve_with(inst: &PersuasionMdp, epsilon: f64, opts: DpOptions) -> Result<SolveResult> {
    inst.ensure_valid()?;
    let grid = GridSpec::for_epsilon(epsilon, inst.horizon)?;
    dp_solve_on_grid(inst, grid, opts)
}

/// Runs the backward sweep on an explicit grid.
pub fn dp_solve_on_grid(inst: &PersuasionMdp, grid: GridSpec, opts: DpOptions) -> Result<SolveResult> {
    let start = Instant::now();
    let (hz, ns, na, no) = (
        inst.horizon,
        inst.num_states(),
        inst.num_actions(),
        inst.num_observations(),
    );
    let dev = deviation_values(inst);
    let mut tables = vec![ValueTable::terminal(ns, &grid); hz + 1];
    let mut diagnostics = Diagnostics::default();

    let uniform = vec![vec![1.0 / na as f64; na]; no];
    let mut promise_sets = vec![vec![Vec::new(); ns]; hz];
    let mut recommend = vec![vec![vec![uniform.clone(); grid.num_points]; ns]; hz];
    let mut next_promise = vec![vec![vec![vec![vec![0usize; ns]; grid.num_points]; na]; ns]; hz];

    for h in (0..hz).rev() {
        let next = &tables[h + 1];
        let solve = |s: usize| solve_row(inst, &dev, &grid, h, s, next, opts.skip_after_infeasible);
        let rows: Vec<Vec<Option<OracleResult>>> = if opts.parallel {
            (0..ns).into_par_iter().map(solve).collect::<Result<_>>()?
        } else {
            (0..ns).map(solve).collect::<Result<_>>()?
        };
        let mut table = ValueTable {
            delta: grid.delta,
            entries: vec![vec![TableValue::Unrealizable; grid.num_points]; ns],
        };
        for (s, row) in rows.into_iter().enumerate() {
            for (k, cell) in row.into_iter().enumerate() {
                let Some(r) = cell else {
                    diagnostics.skipped_cells += 1;
                    continue;
                };
                diagnostics.cells_solved += 1;
                diagnostics.total_pivots += r.pivots;
                table.entries[s][k] = r.value;
                match r.value {
                    TableValue::Finite(v) => {
                        if let Some(obj) = r.lp_objective {
                            diagnostics.max_objective_gap = diagnostics.max_objective_gap.max((obj - v).abs());
                        }
                        promise_sets[h][s].push(k);
                        recommend[h][s][k] = r.kappa;
                        for (a, qa) in r.q.into_iter().enumerate() {
                            for (sn, g) in qa.into_iter().enumerate() {
                                next_promise[h][s][a][k][sn] = g;
                            }
                        }
                    }
                    TableValue::Unrealizable => diagnostics.infeasible_cells += 1,
                }
            }
        }
        tables[h] = table;
    }

    let mut sets = promise_sets;
    sets.push(vec![vec![0]; ns]);
    let scheme = PromiseScheme {
        delta: grid.delta,
        promise_sets: sets,
        recommend,
        next_promise,
    };
    scheme.validate(inst)?;

    let mut sender_value = 0.0;
    for (s, &b) in inst.beta.iter().enumerate() {
        match tables[0].get(s, 0) {
            TableValue::Finite(v) => sender_value += b * v,
            TableValue::Unrealizable => {
                return Err(Error::Internal(format!(
                    "promise 0 is unrealizable at the first step in state {s}"
                )))
            }
        }
    }
    let values = scheme_values(inst, &scheme)?;
    let scheme_value = values.sender_value(inst);
    diagnostics.wall_time_secs = start.elapsed().as_secs_f64();
    Ok(SolveResult {
        grid,
        scheme,
        tables,
        sender_value,
        scheme_value,
        diagnostics,
    })
}
