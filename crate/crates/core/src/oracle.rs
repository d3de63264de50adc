//! The per-cell oracle: a linear relaxation over randomized promises, the
//! mapping from its solution to a recommendation kernel and promise lotteries,
//! and the rounding of those lotteries to deterministic grid promises.

use serde::{Deserialize, Serialize};

use crate::dp::GridSpec;
use crate::error::{Error, Result};
use crate::lp::{DenseSimplex, LinearProgram, LpBackend, LpStatus};
use crate::mdp::{DeviationValues, PersuasionMdp};

/// Marginals at or below this are treated as zero when normalizing promise
/// lotteries.
pub const MARGINAL_EPS: f64 = 1e-12;

/// Tolerance, in grid-index units, for snapping an expected promise onto a
/// grid point before flooring. Simplex output carries ~1e-12 noise that would
/// otherwise push an exact grid mean one step down.
pub const SNAP_TOL: f64 = 1e-9;

/// A table entry: a finite sender value or an unrealizable promise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "Option<f64>", into = "Option<f64>")]
pub enum TableValue {
    Finite(f64),
    Unrealizable,
}

impl From<Option<f64>> for TableValue {
    fn from(v: Option<f64>) -> Self {
        v.map_or(TableValue::Unrealizable, TableValue::Finite)
    }
}

impl From<TableValue> for Option<f64> {
    fn from(v: TableValue) -> Self {
        v.finite()
    }
}

impl TableValue {
    pub fn finite(self) -> Option<f64> {
        match self {
            TableValue::Finite(v) => Some(v),
            TableValue::Unrealizable => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, TableValue::Finite(_))
    }
}

/// Sender values indexed by next state and grid promise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueTable {
    pub delta: f64,
    /// `entries[s][k]`.
    pub entries: Vec<Vec<TableValue>>,
}

impl ValueTable {
    /// The terminal table: promise 0 is worth 0, every other promise is
    /// unrealizable.
    pub fn terminal(num_states: usize, grid: &GridSpec) -> Self {
        let mut row = vec![TableValue::Unrealizable; grid.num_points];
        row[0] = TableValue::Finite(0.0);
        Self {
            delta: grid.delta,
            entries: vec![row; num_states],
        }
    }

    pub fn get(&self, s: usize, k: usize) -> TableValue {
        self.entries[s][k]
    }

    pub fn realizable_set(&self, s: usize) -> Vec<usize> {
        self.entries[s]
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .map(|(k, _)| k)
            .collect()
    }
}

/// Output of one oracle call. Unrealizable cells carry a uniform kernel and
/// promise 0 everywhere.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    /// `kappa[θ][a]`.
    pub kappa: Vec<Vec<f64>>,
    /// `q[a][s']`: deterministic grid promise index.
    pub q: Vec<Vec<usize>>,
    pub value: TableValue,
    /// `relaxed_q[a][s'][k']`: promise lotteries over the grid.
    pub relaxed_q: Vec<Vec<Vec<f64>>>,
    /// Value of the relaxed problem at the returned solution.
    pub omega: TableValue,
    /// Objective reported by the LP solver (absent when infeasible).
    pub lp_objective: Option<f64>,
    pub pivots: usize,
}

/// The oracle LP together with the position of each variable.
#[derive(Clone, Debug)]
pub struct OracleLp {
    pub lp: LinearProgram,
    /// `xi[a][θ]`: the joint mass of observation θ and recommendation a.
    pub xi: Vec<Vec<usize>>,
    /// `z[a][s']`: `(k', var)` for every realizable promise `k'` of `s'`.
    pub z: Vec<Vec<Vec<(usize, usize)>>>,
}

impl OracleLp {
    pub fn num_vars(&self) -> usize {
        self.lp.num_vars()
    }
}

/// Builds the LP for cell `(h, s)` with honesty threshold `iota_value`.
///
/// Variables `ξ[a][θ] = κ(a|θ)` and `z[a][s'][k']`, the probability mass of
/// moving to `s'` after `a` carrying promise `k'`. Constraints: honesty, one
/// persuasiveness row per ordered action pair, marginal consistency of `z`
/// with `ξ`, and one simplex row per observation.
pub fn build_oracle_lp(
    inst: &PersuasionMdp,
    dev: &DeviationValues,
    h: usize,
    s: usize,
    iota_value: f64,
    table: &ValueTable,
) -> OracleLp {
    let (ns, na, no) = (inst.num_states(), inst.num_actions(), inst.num_observations());
    let delta = table.delta;
    let realizable: Vec<Vec<usize>> = (0..ns).map(|sn| table.realizable_set(sn)).collect();
    let mut n = 0;
    let xi: Vec<Vec<usize>> = (0..na)
        .map(|_| {
            (0..no)
                .map(|_| {
                    n += 1;
                    n - 1
                })
                .collect()
        })
        .collect();
    let z: Vec<Vec<Vec<(usize, usize)>>> = (0..na)
        .map(|_| {
            realizable
                .iter()
                .map(|ks| {
                    ks.iter()
                        .map(|&k| {
                            n += 1;
                            (k, n - 1)
                        })
                        .collect()
                })
                .collect()
        })
        .collect();

    let mu = &inst.mu[h][s];
    let mut lp = LinearProgram::new(n);
    for a in 0..na {
        for t in 0..no {
            lp.set_objective(xi[a][t], mu[t] * inst.sender_reward[h][s][a][t]);
        }
        for sn in 0..ns {
            for &(k, var) in &z[a][sn] {
                let m = table.get(sn, k).finite().expect("realizable entry");
                lp.set_objective(var, m);
            }
        }
    }

    // Promised continuation Σ_{s',k'} k'δ·z[a][s'][k'] for one action.
    let promised = |a: usize, terms: &mut Vec<(usize, f64)>| {
        for zs in &z[a] {
            for &(k, var) in zs {
                if k > 0 {
                    terms.push((var, k as f64 * delta));
                }
            }
        }
    };

    let mut terms = Vec::new();
    for a in 0..na {
        for t in 0..no {
            let c = mu[t] * inst.receiver_reward[h][s][a][t];
            if c != 0.0 {
                terms.push((xi[a][t], c));
            }
        }
        promised(a, &mut terms);
    }
    lp.add_ge(&terms, iota_value);

    for a in 0..na {
        for a_dev in 0..na {
            terms.clear();
            for t in 0..no {
                let c = mu[t] * (inst.receiver_reward[h][s][a][t] - dev.deviation_payoff(inst, h, s, a_dev, t));
                if c != 0.0 {
                    terms.push((xi[a][t], c));
                }
            }
            promised(a, &mut terms);
            lp.add_ge(&terms, 0.0);
        }
    }

    for a in 0..na {
        for sn in 0..ns {
            terms.clear();
            terms.extend(z[a][sn].iter().map(|&(_, var)| (var, 1.0)));
            for t in 0..no {
                let c = mu[t] * inst.transition[h][s][a][t][sn];
                if c != 0.0 {
                    terms.push((xi[a][t], -c));
                }
            }
            lp.add_eq(&terms, 0.0);
        }
    }

    for t in 0..no {
        terms.clear();
        terms.extend((0..na).map(|a| (xi[a][t], 1.0)));
        lp.add_eq(&terms, 1.0);
    }

    OracleLp { lp, xi, z }
}

/// Probability of recommending `a` and then moving to `s'`.
pub fn reach_probability(inst: &PersuasionMdp, h: usize, s: usize, kappa: &[Vec<f64>], a: usize, s_next: usize) -> f64 {
    inst.mu[h][s]
        .iter()
        .enumerate()
        .map(|(t, w)| w * kappa[t][a] * inst.transition[h][s][a][t][s_next])
        .sum()
}

/// Maps an LP point to a kernel `κ[θ][a]` and promise lotteries
/// `q̃[a][s'][k']` over `num_points` grid indices. Rows of `q̃` are `z`
/// normalized by the reach probability, or a point mass on promise 0 where
/// that probability vanishes.
pub fn lp_solution_to_relaxed(
    inst: &PersuasionMdp,
    h: usize,
    s: usize,
    olp: &OracleLp,
    x: &[f64],
    num_points: usize,
) -> (Vec<Vec<f64>>, Vec<Vec<Vec<f64>>>) {
    let (ns, na, no) = (inst.num_states(), inst.num_actions(), inst.num_observations());
    let kappa: Vec<Vec<f64>> = (0..no)
        .map(|t| {
            let row: Vec<f64> = (0..na).map(|a| x[olp.xi[a][t]].max(0.0)).collect();
            let sum: f64 = row.iter().sum();
            if sum > 0.0 {
                row.iter().map(|v| v / sum).collect()
            } else {
                vec![1.0 / na as f64; na]
            }
        })
        .collect();
    let relaxed = (0..na)
        .map(|a| {
            (0..ns)
                .map(|sn| {
                    let mut row = vec![0.0; num_points];
                    let marginal = reach_probability(inst, h, s, &kappa, a, sn);
                    let mass: f64 = olp.z[a][sn].iter().map(|&(_, var)| x[var].max(0.0)).sum();
                    if marginal > MARGINAL_EPS && mass > 0.0 {
                        for &(k, var) in &olp.z[a][sn] {
                            row[k] = x[var].max(0.0) / mass;
                        }
                    } else {
                        row[0] = 1.0;
                    }
                    row
                })
                .collect()
        })
        .collect();
    (kappa, relaxed)
}

/// Index of `⌊Σ_k k·w_k⌋` on the grid.
pub fn floor_mean_index(weights: &[f64]) -> usize {
    let mean: f64 = weights.iter().enumerate().map(|(k, w)| k as f64 * w).sum();
    let nearest = mean.round();
    let idx = if (mean - nearest).abs() <= SNAP_TOL {
        nearest
    } else {
        mean.floor()
    };
    (idx.max(0.0) as usize).min(weights.len().saturating_sub(1))
}

/// Rounds every promise lottery down to the grid point below its mean.
pub fn derandomize(relaxed_q: &[Vec<Vec<f64>>]) -> Vec<Vec<usize>> {
    relaxed_q
        .iter()
        .map(|rows| rows.iter().map(|w| floor_mean_index(w)).collect())
        .collect()
}

/// Sender objective with deterministic promises. Unrealizable when a pair
/// `(a, s')` reached with probability above [`MARGINAL_EPS`] is sent to an
/// unrealizable promise.
pub fn evaluate_f(
    inst: &PersuasionMdp,
    h: usize,
    s: usize,
    kappa: &[Vec<f64>],
    q: &[Vec<usize>],
    table: &ValueTable,
) -> TableValue {
    let (ns, na) = (inst.num_states(), inst.num_actions());
    let mut total: f64 = inst.mu[h][s]
        .iter()
        .enumerate()
        .map(|(t, w)| {
            (0..na)
                .map(|a| w * kappa[t][a] * inst.sender_reward[h][s][a][t])
                .sum::<f64>()
        })
        .sum();
    for a in 0..na {
        for sn in 0..ns {
            let reach = reach_probability(inst, h, s, kappa, a, sn);
            if reach <= MARGINAL_EPS {
                continue;
            }
            match table.get(sn, q[a][sn]) {
                TableValue::Finite(m) => total += reach * m,
                TableValue::Unrealizable => return TableValue::Unrealizable,
            }
        }
    }
    TableValue::Finite(total)
}

/// Sender objective with promise lotteries; lotteries must be supported on
/// realizable promises.
pub fn evaluate_f_relaxed(
    inst: &PersuasionMdp,
    h: usize,
    s: usize,
    kappa: &[Vec<f64>],
    relaxed_q: &[Vec<Vec<f64>>],
    table: &ValueTable,
) -> TableValue {
    let q_expected: Vec<Vec<TableValue>> = relaxed_q
        .iter()
        .map(|rows| {
            rows.iter()
                .enumerate()
                .map(|(sn, w)| {
                    let mut acc = 0.0;
                    for (k, &p) in w.iter().enumerate() {
                        if p == 0.0 {
                            continue;
                        }
                        match table.get(sn, k) {
                            TableValue::Finite(m) => acc += p * m,
                            TableValue::Unrealizable => return TableValue::Unrealizable,
                        }
                    }
                    TableValue::Finite(acc)
                })
                .collect()
        })
        .collect();
    let (ns, na) = (inst.num_states(), inst.num_actions());
    let mut total = 0.0;
    for (t, &w) in inst.mu[h][s].iter().enumerate() {
        for a in 0..na {
            total += w * kappa[t][a] * inst.sender_reward[h][s][a][t];
        }
    }
    for a in 0..na {
        for sn in 0..ns {
            let reach = reach_probability(inst, h, s, kappa, a, sn);
            if reach <= MARGINAL_EPS {
                continue;
            }
            match q_expected[a][sn] {
                TableValue::Finite(m) => total += reach * m,
                TableValue::Unrealizable => return TableValue::Unrealizable,
            }
        }
    }
    TableValue::Finite(total)
}

/// How far a pair `(κ, q)` is from the cell's constraint set: `honesty` is
/// left minus right of the honesty row, `persuasion` the smallest left minus
/// right over all action pairs. Both are nonnegative when feasible.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintMargins {
    pub honesty: f64,
    pub persuasion: f64,
}

/// Margins of the deterministic constraints at `(κ, q)` with promise values
/// `k·δ` and honesty threshold `iota_value`.
#[allow(clippy::too_many_arguments)]
pub fn constraint_margins(
    inst: &PersuasionMdp,
    dev: &DeviationValues,
    h: usize,
    s: usize,
    delta: f64,
    iota_value: f64,
    kappa: &[Vec<f64>],
    q: &[Vec<usize>],
) -> ConstraintMargins {
    let na = inst.num_actions();
    let mu = &inst.mu[h][s];
    let follow: Vec<f64> = (0..na)
        .map(|a| {
            mu.iter()
                .enumerate()
                .map(|(t, w)| {
                    let promised: f64 = inst.transition[h][s][a][t]
                        .iter()
                        .zip(&q[a])
                        .map(|(p, &k)| p * k as f64 * delta)
                        .sum();
                    w * kappa[t][a] * (inst.receiver_reward[h][s][a][t] + promised)
                })
                .sum()
        })
        .collect();
    let honesty = follow.iter().sum::<f64>() - iota_value;
    let mut persuasion = f64::INFINITY;
    for a in 0..na {
        for a_dev in 0..na {
            let deviate: f64 = mu
                .iter()
                .enumerate()
                .map(|(t, w)| w * kappa[t][a] * dev.deviation_payoff(inst, h, s, a_dev, t))
                .sum();
            persuasion = persuasion.min(follow[a] - deviate);
        }
    }
    ConstraintMargins { honesty, persuasion }
}

fn placeholder(inst: &PersuasionMdp, num_points: usize, pivots: usize, lp_objective: Option<f64>) -> OracleResult {
    let (ns, na, no) = (inst.num_states(), inst.num_actions(), inst.num_observations());
    let mut point = vec![0.0; num_points];
    point[0] = 1.0;
    OracleResult {
        kappa: vec![vec![1.0 / na as f64; na]; no],
        q: vec![vec![0; ns]; na],
        value: TableValue::Unrealizable,
        relaxed_q: vec![vec![point; ns]; na],
        omega: TableValue::Unrealizable,
        lp_objective,
        pivots,
    }
}

/// Solves the relaxed problem for cell `(h, s)` at threshold `iota_value`
/// against the next-step table, and rounds its promises down to the grid.
pub fn approximate_oracle(
    inst: &PersuasionMdp,
    dev: &DeviationValues,
    h: usize,
    s: usize,
    iota_value: f64,
    table: &ValueTable,
) -> Result<OracleResult> {
    let num_points = table.entries.first().map_or(1, Vec::len);
    let olp = build_oracle_lp(inst, dev, h, s, iota_value, table);
    let out = DenseSimplex::default().solve(&olp.lp);
    match out.status {
        LpStatus::Unbounded => Err(Error::UnboundedOracle { step: h, state: s }),
        LpStatus::Infeasible => Ok(placeholder(inst, num_points, out.pivots, None)),
        LpStatus::Optimal => {
            let (kappa, relaxed_q) = lp_solution_to_relaxed(inst, h, s, &olp, &out.x, num_points);
            let omega = evaluate_f_relaxed(inst, h, s, &kappa, &relaxed_q, table);
            let q = derandomize(&relaxed_q);
            Ok(OracleResult {
                kappa,
                q,
                value: omega,
                relaxed_q,
                omega,
                lp_objective: Some(out.objective),
                pivots: out.pivots,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::deviation_values;
    use crate::mdp::tests::small_instance;

    fn degenerate() -> PersuasionMdp {
        PersuasionMdp::from_tables(
            1,
            vec![1.0],
            vec![vec![vec![1.0]]],
            vec![vec![vec![vec![0.3]]]],
            vec![vec![vec![vec![0.6]]]],
            vec![vec![vec![vec![vec![1.0]]]]],
        )
    }

    #[test]
    fn degenerate_lp_has_two_variables() {
        let inst = degenerate();
        let grid = GridSpec::new(0.5, 1).unwrap();
        let table = ValueTable::terminal(1, &grid);
        let dev = deviation_values(&inst);
        let olp = build_oracle_lp(&inst, &dev, 0, 0, 0.0, &table);
        assert_eq!(olp.num_vars(), 2);
        let hi = approximate_oracle(&inst, &dev, 0, 0, 0.6 + 1e-6, &table).unwrap();
        assert_eq!(hi.value, TableValue::Unrealizable);
        let lo = approximate_oracle(&inst, &dev, 0, 0, 0.6, &table).unwrap();
        assert!((lo.value.finite().unwrap() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn negative_threshold_is_slack() {
        let mut inst = small_instance();
        for table in [&mut inst.sender_reward, &mut inst.receiver_reward] {
            table.iter_mut().flatten().flatten().flatten().for_each(|r| *r = 0.0);
        }
        let grid = GridSpec::new(0.25, 2).unwrap();
        let table = ValueTable::terminal(2, &grid);
        let dev = deviation_values(&inst);
        let r = approximate_oracle(&inst, &dev, 1, 0, -0.25, &table).unwrap();
        assert_eq!(r.value, TableValue::Finite(0.0));
        let olp = build_oracle_lp(&inst, &dev, 1, 0, -0.25, &table);
        let (row, rhs) = olp.lp.ge_constraints().next().unwrap();
        assert!(row.iter().all(|&c| c >= 0.0) && rhs < 0.0);
    }

    #[test]
    fn unattainable_promise_is_unrealizable() {
        let inst = small_instance();
        let grid = GridSpec::new(0.5, 2).unwrap();
        let table = ValueTable::terminal(2, &grid);
        let dev = deviation_values(&inst);
        let r = approximate_oracle(&inst, &dev, 1, 1, 3.0, &table).unwrap();
        assert_eq!(r.value, TableValue::Unrealizable);
        assert_eq!(r.kappa, vec![vec![0.5, 0.5]; 2]);
        assert!(r.q.iter().flatten().all(|&k| k == 0));
    }

    #[test]
    fn zero_marginal_falls_back_to_promise_zero() {
        let inst = small_instance();
        let olp = OracleLp {
            lp: LinearProgram::new(0),
            xi: vec![vec![0, 1], vec![2, 3]],
            z: vec![vec![vec![(0, 4), (1, 5)]; 2], vec![vec![(0, 6), (1, 7)]; 2]],
        };
        // Action 1 is never recommended; action 0 splits over promises 0 and 1.
        let x = [1.0, 1.0, 0.0, 0.0, 0.2, 0.3, 0.0, 0.0];
        let (kappa, relaxed) = lp_solution_to_relaxed(&inst, 0, 0, &olp, &x, 3);
        assert_eq!(kappa, vec![vec![1.0, 0.0]; 2]);
        assert_eq!(relaxed[1][0], vec![1.0, 0.0, 0.0]);
        assert!((relaxed[0][0][1] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn rounding_takes_the_floor_of_the_mean() {
        // δ = 0.1: index 3 is 0.3.
        let mut point = vec![0.0; 5];
        point[3] = 1.0;
        assert_eq!(floor_mean_index(&point), 3);
        let mut half = vec![0.0; 5];
        half[2] = 0.5;
        half[3] = 0.5;
        assert_eq!(floor_mean_index(&half), 2);
        let noisy = [0.0, 0.0, 1e-13, 1.0 - 1e-13];
        assert_eq!(floor_mean_index(&noisy), 3);
    }

    #[test]
    fn relaxed_value_matches_lp_objective() {
        let inst = small_instance();
        let grid = GridSpec::new(0.25, 2).unwrap();
        let dev = deviation_values(&inst);
        let terminal = ValueTable::terminal(2, &grid);
        let mut next = terminal.clone();
        for s in 0..2 {
            for k in 0..grid.num_points {
                let r = approximate_oracle(&inst, &dev, 1, s, grid.value(k) - grid.delta, &terminal).unwrap();
                next.entries[s][k] = r.value;
            }
        }
        for k in 0..grid.num_points {
            let r = approximate_oracle(&inst, &dev, 0, 0, grid.value(k) - grid.delta, &next).unwrap();
            if let (Some(v), Some(obj)) = (r.value.finite(), r.lp_objective) {
                assert!((v - obj).abs() < 1e-9, "{v} vs {obj}");
                assert!(r.kappa.iter().all(|row| (row.iter().sum::<f64>() - 1.0).abs() < 1e-9));
            }
        }
    }
}
