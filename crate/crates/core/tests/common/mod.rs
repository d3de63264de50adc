//! Brute-force reference computations shared by the integration tests. None of
//! them go through the simplex solver or the library's own recursions.

#![allow(dead_code, clippy::needless_range_loop)]

use promise_persuasion::oracle::{TableValue, ValueTable};
use promise_persuasion::PersuasionMdp;

/// Pivot threshold for the Gaussian eliminations below.
const PIVOT_EPS: f64 = 1e-10;
/// Basic solutions with a component below this are rejected.
const NONNEG_EPS: f64 = 1e-9;
/// Largest number of column subsets the vertex enumeration will try.
const MAX_BASES: u128 = 2_000_000;

/// A linear program `max c·x` s.t. equality and `≥` rows, `x ≥ 0`.
#[derive(Clone, Debug, Default)]
pub struct SmallLp {
    pub objective: Vec<f64>,
    pub eq: Vec<(Vec<f64>, f64)>,
    pub ge: Vec<(Vec<f64>, f64)>,
}

impl SmallLp {
    pub fn new(n: usize) -> Self {
        Self {
            objective: vec![0.0; n],
            ..Self::default()
        }
    }
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Drops linearly dependent rows of `[A | b]`. `None` if the system is
/// inconsistent.
fn independent_rows(rows: &[(Vec<f64>, f64)]) -> Option<Vec<(Vec<f64>, f64)>> {
    let mut work: Vec<Vec<f64>> = rows
        .iter()
        .map(|(a, b)| {
            let mut r = a.clone();
            r.push(*b);
            r
        })
        .collect();
    let width = work.first().map_or(0, |r| r.len() - 1);
    let mut keep = Vec::new();
    let mut pivot_row = 0;
    let mut order: Vec<usize> = (0..work.len()).collect();
    for col in 0..width {
        let best = (pivot_row..work.len()).max_by(|&i, &j| work[i][col].abs().total_cmp(&work[j][col].abs()));
        let Some(best) = best else { break };
        if work[best][col].abs() <= PIVOT_EPS {
            continue;
        }
        work.swap(pivot_row, best);
        order.swap(pivot_row, best);
        let p = work[pivot_row][col];
        for i in 0..work.len() {
            if i != pivot_row {
                let f = work[i][col] / p;
                if f != 0.0 {
                    for j in col..=width {
                        work[i][j] -= f * work[pivot_row][j];
                    }
                }
            }
        }
        keep.push(order[pivot_row]);
        pivot_row += 1;
    }
    if work[pivot_row..].iter().any(|r| r[width].abs() > 1e-8) {
        return None;
    }
    keep.sort_unstable();
    Some(keep.into_iter().map(|i| rows[i].clone()).collect())
}

/// Solves the square system `m x = b`; `None` if singular.
fn solve_square(mut m: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let best = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[best][col].abs() <= PIVOT_EPS {
            return None;
        }
        m.swap(col, best);
        b.swap(col, best);
        for i in col + 1..n {
            let f = m[i][col] / m[col][col];
            if f != 0.0 {
                for j in col..n {
                    m[i][j] -= f * m[col][j];
                }
                b[i] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let tail: f64 = (i + 1..n).map(|j| m[i][j] * x[j]).sum();
        x[i] = (b[i] - tail) / m[i][i];
    }
    Some(x)
}

/// Best objective over all basic feasible solutions, with the maximizer.
/// `None` when there is none. The caller is responsible for boundedness.
pub fn max_over_vertices(lp: &SmallLp) -> Option<(f64, Vec<f64>)> {
    let n = lp.objective.len();
    let slacks = lp.ge.len();
    let width = n + slacks;
    let mut rows: Vec<(Vec<f64>, f64)> = lp
        .eq
        .iter()
        .map(|(a, b)| {
            let mut r = a.clone();
            r.resize(width, 0.0);
            (r, *b)
        })
        .collect();
    for (i, (a, b)) in lp.ge.iter().enumerate() {
        let mut r = a.clone();
        r.resize(width, 0.0);
        r[n + i] = -1.0;
        rows.push((r, *b));
    }
    let rows = independent_rows(&rows)?;
    let m = rows.len();
    if m == 0 {
        // Only x = 0 is basic.
        return Some((0.0, vec![0.0; n]));
    }
    assert!(binomial(width, m) <= MAX_BASES, "too many bases to enumerate");

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut cols: Vec<usize> = (0..m).collect();
    loop {
        let sq: Vec<Vec<f64>> = rows.iter().map(|(a, _)| cols.iter().map(|&c| a[c]).collect()).collect();
        let rhs: Vec<f64> = rows.iter().map(|(_, b)| *b).collect();
        if let Some(xb) = solve_square(sq, rhs) {
            if xb.iter().all(|&v| v >= -NONNEG_EPS) {
                let mut x = vec![0.0; width];
                for (&c, &v) in cols.iter().zip(&xb) {
                    x[c] = v.max(0.0);
                }
                let value: f64 = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
                if best.as_ref().is_none_or(|(b, _)| value > *b) {
                    x.truncate(n);
                    best = Some((value, x));
                }
            }
        }
        // Next m-subset of 0..width in lexicographic order.
        let mut i = m;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if cols[i] < width - m + i {
                break;
            }
        }
        cols[i] += 1;
        for j in i + 1..m {
            cols[j] = cols[j - 1] + 1;
        }
    }
}

/// Receiver's best value from `(h, s)` on when no recommendation is trusted,
/// found by trying every deterministic Markov policy over pooled rewards.
pub fn deviation_values_by_policies(inst: &PersuasionMdp) -> Vec<Vec<f64>> {
    let (hz, ns, na) = (inst.horizon, inst.num_states(), inst.num_actions());
    let mut out = vec![vec![0.0; ns]; hz + 1];
    for h in 0..hz {
        let slots = (hz - h) * ns;
        let count = na.pow(slots as u32);
        for start in 0..ns {
            let mut best = f64::NEG_INFINITY;
            for code in 0..count {
                let mut c = code;
                let policy: Vec<usize> = (0..slots)
                    .map(|_| {
                        let a = c % na;
                        c /= na;
                        a
                    })
                    .collect();
                let mut dist = vec![0.0; ns];
                dist[start] = 1.0;
                let mut total = 0.0;
                for step in h..hz {
                    let mut next = vec![0.0; ns];
                    for s in 0..ns {
                        if dist[s] == 0.0 {
                            continue;
                        }
                        let a = policy[(step - h) * ns + s];
                        for (t, w) in inst.mu[step][s].iter().enumerate() {
                            total += dist[s] * w * inst.receiver_reward[step][s][a][t];
                            for (sn, p) in inst.transition[step][s][a][t].iter().enumerate() {
                                next[sn] += dist[s] * w * p;
                            }
                        }
                    }
                    dist = next;
                }
                best = best.max(total);
            }
            out[h][start] = best;
        }
    }
    out
}

/// `r^R(s, a', θ) + Σ p(s'|s, a', θ) v_{h+1}(s')` with values from
/// [`deviation_values_by_policies`].
pub fn deviation_payoff(inst: &PersuasionMdp, vhat: &[Vec<f64>], h: usize, s: usize, a_dev: usize, t: usize) -> f64 {
    inst.receiver_reward[h][s][a_dev][t]
        + inst.transition[h][s][a_dev][t]
            .iter()
            .zip(&vhat[h + 1])
            .map(|(p, v)| p * v)
            .sum::<f64>()
}

/// Optimal one-shot persuasion value at `(h, s)` when the future is ignored:
/// maximize the sender's expected reward over kernels satisfying obedience.
pub fn one_shot_value(inst: &PersuasionMdp, h: usize, s: usize) -> f64 {
    let (na, no) = (inst.num_actions(), inst.num_observations());
    let var = |a: usize, t: usize| a * no + t;
    let mu = &inst.mu[h][s];
    let mut lp = SmallLp::new(na * no);
    for a in 0..na {
        for t in 0..no {
            lp.objective[var(a, t)] = mu[t] * inst.sender_reward[h][s][a][t];
        }
    }
    for a in 0..na {
        for other in 0..na {
            if a == other {
                continue;
            }
            let mut row = vec![0.0; na * no];
            for t in 0..no {
                row[var(a, t)] = mu[t] * (inst.receiver_reward[h][s][a][t] - inst.receiver_reward[h][s][other][t]);
            }
            lp.ge.push((row, 0.0));
        }
    }
    for t in 0..no {
        let mut row = vec![0.0; na * no];
        for a in 0..na {
            row[var(a, t)] = 1.0;
        }
        lp.eq.push((row, 1.0));
    }
    max_over_vertices(&lp).expect("obedience always admits a kernel").0
}

/// `Σ_s β(s)·one_shot_value(0, s)` for a one-step instance.
pub fn one_shot_sender_value(inst: &PersuasionMdp) -> f64 {
    assert_eq!(inst.horizon, 1);
    (0..inst.num_states())
        .map(|s| inst.beta[s] * one_shot_value(inst, 0, s))
        .sum()
}

/// Best sender value at cell `(h, s)` with honesty threshold `iota_value`
/// over deterministic promises into `table` and kernels satisfying the exact
/// constraints, found by trying every promise assignment. `None` when no
/// assignment is feasible.
pub fn brute_force_pi(
    inst: &PersuasionMdp,
    vhat: &[Vec<f64>],
    h: usize,
    s: usize,
    iota_value: f64,
    table: &ValueTable,
) -> Option<f64> {
    let (ns, na, no) = (inst.num_states(), inst.num_actions(), inst.num_observations());
    let delta = table.delta;
    let realizable: Vec<Vec<usize>> = (0..ns).map(|sn| table.realizable_set(sn)).collect();
    // Pairs (a, s') with a nonempty realizable set get a promise; the others
    // must not be reached.
    let pairs: Vec<(usize, usize)> = (0..na)
        .flat_map(|a| (0..ns).map(move |sn| (a, sn)))
        .filter(|&(_, sn)| !realizable[sn].is_empty())
        .collect();
    let count: usize = pairs.iter().map(|&(_, sn)| realizable[sn].len()).product();
    let mu = &inst.mu[h][s];
    let var = |a: usize, t: usize| a * no + t;
    let mut best: Option<f64> = None;
    for code in 0..count {
        let mut c = code;
        let mut q = vec![vec![0usize; ns]; na];
        for &(a, sn) in &pairs {
            let len = realizable[sn].len();
            q[a][sn] = realizable[sn][c % len];
            c /= len;
        }
        let mut lp = SmallLp::new(na * no);
        let mut follow = vec![vec![0.0; no]; na];
        for a in 0..na {
            for t in 0..no {
                let mut sender = inst.sender_reward[h][s][a][t];
                let mut receiver = inst.receiver_reward[h][s][a][t];
                for sn in 0..ns {
                    let p = inst.transition[h][s][a][t][sn];
                    if realizable[sn].is_empty() {
                        continue;
                    }
                    sender += p * table.get(sn, q[a][sn]).finite().unwrap();
                    receiver += p * q[a][sn] as f64 * delta;
                }
                lp.objective[var(a, t)] = mu[t] * sender;
                follow[a][t] = receiver;
            }
        }
        let mut honesty = vec![0.0; na * no];
        for a in 0..na {
            for t in 0..no {
                honesty[var(a, t)] = mu[t] * follow[a][t];
            }
        }
        lp.ge.push((honesty, iota_value));
        for a in 0..na {
            for other in 0..na {
                let mut row = vec![0.0; na * no];
                for t in 0..no {
                    row[var(a, t)] = mu[t] * (follow[a][t] - deviation_payoff(inst, vhat, h, s, other, t));
                }
                lp.ge.push((row, 0.0));
            }
            for sn in (0..ns).filter(|&sn| realizable[sn].is_empty()) {
                let mut row = vec![0.0; na * no];
                for t in 0..no {
                    row[var(a, t)] = mu[t] * inst.transition[h][s][a][t][sn];
                }
                lp.eq.push((row, 0.0));
            }
        }
        for t in 0..no {
            let mut row = vec![0.0; na * no];
            for a in 0..na {
                row[var(a, t)] = 1.0;
            }
            lp.eq.push((row, 1.0));
        }
        if let Some((v, _)) = max_over_vertices(&lp) {
            best = Some(best.map_or(v, |b: f64| b.max(v)));
        }
    }
    best
}

/// Entries of a table row as options.
pub fn finite_row(table: &ValueTable, s: usize) -> Vec<Option<f64>> {
    table.entries[s].iter().map(|v| v.finite()).collect()
}

pub fn is_unrealizable(v: TableValue) -> bool {
    matches!(v, TableValue::Unrealizable)
}

/// Honesty margin and the smallest persuasion margin over action pairs at
/// `(h, s)`, for kernel `kappa[θ][a]` and promised continuation values
/// `promised[a][s']`.
#[allow(clippy::too_many_arguments)]
pub fn margins(
    inst: &PersuasionMdp,
    vhat: &[Vec<f64>],
    h: usize,
    s: usize,
    iota_value: f64,
    kappa: &[Vec<f64>],
    promised: &[Vec<f64>],
) -> (f64, Vec<Vec<f64>>) {
    let na = inst.num_actions();
    let mu = &inst.mu[h][s];
    let follow: Vec<f64> = (0..na)
        .map(|a| {
            mu.iter()
                .enumerate()
                .map(|(t, w)| {
                    let cont: f64 = inst.transition[h][s][a][t]
                        .iter()
                        .zip(&promised[a])
                        .map(|(p, v)| p * v)
                        .sum();
                    w * kappa[t][a] * (inst.receiver_reward[h][s][a][t] + cont)
                })
                .sum()
        })
        .collect();
    let honesty = follow.iter().sum::<f64>() - iota_value;
    let persuasion = (0..na)
        .map(|a| {
            (0..na)
                .map(|other| {
                    let deviate: f64 = mu
                        .iter()
                        .enumerate()
                        .map(|(t, w)| w * kappa[t][a] * deviation_payoff(inst, vhat, h, s, other, t))
                        .sum();
                    follow[a] - deviate
                })
                .collect()
        })
        .collect();
    (honesty, persuasion)
}

/// Probability that `a` is recommended at `(h, s)`.
pub fn recommendation_mass(inst: &PersuasionMdp, h: usize, s: usize, kappa: &[Vec<f64>], a: usize) -> f64 {
    inst.mu[h][s].iter().zip(kappa).map(|(w, row)| w * row[a]).sum()
}

/// Sender objective with deterministic promises; `None` if a reached pair
/// lands on an unrealizable promise.
pub fn sender_objective(
    inst: &PersuasionMdp,
    h: usize,
    s: usize,
    kappa: &[Vec<f64>],
    q: &[Vec<usize>],
    table: &ValueTable,
) -> Option<f64> {
    let mut total = 0.0;
    for (t, w) in inst.mu[h][s].iter().enumerate() {
        for a in 0..inst.num_actions() {
            let mass = w * kappa[t][a];
            total += mass * inst.sender_reward[h][s][a][t];
            for (sn, p) in inst.transition[h][s][a][t].iter().enumerate() {
                if mass * p > 1e-12 {
                    total += mass * p * table.get(sn, q[a][sn]).finite()?;
                }
            }
        }
    }
    Some(total)
}
