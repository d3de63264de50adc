//! Promise-form signaling schemes.
//!
//! A scheme keeps, for every step `h` and state `s`, a set of grid promises
//! `I[h][s]`, a recommendation rule `recommend[h][s][k][θ]` (a distribution
//! over actions) and a promise function `next_promise[h][s][a][k][s']`.
//! Promises are grid indices; promise `k` stands for the value `k·δ`.
//!
//! The induced history-dependent scheme decodes the current promise from the
//! history by folding the promise functions from promise 0 at the first step.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dp::GridSpec;
use crate::error::{Error, Result};
use crate::mdp::{deviation_values, read_json, write_json, DeviationValues, History, PersuasionMdp};
use crate::{NORMALIZATION_TOL, VERIFY_TOL};

/// Histories enumerated by the exhaustive checks are capped at this count.
pub const HISTORY_LIMIT: u128 = 1_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PromiseScheme {
    pub delta: f64,
    /// `promise_sets[h][s]` for `h in 0..=H`, sorted; the last layer is `{0}`.
    pub promise_sets: Vec<Vec<Vec<usize>>>,
    /// `recommend[h][s][k][θ][a]` for `h in 0..H` and every grid index `k`.
    pub recommend: Vec<Vec<Vec<Vec<Vec<f64>>>>>,
    /// `next_promise[h][s][a][k][s']` for `h in 0..H` and every grid index `k`.
    pub next_promise: Vec<Vec<Vec<Vec<Vec<usize>>>>>,
}

impl PromiseScheme {
    /// Builds a scheme over the full grid from closures. `sets(h, s)` gives
    /// `I[h][s]` for `h < H`; the terminal layer is added here.
    pub fn from_fn(
        inst: &PersuasionMdp,
        delta: f64,
        mut sets: impl FnMut(usize, usize) -> Vec<usize>,
        mut recommend: impl FnMut(usize, usize, usize, usize) -> Vec<f64>,
        mut next_promise: impl FnMut(usize, usize, usize, usize, usize) -> usize,
    ) -> Result<Self> {
        let grid = GridSpec::new(delta, inst.horizon)?;
        let (hz, ns, na, no) = (
            inst.horizon,
            inst.num_states(),
            inst.num_actions(),
            inst.num_observations(),
        );
        let mut promise_sets: Vec<Vec<Vec<usize>>> = (0..hz)
            .map(|h| {
                (0..ns)
                    .map(|s| {
                        let mut v = sets(h, s);
                        v.sort_unstable();
                        v.dedup();
                        v
                    })
                    .collect()
            })
            .collect();
        promise_sets.push(vec![vec![0]; ns]);
        let recommend = (0..hz)
            .map(|h| {
                (0..ns)
                    .map(|s| {
                        (0..grid.num_points)
                            .map(|k| (0..no).map(|t| recommend(h, s, k, t)).collect())
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let next_promise = (0..hz)
            .map(|h| {
                (0..ns)
                    .map(|s| {
                        (0..na)
                            .map(|a| {
                                (0..grid.num_points)
                                    .map(|k| (0..ns).map(|sn| next_promise(h, s, a, k, sn)).collect())
                                    .collect()
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            delta,
            promise_sets,
            recommend,
            next_promise,
        })
    }

    pub fn horizon(&self) -> usize {
        self.recommend.len()
    }

    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(self.delta, self.horizon())
    }

    pub fn promise_value(&self, k: usize) -> f64 {
        k as f64 * self.delta
    }

    pub fn contains(&self, h: usize, s: usize, k: usize) -> bool {
        self.promise_sets[h][s].binary_search(&k).is_ok()
    }

    /// The union of all promise sets.
    pub fn promise_union(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.promise_sets.iter().flatten().flatten().copied().collect();
        all.sort_unstable();
        all.dedup();
        all
    }

    #[inline]
    pub fn next(&self, h: usize, s: usize, a: usize, k: usize, s_next: usize) -> usize {
        self.next_promise[h][s][a][k][s_next]
    }

    /// Structural checks: dimensions, distributions, `0 ∈ I[0][s]`, the
    /// terminal layer and promise closure.
    pub fn validate(&self, inst: &PersuasionMdp) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidScheme(m));
        let grid = self.grid()?;
        let (hz, ns, na, no) = (
            inst.horizon,
            inst.num_states(),
            inst.num_actions(),
            inst.num_observations(),
        );
        if self.horizon() != hz || self.next_promise.len() != hz || self.promise_sets.len() != hz + 1 {
            return bad(format!("scheme covers {} steps, instance has {hz}", self.horizon()));
        }
        for h in 0..=hz {
            if self.promise_sets[h].len() != ns {
                return bad(format!("promise_sets[{h}] has {} states", self.promise_sets[h].len()));
            }
            for (s, set) in self.promise_sets[h].iter().enumerate() {
                if set.windows(2).any(|w| w[0] >= w[1]) {
                    return bad(format!("promise_sets[{h}][{s}] is not sorted and duplicate-free"));
                }
                if set.iter().any(|&k| k >= grid.num_points) {
                    return bad(format!("promise_sets[{h}][{s}] leaves the grid"));
                }
                if h == hz && set.as_slice() != [0] {
                    return bad(format!("terminal promise set of state {s} must be {{0}}"));
                }
                if h == 0 && !set.contains(&0) {
                    return bad(format!("promise 0 missing from the first-step set of state {s}"));
                }
            }
        }
        for h in 0..hz {
            if self.recommend[h].len() != ns || self.next_promise[h].len() != ns {
                return bad(format!("step {h} does not cover {ns} states"));
            }
            for s in 0..ns {
                if self.recommend[h][s].len() != grid.num_points {
                    return bad(format!(
                        "recommend[{h}][{s}] must have {} grid entries",
                        grid.num_points
                    ));
                }
                if self.next_promise[h][s].len() != na {
                    return bad(format!("next_promise[{h}][{s}] must have {na} actions"));
                }
                for a in 0..na {
                    if self.next_promise[h][s][a].len() != grid.num_points
                        || self.next_promise[h][s][a].iter().any(|r| r.len() != ns)
                    {
                        return bad(format!("next_promise[{h}][{s}][{a}] has the wrong shape"));
                    }
                }
                for &k in &self.promise_sets[h][s] {
                    let rows = &self.recommend[h][s][k];
                    if rows.len() != no {
                        return bad(format!("recommend[{h}][{s}][{k}] must have {no} observations"));
                    }
                    for (t, row) in rows.iter().enumerate() {
                        let sum: f64 = row.iter().sum();
                        if row.len() != na
                            || row.iter().any(|p| !p.is_finite() || *p < 0.0)
                            || (sum - 1.0).abs() > NORMALIZATION_TOL
                        {
                            return bad(format!("recommend[{h}][{s}][{k}][{t}] is not a distribution"));
                        }
                    }
                    for a in 0..na {
                        for sn in 0..ns {
                            let g = self.next(h, s, a, k, sn);
                            if !self.contains(h + 1, sn, g) {
                                return Err(Error::PromiseClosure {
                                    step: h + 1,
                                    state: sn,
                                    promise: g,
                                });
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

pub fn read_scheme(path: impl AsRef<Path>) -> Result<PromiseScheme> {
    read_json(path.as_ref(), "scheme")
}

pub fn write_scheme(scheme: &PromiseScheme, path: impl AsRef<Path>) -> Result<()> {
    write_json(scheme, path.as_ref())
}

/// Decodes the promise attached to `tau` by folding the promise functions.
pub fn history_to_promise(scheme: &PromiseScheme, tau: &History) -> Result<usize> {
    let states = tau.states();
    if tau.len() > scheme.horizon() {
        return Err(Error::InvalidHistory(format!(
            "length {} exceeds the scheme horizon {}",
            tau.len(),
            scheme.horizon()
        )));
    }
    let mut iota = 0;
    if !scheme.contains(0, states[0], iota) {
        return Err(Error::PromiseClosure {
            step: 0,
            state: states[0],
            promise: iota,
        });
    }
    for (h, &a) in tau.actions().iter().enumerate() {
        iota = scheme.next(h, states[h], a, iota, states[h + 1]);
        if !scheme.contains(h + 1, states[h + 1], iota) {
            return Err(Error::PromiseClosure {
                step: h + 1,
                state: states[h + 1],
                promise: iota,
            });
        }
    }
    Ok(iota)
}

/// `φ^σ_τ(θ)`: the recommendation distribution the induced scheme uses at `tau`.
pub fn induced_recommendation<'a>(scheme: &'a PromiseScheme, tau: &History, theta: usize) -> Result<&'a [f64]> {
    let k = history_to_promise(scheme, tau)?;
    let h = tau.len() - 1;
    Ok(&scheme.recommend[h][tau.last_state()][k][theta])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellValues {
    /// Sender value `𝒱^S_h(s, ι)`.
    pub sender: f64,
    /// Receiver value `𝒱^R_h(s, ι)`.
    pub receiver: f64,
    /// Receiver action values `𝒱^R_h(a, s, ι)`; they sum to `receiver`.
    pub receiver_action: Vec<f64>,
}

/// Promise-indexed value tables of a scheme; `cells[h][s][k]` is `Some` iff
/// `k ∈ I[h][s]`. Layer `H` holds the zero terminal values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeValues {
    pub cells: Vec<Vec<Vec<Option<CellValues>>>>,
}

impl SchemeValues {
    pub fn cell(&self, h: usize, s: usize, k: usize) -> Option<&CellValues> {
        self.cells[h][s].get(k).and_then(Option::as_ref)
    }

    pub fn sender(&self, h: usize, s: usize, k: usize) -> f64 {
        self.cell(h, s, k).expect("promise in set").sender
    }

    pub fn receiver(&self, h: usize, s: usize, k: usize) -> f64 {
        self.cell(h, s, k).expect("promise in set").receiver
    }

    pub fn receiver_action(&self, h: usize, s: usize, k: usize, a: usize) -> f64 {
        self.cell(h, s, k).expect("promise in set").receiver_action[a]
    }

    /// `Σ_s β(s) 𝒱^S_1(s, 0)`.
    pub fn sender_value(&self, inst: &PersuasionMdp) -> f64 {
        inst.beta
            .iter()
            .enumerate()
            .map(|(s, b)| b * self.sender(0, s, 0))
            .sum()
    }
}

/// Backward recursion for the promise-indexed sender and receiver values.
pub fn scheme_values(inst: &PersuasionMdp, scheme: &PromiseScheme) -> Result<SchemeValues> {
    scheme.validate(inst)?;
    let grid = scheme.grid()?;
    let (hz, ns, na, no) = (
        inst.horizon,
        inst.num_states(),
        inst.num_actions(),
        inst.num_observations(),
    );
    let mut cells: Vec<Vec<Vec<Option<CellValues>>>> = vec![vec![vec![None; grid.num_points]; ns]; hz + 1];
    for s in 0..ns {
        cells[hz][s][0] = Some(CellValues {
            sender: 0.0,
            receiver: 0.0,
            receiver_action: vec![0.0; na],
        });
    }
    for h in (0..hz).rev() {
        for s in 0..ns {
            for &k in &scheme.promise_sets[h][s] {
                let mut sender = 0.0;
                let mut receiver_action = vec![0.0; na];
                for theta in 0..no {
                    let w = inst.mu[h][s][theta];
                    if w == 0.0 {
                        continue;
                    }
                    for a in 0..na {
                        let phi = scheme.recommend[h][s][k][theta][a];
                        if phi == 0.0 {
                            continue;
                        }
                        let mut cont_s = 0.0;
                        let mut cont_r = 0.0;
                        for (sn, &p) in inst.transition[h][s][a][theta].iter().enumerate() {
                            if p == 0.0 {
                                continue;
                            }
                            let next = cells[h + 1][sn][scheme.next(h, s, a, k, sn)]
                                .as_ref()
                                .expect("closure checked by validate");
                            cont_s += p * next.sender;
                            cont_r += p * next.receiver;
                        }
                        sender += w * phi * (inst.sender_reward[h][s][a][theta] + cont_s);
                        receiver_action[a] += w * phi * (inst.receiver_reward[h][s][a][theta] + cont_r);
                    }
                }
                cells[h][s][k] = Some(CellValues {
                    sender,
                    receiver: receiver_action.iter().sum(),
                    receiver_action,
                });
            }
        }
    }
    Ok(SchemeValues { cells })
}

/// Values of the induced history-dependent scheme at one history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryValue {
    pub history: History,
    /// Decoded promise index.
    pub promise: usize,
    /// Probability of the history under β, μ, p and an obedient receiver.
    pub reach: f64,
    pub sender: f64,
    pub receiver_action: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HistoryValues {
    pub entries: Vec<HistoryValue>,
}

pub fn count_histories(inst: &PersuasionMdp) -> u128 {
    let (ns, na) = (inst.num_states() as u128, inst.num_actions() as u128);
    let mut total: u128 = 0;
    let mut layer: u128 = ns;
    for h in 0..inst.horizon {
        total = total.saturating_add(layer);
        if h + 1 < inst.horizon {
            layer = layer.saturating_mul(ns).saturating_mul(na);
        }
    }
    total
}

fn guard_histories(inst: &PersuasionMdp) -> Result<()> {
    let required = count_histories(inst);
    if required > HISTORY_LIMIT {
        return Err(Error::SizeGuard {
            what: "histories",
            required,
            limit: HISTORY_LIMIT,
        });
    }
    Ok(())
}

struct Enumerator<'a> {
    inst: &'a PersuasionMdp,
    scheme: &'a PromiseScheme,
    out: Vec<HistoryValue>,
}

impl Enumerator<'_> {
    /// Returns `(V^S_h(τ), V^R_h(τ))` and records every visited history.
    fn visit(&mut self, tau: History, iota: usize, reach: f64) -> (f64, f64) {
        let (inst, scheme) = (self.inst, self.scheme);
        let h = tau.len() - 1;
        let s = tau.last_state();
        let (ns, na, no) = (inst.num_states(), inst.num_actions(), inst.num_observations());
        let slot = self.out.len();
        self.out.push(HistoryValue {
            history: tau.clone(),
            promise: iota,
            reach,
            sender: 0.0,
            receiver_action: vec![0.0; na],
        });

        // Continuations V(τ ⊕ (a, s')), evaluated once per (a, s').
        let mut cont = vec![(0.0, 0.0); na * ns];
        if h + 1 < inst.horizon {
            for a in 0..na {
                for sn in 0..ns {
                    let step_prob: f64 = (0..no)
                        .map(|t| {
                            inst.mu[h][s][t] * scheme.recommend[h][s][iota][t][a] * inst.transition[h][s][a][t][sn]
                        })
                        .sum();
                    let child = tau.extended(a, sn);
                    let next_iota = scheme.next(h, s, a, iota, sn);
                    cont[a * ns + sn] = self.visit(child, next_iota, reach * step_prob);
                }
            }
        }

        let mut sender = 0.0;
        let mut receiver_action = vec![0.0; na];
        for t in 0..no {
            let w = inst.mu[h][s][t];
            if w == 0.0 {
                continue;
            }
            for a in 0..na {
                let phi = scheme.recommend[h][s][iota][t][a];
                if phi == 0.0 {
                    continue;
                }
                let (mut cs, mut cr) = (0.0, 0.0);
                for (sn, &p) in inst.transition[h][s][a][t].iter().enumerate() {
                    cs += p * cont[a * ns + sn].0;
                    cr += p * cont[a * ns + sn].1;
                }
                sender += w * phi * (inst.sender_reward[h][s][a][t] + cs);
                receiver_action[a] += w * phi * (inst.receiver_reward[h][s][a][t] + cr);
            }
        }
        let receiver = receiver_action.iter().sum();
        let entry = &mut self.out[slot];
        entry.sender = sender;
        entry.receiver_action = receiver_action;
        (sender, receiver)
    }
}

/// Evaluates the induced history-dependent scheme on every history of every
/// length, straight from the history-indexed recursions.
pub fn evaluate_by_history_enumeration(inst: &PersuasionMdp, scheme: &PromiseScheme) -> Result<HistoryValues> {
    guard_histories(inst)?;
    scheme.validate(inst)?;
    let mut e = Enumerator {
        inst,
        scheme,
        out: Vec::new(),
    };
    for s in 0..inst.num_states() {
        e.visit(History::start(s), 0, inst.beta[s]);
    }
    Ok(HistoryValues { entries: e.out })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Honesty,
    LocalPersuasiveness,
    Definition1,
}

/// One failed inequality `left ≥ right`. Steps are 0-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub step: usize,
    pub state: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub promise: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub history: Option<History>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub action: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub deviation: Option<usize>,
    pub left: f64,
    pub right: f64,
    /// `right - left`.
    pub slack: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reachable: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    /// Slack allowed before an inequality is reported.
    pub tolerance: f64,
    /// Number of inequalities tested.
    pub checked: usize,
    /// Largest `right - left` seen over all tested inequalities.
    pub worst_slack: f64,
    pub violations: Vec<Violation>,
}

impl ViolationReport {
    pub(crate) fn new(tolerance: f64) -> Self {
        Self {
            tolerance,
            checked: 0,
            worst_slack: f64::NEG_INFINITY,
            violations: Vec::new(),
        }
    }

    pub(crate) fn test(&mut self, left: f64, right: f64, make: impl FnOnce(f64) -> Violation) {
        self.checked += 1;
        let slack = right - left;
        self.worst_slack = self.worst_slack.max(slack);
        if slack > self.tolerance {
            self.violations.push(make(slack));
        }
    }

    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn merge(&mut self, other: ViolationReport) {
        self.checked += other.checked;
        self.worst_slack = self.worst_slack.max(other.worst_slack);
        self.violations.extend(other.violations);
    }
}

/// Expected receiver reward plus promised continuation at a cell, for one
/// recommended action (`Some(a)`) or summed over all of them (`None`).
fn promised_receiver_value(
    inst: &PersuasionMdp,
    scheme: &PromiseScheme,
    h: usize,
    s: usize,
    k: usize,
    only: Option<usize>,
) -> f64 {
    let mut total = 0.0;
    for (t, &w) in inst.mu[h][s].iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        for a in 0..inst.num_actions() {
            if only.is_some_and(|b| b != a) {
                continue;
            }
            let phi = scheme.recommend[h][s][k][t][a];
            if phi == 0.0 {
                continue;
            }
            let promised: f64 = inst.transition[h][s][a][t]
                .iter()
                .enumerate()
                .map(|(sn, p)| p * scheme.promise_value(scheme.next(h, s, a, k, sn)))
                .sum();
            total += w * phi * (inst.receiver_reward[h][s][a][t] + promised);
        }
    }
    total
}

/// Right-hand side of the deviation inequalities: the receiver's value of
/// switching from recommended `a` to `a_dev` and then playing alone.
fn deviation_side(
    inst: &PersuasionMdp,
    dev: &DeviationValues,
    rec: &[Vec<f64>],
    h: usize,
    s: usize,
    a: usize,
    a_dev: usize,
) -> f64 {
    inst.mu[h][s]
        .iter()
        .enumerate()
        .filter(|(_, &w)| w != 0.0)
        .map(|(t, &w)| w * rec[t][a] * dev.deviation_payoff(inst, h, s, a_dev, t))
        .sum()
}

/// Checks η-honesty: every cell's expected receiver reward plus promised
/// continuation is at least its promise minus `eta`.
pub fn check_honesty(inst: &PersuasionMdp, scheme: &PromiseScheme, eta: f64) -> Result<ViolationReport> {
    scheme.validate(inst)?;
    let mut report = ViolationReport::new(VERIFY_TOL);
    for h in 0..inst.horizon {
        for s in 0..inst.num_states() {
            for &k in &scheme.promise_sets[h][s] {
                let left = promised_receiver_value(inst, scheme, h, s, k, None);
                let right = scheme.promise_value(k) - eta;
                report.test(left, right, |slack| Violation {
                    kind: ViolationKind::Honesty,
                    step: h,
                    state: s,
                    promise: Some(k),
                    history: None,
                    action: None,
                    deviation: None,
                    left,
                    right,
                    slack,
                    reachable: None,
                });
            }
        }
    }
    Ok(report)
}

/// Checks the per-cell persuasiveness inequalities, where following `a`
/// is credited with the promised continuation and deviating to `a'` with the
/// post-deviation value.
pub fn check_local_persuasiveness(
    inst: &PersuasionMdp,
    scheme: &PromiseScheme,
    dev: &DeviationValues,
) -> Result<ViolationReport> {
    scheme.validate(inst)?;
    let na = inst.num_actions();
    let mut report = ViolationReport::new(VERIFY_TOL);
    for h in 0..inst.horizon {
        for s in 0..inst.num_states() {
            for &k in &scheme.promise_sets[h][s] {
                let rec = &scheme.recommend[h][s][k];
                for a in 0..na {
                    let left = promised_receiver_value(inst, scheme, h, s, k, Some(a));
                    for a_dev in 0..na {
                        let right = deviation_side(inst, dev, rec, h, s, a, a_dev);
                        report.test(left, right, |slack| Violation {
                            kind: ViolationKind::LocalPersuasiveness,
                            step: h,
                            state: s,
                            promise: Some(k),
                            history: None,
                            action: Some(a),
                            deviation: Some(a_dev),
                            left,
                            right,
                            slack,
                            reachable: None,
                        });
                    }
                }
            }
        }
    }
    Ok(report)
}

/// Tests ε-persuasiveness of the induced scheme on every history, every
/// recommended action and every deviation.
pub fn verify_persuasive_exhaustive(
    inst: &PersuasionMdp,
    scheme: &PromiseScheme,
    epsilon: f64,
) -> Result<ViolationReport> {
    let values = evaluate_by_history_enumeration(inst, scheme)?;
    let dev = deviation_values(inst);
    let na = inst.num_actions();
    let mut report = ViolationReport::new(VERIFY_TOL);
    for entry in &values.entries {
        let h = entry.history.len() - 1;
        let s = entry.history.last_state();
        let rec = &scheme.recommend[h][s][entry.promise];
        for a in 0..na {
            let left = entry.receiver_action[a];
            for a_dev in 0..na {
                let right = deviation_side(inst, &dev, rec, h, s, a, a_dev) - epsilon;
                report.test(left, right, |slack| Violation {
                    kind: ViolationKind::Definition1,
                    step: h,
                    state: s,
                    promise: Some(entry.promise),
                    history: Some(entry.history.clone()),
                    action: Some(a),
                    deviation: Some(a_dev),
                    left,
                    right,
                    slack,
                    reachable: Some(entry.reach > 0.0),
                });
            }
        }
    }
    Ok(report)
}
