//! Problem instances, their validation, the receiver's post-deviation values,
//! and the instance file format.
//!
//! Steps are 0-based in every table: step `h` of an `H`-step instance lives at
//! index `h` for `h in 0..H`. Tables that need a terminal layer (deviation
//! values, scheme values) carry an extra all-zero layer at index `H`.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::NORMALIZATION_TOL;

/// A persuasion problem on a finite-horizon MDP.
///
/// Layout of the tables (all 0-based):
/// `mu[h][s][θ]`, `sender_reward[h][s][a][θ]`, `receiver_reward[h][s][a][θ]`,
/// `transition[h][s][a][θ][s']`, `beta[s]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PersuasionMdp {
    pub horizon: usize,
    pub states: Vec<String>,
    pub actions: Vec<String>,
    pub observations: Vec<String>,
    pub beta: Vec<f64>,
    pub mu: Vec<Vec<Vec<f64>>>,
    pub sender_reward: Vec<Vec<Vec<Vec<f64>>>>,
    pub receiver_reward: Vec<Vec<Vec<Vec<f64>>>>,
    pub transition: Vec<Vec<Vec<Vec<Vec<f64>>>>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefectKind {
    Shape,
    NonFinite,
    NegativeProbability,
    TransitionNotNormalized,
    PriorNotNormalized,
    InitialNotNormalized,
    RewardOutOfRange,
}

/// One broken instance invariant, with the array coordinates where it occurs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceViolation {
    pub kind: DefectKind,
    pub field: &'static str,
    pub coords: Vec<usize>,
    pub message: String,
}

impl fmt::Display for InstanceViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{:?}: {}", self.field, self.coords, self.message)
    }
}

impl PersuasionMdp {
    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn num_observations(&self) -> usize {
        self.observations.len()
    }

    /// Builds an instance from its tables with generic labels `s0.., a0.., o0..`.
    #[allow(clippy::too_many_arguments)]
    pub fn from_tables(
        horizon: usize,
        beta: Vec<f64>,
        mu: Vec<Vec<Vec<f64>>>,
        sender_reward: Vec<Vec<Vec<Vec<f64>>>>,
        receiver_reward: Vec<Vec<Vec<Vec<f64>>>>,
        transition: Vec<Vec<Vec<Vec<Vec<f64>>>>>,
    ) -> Self {
        let num_states = beta.len();
        let num_actions = sender_reward.first().and_then(|h| h.first()).map_or(0, Vec::len);
        let num_observations = mu.first().and_then(|h| h.first()).map_or(0, Vec::len);
        Self {
            horizon,
            states: (0..num_states).map(|i| format!("s{i}")).collect(),
            actions: (0..num_actions).map(|i| format!("a{i}")).collect(),
            observations: (0..num_observations).map(|i| format!("o{i}")).collect(),
            beta,
            mu,
            sender_reward,
            receiver_reward,
            transition,
        }
    }

    /// Expected receiver reward of playing `a` in `s` at step `h` with no
    /// information about θ, plus the expected continuation under `next`.
    pub fn pooled_receiver_value(&self, h: usize, s: usize, a: usize, next: &[f64]) -> f64 {
        let mut total = 0.0;
        for (theta, &w) in self.mu[h][s].iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let cont: f64 = self.transition[h][s][a][theta]
                .iter()
                .zip(next)
                .map(|(p, v)| p * v)
                .sum();
            total += w * (self.receiver_reward[h][s][a][theta] + cont);
        }
        total
    }

    /// The same instance cut down to its first `horizon` steps.
    pub fn truncated(&self, horizon: usize) -> Result<Self> {
        if horizon == 0 || horizon > self.horizon {
            return Err(Error::InvalidArgument(format!(
                "cannot truncate a horizon-{} instance to {horizon} steps",
                self.horizon
            )));
        }
        let mut out = self.clone();
        out.horizon = horizon;
        out.mu.truncate(horizon);
        out.sender_reward.truncate(horizon);
        out.receiver_reward.truncate(horizon);
        out.transition.truncate(horizon);
        Ok(out)
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let violations = validate_instance(self);
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidInstance(violations))
        }
    }
}

struct Collector {
    out: Vec<InstanceViolation>,
}

impl Collector {
    fn push(&mut self, kind: DefectKind, field: &'static str, coords: Vec<usize>, message: String) {
        self.out.push(InstanceViolation {
            kind,
            field,
            coords,
            message,
        });
    }

    fn len_is(&mut self, field: &'static str, coords: &[usize], got: usize, want: usize) -> bool {
        if got != want {
            self.push(
                DefectKind::Shape,
                field,
                coords.to_vec(),
                format!("expected length {want}, found {got}"),
            );
            false
        } else {
            true
        }
    }

    fn distribution(&mut self, field: &'static str, kind: DefectKind, coords: Vec<usize>, row: &[f64]) {
        let mut ok = true;
        for (i, &p) in row.iter().enumerate() {
            if !p.is_finite() {
                let mut c = coords.clone();
                c.push(i);
                self.push(DefectKind::NonFinite, field, c, format!("value {p} is not finite"));
                ok = false;
            } else if p < 0.0 {
                let mut c = coords.clone();
                c.push(i);
                self.push(
                    DefectKind::NegativeProbability,
                    field,
                    c,
                    format!("probability {p} is negative"),
                );
                ok = false;
            }
        }
        if ok {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > NORMALIZATION_TOL {
                let what = match kind {
                    DefectKind::PriorNotNormalized => "prior",
                    DefectKind::InitialNotNormalized => "initial distribution",
                    _ => "transition row",
                };
                self.push(kind, field, coords, format!("{what} not normalized: sums to {sum}"));
            }
        }
    }

    fn reward(&mut self, field: &'static str, coords: Vec<usize>, r: f64) {
        if !r.is_finite() {
            self.push(DefectKind::NonFinite, field, coords, format!("value {r} is not finite"));
        } else if !(0.0..=1.0).contains(&r) {
            self.push(
                DefectKind::RewardOutOfRange,
                field,
                coords,
                format!("reward out of range: {r} is not in [0, 1]"),
            );
        }
    }
}

/// Lists every broken invariant of `inst`; an empty list means the instance is valid.
pub fn validate_instance(inst: &PersuasionMdp) -> Vec<InstanceViolation> {
    let mut c = Collector { out: Vec::new() };
    let (ns, na, no, hz) = (
        inst.num_states(),
        inst.num_actions(),
        inst.num_observations(),
        inst.horizon,
    );
    if hz == 0 {
        c.push(
            DefectKind::Shape,
            "horizon",
            vec![],
            "horizon must be at least 1".into(),
        );
    }
    for (name, n) in [("states", ns), ("actions", na), ("observations", no)] {
        if n == 0 {
            c.push(DefectKind::Shape, name, vec![], format!("{name} must not be empty"));
        }
    }
    if !c.out.is_empty() {
        return c.out;
    }

    if c.len_is("beta", &[], inst.beta.len(), ns) {
        c.distribution("beta", DefectKind::InitialNotNormalized, vec![], &inst.beta);
    }

    if c.len_is("mu", &[], inst.mu.len(), hz) {
        for (h, layer) in inst.mu.iter().enumerate() {
            if !c.len_is("mu", &[h], layer.len(), ns) {
                continue;
            }
            for (s, row) in layer.iter().enumerate() {
                if c.len_is("mu", &[h, s], row.len(), no) {
                    c.distribution("mu", DefectKind::PriorNotNormalized, vec![h, s], row);
                }
            }
        }
    }

    for (field, table) in [
        ("sender_reward", &inst.sender_reward),
        ("receiver_reward", &inst.receiver_reward),
    ] {
        if !c.len_is(field, &[], table.len(), hz) {
            continue;
        }
        for (h, layer) in table.iter().enumerate() {
            if !c.len_is(field, &[h], layer.len(), ns) {
                continue;
            }
            for (s, per_state) in layer.iter().enumerate() {
                if !c.len_is(field, &[h, s], per_state.len(), na) {
                    continue;
                }
                for (a, row) in per_state.iter().enumerate() {
                    if !c.len_is(field, &[h, s, a], row.len(), no) {
                        continue;
                    }
                    for (theta, &r) in row.iter().enumerate() {
                        c.reward(field, vec![h, s, a, theta], r);
                    }
                }
            }
        }
    }

    if c.len_is("transition", &[], inst.transition.len(), hz) {
        for (h, layer) in inst.transition.iter().enumerate() {
            if !c.len_is("transition", &[h], layer.len(), ns) {
                continue;
            }
            for (s, per_state) in layer.iter().enumerate() {
                if !c.len_is("transition", &[h, s], per_state.len(), na) {
                    continue;
                }
                for (a, per_action) in per_state.iter().enumerate() {
                    if !c.len_is("transition", &[h, s, a], per_action.len(), no) {
                        continue;
                    }
                    for (theta, row) in per_action.iter().enumerate() {
                        if c.len_is("transition", &[h, s, a, theta], row.len(), ns) {
                            c.distribution(
                                "transition",
                                DefectKind::TransitionNotNormalized,
                                vec![h, s, a, theta],
                                row,
                            );
                        }
                    }
                }
            }
        }
    }
    c.out
}

/// Receiver's optimal expected reward after deviating, when no further
/// recommendations arrive.
///
/// `values[h][s]` for `h in 0..=H` (the last layer is zero); `argmax[h][s]`
/// for `h in 0..H`, ties broken towards the lowest action index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviationValues {
    pub values: Vec<Vec<f64>>,
    pub argmax: Vec<Vec<usize>>,
}

impl DeviationValues {
    pub fn value(&self, h: usize, s: usize) -> f64 {
        self.values[h][s]
    }

    /// Continuation row for step `h + 1`.
    pub fn next(&self, h: usize) -> &[f64] {
        &self.values[h + 1]
    }

    /// Expected value of deviating to `a_dev` at `(h, s)` conditional on
    /// observation `theta`: `r^R(s, a_dev, θ) + Σ p(s'|s, a_dev, θ) V̂_{h+1}(s')`.
    pub fn deviation_payoff(&self, inst: &PersuasionMdp, h: usize, s: usize, a_dev: usize, theta: usize) -> f64 {
        let cont: f64 = inst.transition[h][s][a_dev][theta]
            .iter()
            .zip(&self.values[h + 1])
            .map(|(p, v)| p * v)
            .sum();
        inst.receiver_reward[h][s][a_dev][theta] + cont
    }
}

/// Backward induction for the post-deviation receiver values.
pub fn deviation_values(inst: &PersuasionMdp) -> DeviationValues {
    let (hz, ns, na) = (inst.horizon, inst.num_states(), inst.num_actions());
    let mut values = vec![vec![0.0; ns]; hz + 1];
    let mut argmax = vec![vec![0; ns]; hz];
    for h in (0..hz).rev() {
        let (head, tail) = values.split_at_mut(h + 1);
        let next = &tail[0];
        for s in 0..ns {
            let mut best = f64::NEG_INFINITY;
            let mut best_a = 0;
            for a in 0..na {
                let v = inst.pooled_receiver_value(h, s, a, next);
                if v > best {
                    best = v;
                    best_a = a;
                }
            }
            head[h][s] = best;
            argmax[h][s] = best_a;
        }
    }
    DeviationValues { values, argmax }
}

/// A history `(s_1, a_1, ..., s_{h-1}, a_{h-1}, s_h)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct History {
    states: Vec<usize>,
    actions: Vec<usize>,
}

impl History {
    pub fn start(s: usize) -> Self {
        Self {
            states: vec![s],
            actions: Vec::new(),
        }
    }

    pub fn new(states: Vec<usize>, actions: Vec<usize>) -> Result<Self> {
        if states.is_empty() || states.len() != actions.len() + 1 {
            return Err(Error::InvalidHistory(format!(
                "{} states and {} actions do not alternate",
                states.len(),
                actions.len()
            )));
        }
        Ok(Self { states, actions })
    }

    /// `τ ⊕ (a, s')`.
    pub fn extended(&self, a: usize, s_next: usize) -> Self {
        let mut out = self.clone();
        out.actions.push(a);
        out.states.push(s_next);
        out
    }

    /// Number of states in the history (the 1-based step it ends at).
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn states(&self) -> &[usize] {
        &self.states
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    pub fn last_state(&self) -> usize {
        *self.states.last().expect("histories are never empty")
    }

    pub fn check_against(&self, inst: &PersuasionMdp) -> Result<()> {
        if self.len() > inst.horizon {
            return Err(Error::InvalidHistory(format!(
                "length {} exceeds the horizon {}",
                self.len(),
                inst.horizon
            )));
        }
        if let Some(s) = self.states.iter().find(|&&s| s >= inst.num_states()) {
            return Err(Error::InvalidHistory(format!("state index {s} out of range")));
        }
        if let Some(a) = self.actions.iter().find(|&&a| a >= inst.num_actions()) {
            return Err(Error::InvalidHistory(format!("action index {a} out of range")));
        }
        Ok(())
    }
}

impl fmt::Display for History {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(s{}", self.states[0])?;
        for (a, s) in self.actions.iter().zip(&self.states[1..]) {
            write!(f, ", a{a}, s{s}")?;
        }
        write!(f, ")")
    }
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        what: format!("{what} {}", path.display()),
        message: e.to_string(),
    })
}

pub(crate) fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Internal(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads and validates an instance file.
pub fn read_instance(path: impl AsRef<Path>) -> Result<PersuasionMdp> {
    let inst: PersuasionMdp = read_json(path.as_ref(), "instance")?;
    inst.ensure_valid()?;
    Ok(inst)
}

pub fn write_instance(inst: &PersuasionMdp, path: impl AsRef<Path>) -> Result<()> {
    inst.ensure_valid()?;
    write_json(inst, path.as_ref())
}
