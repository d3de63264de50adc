//! Instance generators: the vertex-cover gadget and its cover-based
//! Markovian scheme, seeded random instances, a small fixture where
//! history-dependent schemes beat Markovian ones, and the brute-force
//! comparison between the two classes.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dp::{dp_solve, floor_to_grid, GridSpec};
use crate::error::{Error, Result};
use crate::mdp::{deviation_values, read_json, write_json, DeviationValues, PersuasionMdp};
use crate::scheme::{PromiseScheme, Violation, ViolationKind, ViolationReport};
use crate::{NORMALIZATION_TOL, VERIFY_TOL};

/// Candidate cap for the Markov-scheme enumeration.
pub const MARKOV_CANDIDATE_LIMIT: u128 = 10_000_000;

/// Largest graph accepted by [`minimum_vertex_cover`].
pub const COVER_SEARCH_MAX_VERTICES: usize = 24;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Graph {
    pub num_vertices: usize,
    /// Edges as `(u, v)` with `u < v`, in file order.
    pub edges: Vec<(usize, usize)>,
}

impl Graph {
    /// Checks simplicity and that every vertex `0..n` has an edge.
    pub fn new(num_vertices: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        let mut touched = vec![false; num_vertices];
        let mut normalized = Vec::with_capacity(edges.len());
        for (u, v) in edges {
            if u == v {
                return Err(Error::InvalidGraph(format!("self-loop at vertex {u}")));
            }
            let e = (u.min(v), u.max(v));
            if e.1 >= num_vertices {
                return Err(Error::InvalidGraph(format!(
                    "edge ({u}, {v}) names a vertex >= {num_vertices}"
                )));
            }
            if !seen.insert(e) {
                return Err(Error::InvalidGraph(format!("duplicate edge ({}, {})", e.0, e.1)));
            }
            touched[e.0] = true;
            touched[e.1] = true;
            normalized.push(e);
        }
        if let Some(v) = touched.iter().position(|t| !t) {
            return Err(Error::InvalidGraph(format!("vertex {v} has no edges")));
        }
        if normalized.is_empty() {
            return Err(Error::InvalidGraph("graph has no edges".into()));
        }
        Ok(Self {
            num_vertices,
            edges: normalized,
        })
    }

    /// Parses one `u v` pair per line; `#` starts a comment. The vertex
    /// count is one more than the largest index.
    pub fn parse(text: &str) -> Result<Self> {
        let mut edges = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let parsed: Option<Vec<usize>> = fields.iter().map(|f| f.parse().ok()).collect();
            match parsed.as_deref() {
                Some([u, v]) => edges.push((*u, *v)),
                _ => {
                    return Err(Error::Parse {
                        what: "edge list".into(),
                        message: format!("line {}: expected two vertex indices, got {line:?}", lineno + 1),
                    })
                }
            }
        }
        let n = edges.iter().map(|&(u, v)| u.max(v) + 1).max().unwrap_or(0);
        Self::new(n, edges)
    }

    pub fn complete(n: usize) -> Self {
        let edges = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect();
        Self::new(n, edges).expect("complete graphs on two or more vertices are valid")
    }

    pub fn is_cover(&self, cover: &[usize]) -> bool {
        self.uncovered_edge(cover).is_none()
    }

    fn uncovered_edge(&self, cover: &[usize]) -> Option<(usize, usize)> {
        self.edges
            .iter()
            .copied()
            .find(|(u, v)| !cover.contains(u) && !cover.contains(v))
    }
}

pub fn read_graph(path: impl AsRef<Path>) -> Result<Graph> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Graph::parse(&text)
}

/// A smallest vertex cover by exhaustive search; among covers of equal size
/// the one with the smallest bitmask wins.
pub fn minimum_vertex_cover(graph: &Graph) -> Result<Vec<usize>> {
    let n = graph.num_vertices;
    if n > COVER_SEARCH_MAX_VERTICES {
        return Err(Error::SizeGuard {
            what: "vertex subsets",
            required: 1u128 << n,
            limit: 1u128 << COVER_SEARCH_MAX_VERTICES,
        });
    }
    let mut best: Option<u32> = None;
    for mask in 0u32..(1u32 << n) {
        if best.is_some_and(|b| mask.count_ones() >= b.count_ones()) {
            continue;
        }
        if graph
            .edges
            .iter()
            .all(|&(u, v)| mask & (1 << u) != 0 || mask & (1 << v) != 0)
        {
            best = Some(mask);
        }
    }
    let mask = best.expect("the full vertex set is a cover");
    Ok((0..n).filter(|v| mask & (1 << v) != 0).collect())
}

/// State layout of the vertex-cover gadget.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GadgetLayout {
    pub num_edges: usize,
    pub num_vertices: usize,
}

impl GadgetLayout {
    pub const START_CHOICE: usize = 0;
    pub const START_SAMPLE: usize = 1;
    pub const VERTEX_DRAW: usize = 2;
    pub const SINK: usize = 3;

    pub fn edge(&self, i: usize) -> usize {
        4 + i
    }

    pub fn vertex(&self, v: usize) -> usize {
        4 + self.num_edges + v
    }

    pub fn num_states(&self) -> usize {
        4 + self.num_edges + self.num_vertices
    }
}

const GADGET_ACTIONS: usize = 3;
const GADGET_OBSERVATIONS: usize = 2;
const GADGET_HORIZON: usize = 3;

/// Per-state data of a time-homogeneous instance: prior row and, for each
/// action and observation, `(sender reward, receiver reward, next-state row)`.
type Outcome = (f64, f64, Vec<f64>);

struct StateSpec {
    mu: Vec<f64>,
    outcomes: Vec<Vec<Outcome>>,
}

fn homogeneous(horizon: usize, beta: Vec<f64>, specs: Vec<StateSpec>, labels: Vec<String>) -> PersuasionMdp {
    let mu: Vec<Vec<f64>> = specs.iter().map(|s| s.mu.clone()).collect();
    let pick = |f: &dyn Fn(&Outcome) -> f64| -> Vec<Vec<Vec<f64>>> {
        specs
            .iter()
            .map(|s| s.outcomes.iter().map(|row| row.iter().map(f).collect()).collect())
            .collect()
    };
    let rs = pick(&|o| o.0);
    let rr = pick(&|o| o.1);
    let tr: Vec<Vec<Vec<Vec<f64>>>> = specs
        .iter()
        .map(|s| {
            s.outcomes
                .iter()
                .map(|row| row.iter().map(|o| o.2.clone()).collect())
                .collect()
        })
        .collect();
    let mut inst = PersuasionMdp::from_tables(
        horizon,
        beta,
        vec![mu; horizon],
        vec![rs; horizon],
        vec![rr; horizon],
        vec![tr; horizon],
    );
    inst.states = labels;
    inst
}

fn point(n: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}

/// A state with one meaningful observation (index 0) whose real actions are
/// `actions`; missing actions repeat the last real one and observation 1
/// repeats observation 0.
fn single_observation_state(actions: Vec<Outcome>) -> StateSpec {
    let last = actions.last().expect("at least one action").clone();
    let outcomes = (0..GADGET_ACTIONS)
        .map(|a| {
            let o = actions.get(a).cloned().unwrap_or_else(|| last.clone());
            vec![o.clone(), o]
        })
        .collect();
    StateSpec {
        mu: vec![1.0, 0.0],
        outcomes,
    }
}

/// The horizon-3 gadget encoding vertex cover on `graph`.
pub fn vc_instance(graph: &Graph) -> PersuasionMdp {
    let layout = GadgetLayout {
        num_edges: graph.edges.len(),
        num_vertices: graph.num_vertices,
    };
    let n = layout.num_states();
    let sink = point(n, GadgetLayout::SINK);
    let mut over_edges = vec![0.0; n];
    for i in 0..layout.num_edges {
        over_edges[layout.edge(i)] = 1.0 / layout.num_edges as f64;
    }
    let mut over_vertices = vec![0.0; n];
    for v in 0..layout.num_vertices {
        over_vertices[layout.vertex(v)] = 1.0 / layout.num_vertices as f64;
    }

    let mut specs = vec![
        single_observation_state(vec![(0.0, 1.0, sink.clone()), (1.0, 0.0, over_edges)]),
        single_observation_state(vec![(0.0, 0.0, point(n, GadgetLayout::VERTEX_DRAW))]),
        single_observation_state(vec![(0.0, 0.0, over_vertices)]),
        single_observation_state(vec![(0.0, 0.0, sink.clone())]),
    ];
    let mut labels: Vec<String> = ["start", "start_sample", "vertex_draw", "sink"]
        .map(String::from)
        .to_vec();
    for &(u, v) in &graph.edges {
        specs.push(single_observation_state(vec![
            (0.0, 0.0, point(n, layout.vertex(u))),
            (0.0, 0.0, point(n, layout.vertex(v))),
        ]));
        labels.push(format!("edge_{u}_{v}"));
    }
    for v in 0..layout.num_vertices {
        let reveal = |hit: usize| -> Vec<(f64, f64, Vec<f64>)> {
            (0..GADGET_OBSERVATIONS)
                .map(|t| (0.0, if t == hit { 1.0 } else { 0.0 }, sink.clone()))
                .collect()
        };
        specs.push(StateSpec {
            mu: vec![0.5, 0.5],
            outcomes: vec![
                reveal(0),
                reveal(1),
                vec![(0.5, 0.5, sink.clone()); GADGET_OBSERVATIONS],
            ],
        });
        labels.push(format!("vertex_{v}"));
    }
    let mut beta = vec![0.0; n];
    beta[GadgetLayout::START_CHOICE] = 0.5;
    beta[GadgetLayout::START_SAMPLE] = 0.5;
    homogeneous(GADGET_HORIZON, beta, specs, labels)
}

/// Steps (0-based) at which each state can be occupied, by a forward sweep
/// from the support of the initial distribution over all positive-probability
/// transitions.
pub fn reachable_steps(inst: &PersuasionMdp) -> Vec<Vec<bool>> {
    let ns = inst.num_states();
    let mut reach = vec![vec![false; ns]; inst.horizon];
    for (s, &b) in inst.beta.iter().enumerate() {
        reach[0][s] = b > 0.0;
    }
    for h in 0..inst.horizon.saturating_sub(1) {
        for s in 0..ns {
            if !reach[h][s] {
                continue;
            }
            for (t, &w) in inst.mu[h][s].iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                for a in 0..inst.num_actions() {
                    for (sn, &p) in inst.transition[h][s][a][t].iter().enumerate() {
                        if p > 0.0 {
                            reach[h + 1][sn] = true;
                        }
                    }
                }
            }
        }
    }
    reach
}

/// A non-stationary Markovian scheme: `rec[h][s][θ][a]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkovScheme {
    pub rec: Vec<Vec<Vec<Vec<f64>>>>,
}

impl MarkovScheme {
    pub fn validate(&self, inst: &PersuasionMdp) -> Result<()> {
        let (ns, na, no) = (inst.num_states(), inst.num_actions(), inst.num_observations());
        if self.rec.len() != inst.horizon {
            return Err(Error::InvalidScheme(format!(
                "Markov scheme covers {} steps, instance has {}",
                self.rec.len(),
                inst.horizon
            )));
        }
        for (h, layer) in self.rec.iter().enumerate() {
            if layer.len() != ns {
                return Err(Error::InvalidScheme(format!("step {h} does not cover {ns} states")));
            }
            for (s, rows) in layer.iter().enumerate() {
                if rows.len() != no {
                    return Err(Error::InvalidScheme(format!(
                        "rec[{h}][{s}] must have {no} observations"
                    )));
                }
                for (t, row) in rows.iter().enumerate() {
                    let sum: f64 = row.iter().sum();
                    if row.len() != na
                        || row.iter().any(|p| !p.is_finite() || *p < 0.0)
                        || (sum - 1.0).abs() > NORMALIZATION_TOL
                    {
                        return Err(Error::InvalidScheme(format!(
                            "rec[{h}][{s}][{t}] is not a distribution"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Recommends the pooled deviation-optimal action everywhere.
    pub fn greedy(inst: &PersuasionMdp, dev: &DeviationValues) -> Self {
        let (na, no) = (inst.num_actions(), inst.num_observations());
        let rec = (0..inst.horizon)
            .map(|h| {
                (0..inst.num_states())
                    .map(|s| vec![point(na, dev.argmax[h][s]); no])
                    .collect()
            })
            .collect();
        Self { rec }
    }

    /// The same recommendations in promise form on the grid of step `delta`.
    /// Each state carries one promise per step: the floor of its receiver
    /// value under this scheme (promise 0 at the first step).
    pub fn to_promise_scheme(&self, inst: &PersuasionMdp, delta: f64) -> Result<PromiseScheme> {
        let eval = evaluate_markov_scheme(inst, self, 0.0)?;
        let grid = GridSpec::new(delta, inst.horizon)?;
        let hz = inst.horizon;
        let promise = |h: usize, s: usize| -> usize {
            if h == 0 || h == hz {
                0
            } else {
                floor_to_grid(eval.receiver[h][s], &grid)
            }
        };
        PromiseScheme::from_fn(
            inst,
            delta,
            |h, s| vec![promise(h, s)],
            |h, s, _, t| self.rec[h][s][t].clone(),
            |h, _, _, _, sn| promise(h + 1, sn),
        )
    }
}

pub fn read_markov_scheme(path: impl AsRef<Path>) -> Result<MarkovScheme> {
    read_json(path.as_ref(), "Markov scheme")
}

pub fn write_markov_scheme(scheme: &MarkovScheme, path: impl AsRef<Path>) -> Result<()> {
    write_json(scheme, path.as_ref())
}

/// The cover-based scheme on the gadget. At each state's natural step:
/// the start state recommends the action into the edge layer; edge states
/// point at their lowest-index endpoint in the cover; vertex states in the
/// cover reveal the observation and the others recommend the safe action.
/// Every other `(step, state)` pair, which no play can reach, recommends the
/// pooled deviation-optimal action.
pub fn vc_completeness_scheme(graph: &Graph, cover: &[usize]) -> Result<MarkovScheme> {
    if let Some((u, v)) = graph.uncovered_edge(cover) {
        return Err(Error::NotACover(u, v));
    }
    if let Some(&v) = cover.iter().find(|&&v| v >= graph.num_vertices) {
        return Err(Error::InvalidArgument(format!(
            "cover names vertex {v}, graph has {}",
            graph.num_vertices
        )));
    }
    let inst = vc_instance(graph);
    let dev = deviation_values(&inst);
    let mut scheme = MarkovScheme::greedy(&inst, &dev);
    let layout = GadgetLayout {
        num_edges: graph.edges.len(),
        num_vertices: graph.num_vertices,
    };
    let both = |a: usize| vec![point(GADGET_ACTIONS, a); GADGET_OBSERVATIONS];
    scheme.rec[0][GadgetLayout::START_CHOICE] = both(1);
    scheme.rec[0][GadgetLayout::START_SAMPLE] = both(0);
    scheme.rec[1][GadgetLayout::VERTEX_DRAW] = both(0);
    scheme.rec[1][GadgetLayout::SINK] = both(0);
    scheme.rec[2][GadgetLayout::SINK] = both(0);
    for (i, &(u, _)) in graph.edges.iter().enumerate() {
        let toward = if cover.contains(&u) { 0 } else { 1 };
        scheme.rec[1][layout.edge(i)] = both(toward);
    }
    for v in 0..graph.num_vertices {
        scheme.rec[2][layout.vertex(v)] = if cover.contains(&v) {
            vec![point(GADGET_ACTIONS, 0), point(GADGET_ACTIONS, 1)]
        } else {
            both(2)
        };
    }
    Ok(scheme)
}

/// Values of a Markovian scheme and its persuasiveness check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkovEvaluation {
    /// `Σ_s β(s) V^S_1(s)`.
    pub sender_value: f64,
    /// `sender[h][s]` for `h in 0..=H`.
    pub sender: Vec<Vec<f64>>,
    /// `receiver[h][s]` for `h in 0..=H`.
    pub receiver: Vec<Vec<f64>>,
    /// `receiver_action[h][s][a]` for `h in 0..H`.
    pub receiver_action: Vec<Vec<Vec<f64>>>,
    pub report: ViolationReport,
}

/// Backward induction under a Markovian scheme, then the deviation check at
/// every `(h, s, a, a')` with slack `epsilon`.
pub fn evaluate_markov_scheme(inst: &PersuasionMdp, scheme: &MarkovScheme, epsilon: f64) -> Result<MarkovEvaluation> {
    scheme.validate(inst)?;
    let dev = deviation_values(inst);
    Ok(evaluate_markov_unchecked(inst, &dev, scheme, epsilon))
}

fn evaluate_markov_unchecked(
    inst: &PersuasionMdp,
    dev: &DeviationValues,
    scheme: &MarkovScheme,
    epsilon: f64,
) -> MarkovEvaluation {
    let (hz, ns, na) = (inst.horizon, inst.num_states(), inst.num_actions());
    let mut sender = vec![vec![0.0; ns]; hz + 1];
    let mut receiver = vec![vec![0.0; ns]; hz + 1];
    let mut receiver_action = vec![vec![vec![0.0; na]; ns]; hz];
    let mut report = ViolationReport::new(VERIFY_TOL);
    for h in (0..hz).rev() {
        for s in 0..ns {
            let mut vs = 0.0;
            for (t, &w) in inst.mu[h][s].iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                for a in 0..na {
                    let phi = scheme.rec[h][s][t][a];
                    if phi == 0.0 {
                        continue;
                    }
                    let (mut cs, mut cr) = (0.0, 0.0);
                    for (sn, &p) in inst.transition[h][s][a][t].iter().enumerate() {
                        cs += p * sender[h + 1][sn];
                        cr += p * receiver[h + 1][sn];
                    }
                    vs += w * phi * (inst.sender_reward[h][s][a][t] + cs);
                    receiver_action[h][s][a] += w * phi * (inst.receiver_reward[h][s][a][t] + cr);
                }
            }
            sender[h][s] = vs;
            receiver[h][s] = receiver_action[h][s].iter().sum();
            for a in 0..na {
                let left = receiver_action[h][s][a];
                for a_dev in 0..na {
                    let right: f64 = inst.mu[h][s]
                        .iter()
                        .enumerate()
                        .filter(|(_, &w)| w != 0.0)
                        .map(|(t, &w)| w * scheme.rec[h][s][t][a] * dev.deviation_payoff(inst, h, s, a_dev, t))
                        .sum::<f64>()
                        - epsilon;
                    report.test(left, right, |_| Violation::markov(h, s, a, a_dev, left, right));
                }
            }
        }
    }
    let sender_value = inst.beta.iter().zip(&sender[0]).map(|(b, v)| b * v).sum();
    MarkovEvaluation {
        sender_value,
        sender,
        receiver,
        receiver_action,
        report,
    }
}

impl Violation {
    fn markov(h: usize, s: usize, a: usize, a_dev: usize, left: f64, right: f64) -> Self {
        Violation {
            kind: ViolationKind::Definition1,
            step: h,
            state: s,
            promise: None,
            history: None,
            action: Some(a),
            deviation: Some(a_dev),
            left,
            right,
            slack: right - left,
            reachable: None,
        }
    }
}

/// Seeded random instance: rewards uniform on `[0, 1)`, distributions drawn
/// uniformly from the simplex.
pub fn random_instance(
    seed: u64,
    num_states: usize,
    num_actions: usize,
    num_observations: usize,
    horizon: usize,
) -> Result<PersuasionMdp> {
    if num_states == 0 || num_actions == 0 || num_observations == 0 || horizon == 0 {
        return Err(Error::InvalidArgument("all dimensions must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let simplex = |n: usize, rng: &mut ChaCha8Rng| -> Vec<f64> {
        let draws: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
        let sum: f64 = draws.iter().sum();
        if sum > 0.0 {
            draws.iter().map(|d| d / sum).collect()
        } else {
            vec![1.0 / n as f64; n]
        }
    };
    let beta = simplex(num_states, &mut rng);
    let mut mu = Vec::with_capacity(horizon);
    let mut rs = Vec::with_capacity(horizon);
    let mut rr = Vec::with_capacity(horizon);
    let mut tr = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        mu.push(
            (0..num_states)
                .map(|_| simplex(num_observations, &mut rng))
                .collect::<Vec<_>>(),
        );
        let reward_table = |rng: &mut ChaCha8Rng| -> Vec<Vec<Vec<f64>>> {
            (0..num_states)
                .map(|_| {
                    (0..num_actions)
                        .map(|_| (0..num_observations).map(|_| rng.gen::<f64>()).collect())
                        .collect()
                })
                .collect()
        };
        rs.push(reward_table(&mut rng));
        rr.push(reward_table(&mut rng));
        tr.push(
            (0..num_states)
                .map(|_| {
                    (0..num_actions)
                        .map(|_| (0..num_observations).map(|_| simplex(num_states, &mut rng)).collect())
                        .collect()
                })
                .collect::<Vec<_>>(),
        );
    }
    let inst = PersuasionMdp::from_tables(horizon, beta, mu, rs, rr, tr);
    inst.ensure_valid()?;
    Ok(inst)
}

/// Two-step fixture where a history-dependent scheme earns 1.125 and the
/// best persuasive Markovian scheme earns 0.75.
///
/// A quarter of episodes start in `choose`, where the receiver would take a
/// safe 0.75 unless promised at least that much in `reveal`; the rest start
/// in `pass`, which leads to `reveal` with nothing to decide. In `reveal` the
/// sender wants action 0, which the receiver likes only on observation 0.
/// A Markovian scheme must treat both arrivals in `reveal` alike.
pub fn separation_fixture() -> PersuasionMdp {
    const CHOOSE: usize = 0;
    const PASS: usize = 1;
    const REVEAL: usize = 2;
    const END: usize = 3;
    let n = 4;
    let to = |s: usize| point(n, s);
    let single = |a0: (f64, f64, Vec<f64>), a1: (f64, f64, Vec<f64>)| StateSpec {
        mu: vec![1.0, 0.0],
        outcomes: vec![vec![a0.clone(), a0], vec![a1.clone(), a1]],
    };
    // Listed in index order: CHOOSE, PASS, REVEAL, END.
    let specs = vec![
        single((0.0, 0.75, to(END)), (1.0, 0.0, to(REVEAL))),
        single((0.0, 0.0, to(REVEAL)), (0.0, 0.0, to(REVEAL))),
        StateSpec {
            mu: vec![0.5, 0.5],
            outcomes: vec![
                vec![(1.0, 0.5, to(END)), (1.0, 0.5, to(END))],
                vec![(0.0, 0.0, to(END)), (0.0, 1.0, to(END))],
            ],
        },
        single((0.0, 0.0, to(END)), (0.0, 0.0, to(END))),
    ];
    let mut beta = vec![0.0; n];
    beta[CHOOSE] = 0.25;
    beta[PASS] = 0.75;
    let labels = ["choose", "pass", "reveal", "end"].map(String::from).to_vec();
    homogeneous(2, beta, specs, labels)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport {
    pub dp_value: f64,
    pub markov_value: f64,
    pub gap: f64,
    /// How far the grid enumeration and the DP's persuasiveness slack can
    /// move the comparison: `step·H(H+1)/2 + ε`.
    pub slack_bound: f64,
    pub markov_grid_step: f64,
    pub epsilon: f64,
    pub candidates: u128,
    pub persuasive_candidates: u64,
    pub best_markov: MarkovScheme,
}

/// All vectors of `parts` nonnegative integers summing to `total`.
fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for first in (0..=total).rev() {
        for mut rest in compositions(total - first, parts - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

fn actions_equivalent(inst: &PersuasionMdp, h: usize, s: usize) -> bool {
    let na = inst.num_actions();
    inst.mu[h][s]
        .iter()
        .enumerate()
        .filter(|(_, &w)| w > 0.0)
        .all(|(t, _)| {
            (1..na).all(|a| {
                inst.sender_reward[h][s][a][t] == inst.sender_reward[h][s][0][t]
                    && inst.receiver_reward[h][s][a][t] == inst.receiver_reward[h][s][0][t]
                    && inst.transition[h][s][a][t] == inst.transition[h][s][0][t]
            })
        })
}

/// Compares the DP value at `epsilon` with the best persuasive Markovian
/// scheme found by enumerating recommendation rows on a grid of step
/// `markov_grid_step`.
///
/// Only rows that matter are enumerated: states reachable at that step,
/// observations with positive prior, and states where the actions differ.
/// Every other row recommends the pooled deviation-optimal action.
pub fn separation_check(inst: &PersuasionMdp, markov_grid_step: f64, epsilon: f64) -> Result<SeparationReport> {
    inst.ensure_valid()?;
    let parts = (1.0 / markov_grid_step).round();
    if !(markov_grid_step > 0.0 && parts >= 1.0 && (parts * markov_grid_step - 1.0).abs() < 1e-9) {
        return Err(Error::InvalidArgument(format!(
            "Markov grid step must be 1/n for a positive integer n, got {markov_grid_step}"
        )));
    }
    let parts = parts as usize;
    let na = inst.num_actions();
    let dev = deviation_values(inst);
    let base = MarkovScheme::greedy(inst, &dev);
    let reach = reachable_steps(inst);
    let row_choices: Vec<Vec<f64>> = compositions(parts, na)
        .into_iter()
        .map(|c| c.into_iter().map(|x| x as f64 / parts as f64).collect())
        .collect();

    // Free slots: (h, s, θ) rows to enumerate.
    let mut slots = Vec::new();
    for h in 0..inst.horizon {
        for s in 0..inst.num_states() {
            if !reach[h][s] || actions_equivalent(inst, h, s) {
                continue;
            }
            for (t, &w) in inst.mu[h][s].iter().enumerate() {
                if w > 0.0 {
                    slots.push((h, s, t));
                }
            }
        }
    }
    let radix = row_choices.len() as u128;
    let mut candidates: u128 = 1;
    for _ in &slots {
        candidates = candidates.saturating_mul(radix);
        if candidates > MARKOV_CANDIDATE_LIMIT {
            return Err(Error::SizeGuard {
                what: "Markov scheme candidates",
                required: candidates,
                limit: MARKOV_CANDIDATE_LIMIT,
            });
        }
    }

    let decode = |mut idx: u128| -> MarkovScheme {
        let mut scheme = base.clone();
        for &(h, s, t) in &slots {
            scheme.rec[h][s][t] = row_choices[(idx % radix) as usize].clone();
            idx /= radix;
        }
        scheme
    };
    let best = (0..candidates as u64)
        .into_par_iter()
        .filter_map(|i| {
            let scheme = decode(i as u128);
            let eval = evaluate_markov_unchecked(inst, &dev, &scheme, 0.0);
            eval.report.violations.is_empty().then_some((eval.sender_value, i))
        })
        .fold(
            || (0u64, None::<(f64, u64)>),
            |(count, best), cand| (count + 1, pick_best(best, Some(cand))),
        )
        .reduce(|| (0, None), |(c1, b1), (c2, b2)| (c1 + c2, pick_best(b1, b2)));
    let (persuasive_candidates, best) = best;
    let (markov_value, best_index) = best.ok_or_else(|| {
        Error::Internal("no persuasive Markov scheme on the grid; the greedy scheme should always qualify".into())
    })?;

    let solved = dp_solve(inst, epsilon)?;
    let h = inst.horizon as f64;
    let slack_bound = markov_grid_step * h * (h + 1.0) / 2.0 + epsilon;
    Ok(SeparationReport {
        dp_value: solved.sender_value,
        markov_value,
        gap: solved.sender_value - markov_value,
        slack_bound,
        markov_grid_step,
        epsilon,
        candidates,
        persuasive_candidates,
        best_markov: decode(best_index as u128),
    })
}

/// Higher value wins; ties go to the lower candidate index.
fn pick_best(a: Option<(f64, u64)>, b: Option<(f64, u64)>) -> Option<(f64, u64)> {
    match (a, b) {
        (None, x) | (x, None) => x,
        (Some(x), Some(y)) => {
            if y.0 > x.0 || (y.0 == x.0 && y.1 < x.1) {
                Some(y)
            } else {
                Some(x)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::validate_instance;

    #[test]
    fn gadget_state_counts() {
        assert_eq!(vc_instance(&Graph::complete(4)).num_states(), 14);
        let single = Graph::parse("0 1\n").unwrap();
        assert_eq!(vc_instance(&single).num_states(), 7);
        assert!(validate_instance(&vc_instance(&Graph::complete(4))).is_empty());
    }

    #[test]
    fn graph_parsing_rejects_bad_input() {
        assert!(matches!(Graph::parse("0 0"), Err(Error::InvalidGraph(_))));
        assert!(matches!(Graph::parse("0 1\n1 0"), Err(Error::InvalidGraph(_))));
        assert!(matches!(Graph::parse("0 2"), Err(Error::InvalidGraph(_))));
        assert!(matches!(Graph::parse("0 x"), Err(Error::Parse { .. })));
        let g = Graph::parse("# triangle\n0 1\n1 2 # last\n\n2 0\n").unwrap();
        assert_eq!(g.edges, vec![(0, 1), (1, 2), (0, 2)]);
    }

    #[test]
    fn gadget_deviation_values() {
        let inst = vc_instance(&Graph::complete(4));
        let dev = deviation_values(&inst);
        let layout = GadgetLayout {
            num_edges: 6,
            num_vertices: 4,
        };
        assert_eq!(dev.value(0, GadgetLayout::START_CHOICE), 1.0);
        assert_eq!(dev.value(0, GadgetLayout::START_SAMPLE), 0.5);
        assert_eq!(dev.value(1, layout.edge(0)), 0.5);
        assert_eq!(dev.value(2, layout.vertex(3)), 0.5);
    }

    #[test]
    fn gadget_states_have_one_step() {
        let inst = vc_instance(&Graph::complete(4));
        let reach = reachable_steps(&inst);
        for s in (0..inst.num_states()).filter(|&s| s != GadgetLayout::SINK) {
            assert_eq!((0..3).filter(|&h| reach[h][s]).count(), 1, "state {s}");
        }
    }

    #[test]
    fn cover_search_on_k4() {
        assert_eq!(minimum_vertex_cover(&Graph::complete(4)).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn completeness_scheme_value() {
        let g = Graph::complete(4);
        let scheme = vc_completeness_scheme(&g, &[0, 1, 2]).unwrap();
        let eval = evaluate_markov_scheme(&vc_instance(&g), &scheme, 1e-9).unwrap();
        assert!((eval.sender_value - 0.5625).abs() < 1e-9);
        assert!(eval.report.is_clean());
    }

    #[test]
    fn full_cover_never_uses_the_safe_action() {
        let g = Graph::complete(4);
        let scheme = vc_completeness_scheme(&g, &[0, 1, 2, 3]).unwrap();
        let layout = GadgetLayout {
            num_edges: 6,
            num_vertices: 4,
        };
        for v in 0..4 {
            assert!(scheme.rec[2][layout.vertex(v)].iter().all(|row| row[2] == 0.0));
        }
    }

    #[test]
    fn non_cover_names_the_edge() {
        let g = Graph::complete(4);
        match vc_completeness_scheme(&g, &[0, 1]) {
            Err(Error::NotACover(u, v)) => assert_eq!((u, v), (2, 3)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn random_instances_are_seeded() {
        let a = random_instance(7, 3, 2, 2, 2).unwrap();
        let b = random_instance(7, 3, 2, 2, 2).unwrap();
        let c = random_instance(8, 3, 2, 2, 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(validate_instance(&a).is_empty());
        assert!(random_instance(1, 0, 1, 1, 1).is_err());
    }

    #[test]
    fn compositions_count() {
        assert_eq!(compositions(4, 2).len(), 5);
        assert_eq!(compositions(20, 3).len(), 231);
        assert!(compositions(3, 3).iter().all(|c| c.iter().sum::<usize>() == 3));
    }

    #[test]
    fn fixture_markov_optimum() {
        let inst = separation_fixture();
        assert!(validate_instance(&inst).is_empty());
        let dev = deviation_values(&inst);
        assert_eq!(dev.value(0, 0), 0.75);
        assert_eq!(dev.value(1, 2), 0.5);
    }
}
