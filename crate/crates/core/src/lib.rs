//! Bayesian persuasion in finite-horizon MDPs with a farsighted receiver.
//!
//! The sender observes a private signal at every step and commits to a
//! history-dependent scheme of action recommendations. Histories are
//! summarized by *promises*: grid-valued lower bounds on the receiver's
//! future reward. The solver fills one value table per step with an
//! LP-relaxation oracle and assembles an ε-persuasive promise-form scheme.
//!
//! Module map:
//!
//! - [`mdp`]: instance model, validation, deviation values, file I/O.
//! - [`lp`]: dense two-phase simplex.
//! - [`scheme`]: promise-form schemes, their value recursions and verifiers.
//! - [`oracle`]: the per-cell relaxed LP, its solution mapping and derandomization.
//! - [`dp`]: the backward sweep over steps, states and promise grid points.
//! - [`instances`]: vertex-cover gadget, Markovian schemes, random instances,
//!   and the Markov-vs-history separation check.
//! - [`simulate`]: Monte Carlo sender/receiver interaction.

// Dense numeric tables read best with explicit indices.
#![allow(clippy::needless_range_loop)]

pub mod dp;
pub mod error;
pub mod instances;
pub mod lp;
pub mod mdp;
pub mod oracle;
pub mod scheme;
pub mod simulate;

pub use dp::{ceil_to_grid, dp_solve, floor_to_grid, DpOptions, GridSpec, SolveResult};
pub use error::{Error, Result};
pub use mdp::{deviation_values, DeviationValues, History, PersuasionMdp};
pub use oracle::{approximate_oracle, OracleResult, TableValue, ValueTable};
pub use scheme::{PromiseScheme, SchemeValues, ViolationReport};

/// Tolerance for probability-row normalization.
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// Floating-point slack added to every verification inequality.
pub const VERIFY_TOL: f64 = 1e-9;
