//! Exact value iteration for partially observable Markov decision
//! processes.
//!
//! Finite-horizon POMDP value functions are piecewise linear and convex,
//! so each one is a finite set of vectors evaluated by
//! `V(x) = max_alpha x . alpha` over beliefs `x`. The dynamic-programming
//! update maps one such set to the next; the expensive part is pruning
//! dominated vectors, which this crate does with deterministic linear
//! programs. Four interchangeable update algorithms are provided:
//!
//! - `exhaustive`: materialize the full cross sum over observations, then
//!   prune once;
//! - `ip`: incremental pruning, interleaving pruning with the cross sums;
//! - `rr`: incremental pruning with restricted-region dominance checks
//!   that pose far fewer LP constraints;
//! - `rr-min`: per-candidate selection of the smallest check set.
//!
//! All four produce the same minimal value functions; they differ in how
//! many LP constraints they pose, which the instrumentation counts
//! exactly (LPs solved, constraints posed, wall time per phase).
//!
//! ```
//! use incprune::{parse_pomdp, value_iterate, Belief, SolveConfig};
//!
//! let model = parse_pomdp(include_str!("../problems/tiny.pomdp"))?;
//! let solution = value_iterate(&model, &SolveConfig { max_stages: 5, ..Default::default() })?;
//! let x = Belief::new(vec![0.5, 0.5])?;
//! let (value, winner) = incprune::pwlc::evaluate(&solution.value_function, &x)?;
//! println!("V(x) = {value}, act {:?}", winner.action);
//! # Ok::<(), incprune::Error>(())
//! ```
//!
//! The `incprune` binary exposes the same functionality as `solve`,
//! `bench`, `eval`, `oracle`, and `simulate` subcommands; the crate's
//! `examples/` directory has one runnable example per capability.

pub mod cli;
pub mod dpupdate;
pub mod error;
pub mod lp;
pub mod model;
pub mod pwlc;
pub mod solver;

pub use dpupdate::{
    dp_update, dp_update_with, ObservationOrder, UpdateOptions, UpdateStats, UpdateVariant,
    VariantKind,
};
pub use error::{Error, Result};
pub use lp::{dominate, solve_lp, DominanceWitness, LpOutcome, LpProblem};
pub use model::{
    belief_update, observation_prob, parse_pomdp, random_pomdp, Belief, PomdpModel,
};
pub use pwlc::{
    canonically_equal, cross_sum, evaluate, purge, remove_duplicates, AlphaVector, FilterStats,
    VectorSet,
};
pub use solver::{
    oracle_value, policy_action, residual_estimate, simulate, value_iterate, SolveConfig,
    Solution,
};
