//! Attractor-cycle analysis for successive text transformation chains.
//!
//! A chain starts from a source text `T_0` and repeatedly applies one
//! transformation (paraphrase, polish, translate, ...) to its own output,
//! `T_{n+1} = P(T_n)`. This crate measures what such chains converge to:
//!
//! - [`metrics`]: normalized edit distance, difference matrices, the
//!   k-periodicity degree `tau_k`, embedding similarity.
//! - [`signals`]: conditional and reverse perplexity, Vendi-score diversity,
//!   corpus perplexity dispersion.
//! - [`perturbation`]: local edits applied between iterations.
//! - [`runner`]: drives chains against a [`gateway`] backend (OpenAI-compatible
//!   HTTP or a deterministic mock).
//! - [`sim`]: a finite-state self-reinforcing operator that reproduces limit
//!   cycles, perplexity convergence and corpus homogenization with exact
//!   probabilities, plus an exact verifier of the periodicity lower bound.
//! - [`chain`]: the chain data model and its JSONL persistence.
//!
//! The `textcycle` binary wraps these behind `run`, `analyze`, `simulate`,
//! `verify-bound`, `perturb` and `report` subcommands (see [`cli`]).

pub mod chain;
pub mod cli;
pub mod gateway;
pub mod metrics;
pub mod perturbation;
pub mod runner;
pub mod signals;
pub mod sim;

mod fsutil;

pub use chain::{Candidate, Chain, Language, StepRecord, Task};
pub use metrics::{DifferenceMatrix, Granularity, PeriodicityReport};
