//! Synthetic finite-state model of successive transformation.
//!
//! States are unit vectors; one operator step samples the next state from a
//! softmax over fixed affinities plus reinforcement weights that grow in
//! both directions along every transition taken. Exact transition
//! probabilities make perplexities, cycle emergence and the periodicity
//! lower bound computable without a language model.

mod bound;
mod chain;
mod homogenize;
mod operator;
mod space;
pub mod stats;

pub use bound::{
    fit_similarity_slope, measure_bound_params, verify_bound, BoundParams, BoundReport, InitialState, Measurement,
    BAND_MASS_FLOOR, MAX_PATH_STEPS, MAX_STATES, NODE_BUDGET,
};
pub use chain::{simulate_chain, SimChain};
pub use homogenize::{homogenization_sim, homogenize_corpus, HomogenizeConfig, Homogenization};
pub use operator::{
    low_ppl_affinity, pair_affinity, pair_clique_affinity, random_affinity, transition_distribution, uniform_affinity,
    OperatorConfig, Weights,
};
pub use space::{build_space, SyntheticSpace};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("empty support from state {state}")]
    EmptySupport { state: usize },
    #[error("enumeration too large: {0}")]
    EnumerationTooLarge(String),
    #[error("degenerate fit: need at least two distinct sigma values")]
    DegenerateFit,
}
