use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::operator::{sample_index, transition_distribution, OperatorConfig, Weights};
use super::space::SyntheticSpace;
use super::SimError;
use crate::metrics::{lag_pairs, tau_from_distances, MetricsError};

/// States `s_0..=s_M` with exact per-step perplexities.
///
/// `sigma[i-1] = 1 / p(s_i | s_{i-1})` and `sigma_hat[i-1] = 1 / p(s_{i-1} | s_i)`,
/// both under the weights in force before step `i` reinforces them. The
/// reverse distribution ignores history (both anchors are `s_i`) and may be
/// infinite when `s_{i-1}` is outside its support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimChain {
    pub states: Vec<usize>,
    pub sigma: Vec<f64>,
    pub sigma_hat: Vec<f64>,
}

impl SimChain {
    pub fn rounds(&self) -> usize {
        self.states.len() - 1
    }

    /// `1 - mean_{i=k+1..M} d(s_i, s_{i-k})` with the space distance.
    pub fn tau(&self, space: &SyntheticSpace, k: usize) -> Result<f64, MetricsError> {
        let pairs = lag_pairs(self.rounds(), k, |i, j| space.distance(self.states[i], self.states[j]))?;
        Ok(tau_from_distances(pairs.into_iter().map(|(_, d)| d)))
    }

    /// `step,state,sigma,sigma_hat`; step 0 has empty perplexity fields.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,state,sigma,sigma_hat\n");
        let _ = writeln!(out, "0,{},,", self.states[0]);
        for i in 1..self.states.len() {
            let _ = writeln!(out, "{i},{},{:.6},{:.6}", self.states[i], self.sigma[i - 1], self.sigma_hat[i - 1]);
        }
        out
    }
}

/// History anchor for step `i`: `s_{i-2}`, with `s_0` standing in at step 1.
pub(crate) fn anchor(op: &OperatorConfig, states: &[usize]) -> Option<usize> {
    op.history_mode.then(|| states[states.len().saturating_sub(2)])
}

/// Reverse distribution from `from`, without history conditioning.
pub(crate) fn reverse_distribution(
    space: &SyntheticSpace,
    op: &OperatorConfig,
    weights: &Weights,
    from: usize,
) -> Result<Vec<f64>, SimError> {
    transition_distribution(space, op, weights, from, op.history_mode.then_some(from))
}

/// Samples `M` transitions from `s0`, reinforcing `w` in both directions
/// after each one.
pub fn simulate_chain(space: &SyntheticSpace, op: &OperatorConfig, s0: usize, m: usize) -> Result<SimChain, SimError> {
    op.validate(space)?;
    if m < 2 {
        return Err(SimError::InvalidParameter(format!("need M >= 2, got {m}")));
    }
    if s0 >= space.len() {
        return Err(SimError::InvalidParameter(format!("initial state {s0} out of range")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(op.seed);
    let mut weights = Weights::zeros(space.len());
    let mut states = vec![s0];
    let mut sigma = Vec::with_capacity(m);
    let mut sigma_hat = Vec::with_capacity(m);
    for _ in 0..m {
        let current = *states.last().expect("nonempty");
        let p = transition_distribution(space, op, &weights, current, anchor(op, &states))?;
        let next = sample_index(&p, &mut rng);
        let q = reverse_distribution(space, op, &weights, next)?;
        sigma.push(1.0 / p[next]);
        sigma_hat.push(1.0 / q[current]);
        weights.reinforce(current, next, op.eta);
        states.push(next);
    }
    Ok(SimChain {
        states,
        sigma,
        sigma_hat,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::operator::{pair_affinity, uniform_affinity};
    use crate::sim::build_space;

    #[test]
    fn involutive_operator_two_cycles() {
        let space = build_space(8, 4, 5).unwrap();
        let op = OperatorConfig {
            beta_logit: f64::INFINITY,
            ..OperatorConfig::new(pair_affinity(8))
        };
        let c = simulate_chain(&space, &op, 5, 10).unwrap();
        for i in 1..=8 {
            assert_eq!(c.states[i + 2], c.states[i]);
        }
        assert_eq!(c.states[1], 4);
        assert_eq!(c.tau(&space, 2).unwrap(), 1.0);
        assert!(c.sigma.iter().all(|&s| s == 1.0));
    }

    #[test]
    fn perplexities_are_at_least_one() {
        let space = build_space(10, 4, 6).unwrap();
        let op = OperatorConfig::new(uniform_affinity(10)).with_seed(3);
        let c = simulate_chain(&space, &op, 0, 20).unwrap();
        assert!(c.sigma.iter().chain(&c.sigma_hat).all(|&s| s >= 1.0));
        assert_eq!(c.to_csv().lines().count(), 22);
    }

    #[test]
    fn short_chains_are_rejected() {
        let space = build_space(4, 2, 0).unwrap();
        let op = OperatorConfig::new(uniform_affinity(4));
        assert!(simulate_chain(&space, &op, 0, 1).is_err());
        assert!(simulate_chain(&space, &op, 9, 4).is_err());
    }
}
