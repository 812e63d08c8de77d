use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::operator::{sample_index, transition_distribution, OperatorConfig, Weights};
use super::space::SyntheticSpace;
use super::SimError;
use crate::signals::corpus_perplexity_std_series;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct HomogenizeConfig {
    pub corpus_size: usize,
    pub paraphrase_per_step: usize,
    pub add_per_step: usize,
    pub steps: usize,
    /// Entries sampled per snapshot for the dispersion statistic.
    pub sample_cap: usize,
    pub seed: u64,
}

impl Default for HomogenizeConfig {
    fn default() -> Self {
        HomogenizeConfig {
            corpus_size: 1000,
            paraphrase_per_step: 100,
            add_per_step: 100,
            steps: 30,
            sample_cap: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Homogenization {
    /// Corpus states after each step, starting with the initial corpus.
    pub snapshots: Vec<Vec<usize>>,
    /// Population std of intrinsic perplexity over each snapshot's sample.
    pub std_series: Vec<f64>,
}

/// Seeded initial corpus, then `steps` rounds of: move `paraphrase_per_step`
/// random entries one operator step (shared weights, reinforced after each
/// move) and append `add_per_step` fresh random states.
pub fn homogenization_sim(space: &SyntheticSpace, op: &OperatorConfig, cfg: &HomogenizeConfig) -> Result<Homogenization, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let corpus = (0..cfg.corpus_size).map(|_| rng.random_range(0..space.len())).collect();
    homogenize_from(space, op, corpus, cfg, &mut rng)
}

/// As [`homogenization_sim`] from a given initial corpus.
pub fn homogenize_corpus(
    space: &SyntheticSpace,
    op: &OperatorConfig,
    corpus: Vec<usize>,
    cfg: &HomogenizeConfig,
) -> Result<Homogenization, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    homogenize_from(space, op, corpus, cfg, &mut rng)
}

fn homogenize_from(
    space: &SyntheticSpace,
    op: &OperatorConfig,
    mut corpus: Vec<usize>,
    cfg: &HomogenizeConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Homogenization, SimError> {
    op.validate(space)?;
    if corpus.is_empty() || cfg.sample_cap == 0 {
        return Err(SimError::InvalidParameter("corpus and sample must be nonempty".into()));
    }
    if corpus.len() < cfg.paraphrase_per_step {
        return Err(SimError::InvalidParameter(format!(
            "corpus of {} cannot supply {} paraphrases per step",
            corpus.len(),
            cfg.paraphrase_per_step
        )));
    }
    if let Some(s) = corpus.iter().find(|&&s| s >= space.len()) {
        return Err(SimError::InvalidParameter(format!("corpus state {s} out of range")));
    }
    let mut weights = Weights::zeros(space.len());
    let mut snapshots = vec![corpus.clone()];
    let mut samples = vec![sample_states(&corpus, cfg.sample_cap, rng)];
    for _ in 0..cfg.steps {
        for idx in sample(rng, corpus.len(), cfg.paraphrase_per_step) {
            let current = corpus[idx];
            let p = transition_distribution(space, op, &weights, current, op.history_mode.then_some(current))?;
            let next = sample_index(&p, rng);
            weights.reinforce(current, next, op.eta);
            corpus[idx] = next;
        }
        for _ in 0..cfg.add_per_step {
            corpus.push(rng.random_range(0..space.len()));
        }
        samples.push(sample_states(&corpus, cfg.sample_cap, rng));
        snapshots.push(corpus.clone());
    }
    let std_series = corpus_perplexity_std_series(&samples, |&s| space.intrinsic_ppl(s)).map_err(|e| SimError::InvalidParameter(e.to_string()))?;
    Ok(Homogenization { snapshots, std_series })
}

fn sample_states(corpus: &[usize], cap: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if corpus.len() <= cap {
        return corpus.to_vec();
    }
    sample(rng, corpus.len(), cap).into_iter().map(|i| corpus[i]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::build_space;
    use crate::sim::operator::random_affinity;

    #[test]
    fn repeated_state_without_dynamics_is_flat_zero() {
        let space = build_space(10, 4, 0).unwrap();
        let op = OperatorConfig::new(random_affinity(10, 0));
        let cfg = HomogenizeConfig {
            paraphrase_per_step: 0,
            add_per_step: 0,
            steps: 5,
            ..HomogenizeConfig::default()
        };
        let h = homogenize_corpus(&space, &op, vec![3; 50], &cfg).unwrap();
        assert_eq!(h.std_series, vec![0.0; 6]);
    }

    #[test]
    fn no_dynamics_gives_constant_series() {
        let space = build_space(10, 4, 0).unwrap();
        let op = OperatorConfig::new(random_affinity(10, 0));
        let cfg = HomogenizeConfig {
            corpus_size: 200,
            paraphrase_per_step: 0,
            add_per_step: 0,
            steps: 4,
            ..HomogenizeConfig::default()
        };
        let h = homogenization_sim(&space, &op, &cfg).unwrap();
        assert!(h.std_series.iter().all(|&s| s == h.std_series[0]));
        assert_eq!(h.snapshots.len(), 5);
    }

    #[test]
    fn sizes_are_checked() {
        let space = build_space(10, 4, 0).unwrap();
        let op = OperatorConfig::new(random_affinity(10, 0));
        let cfg = HomogenizeConfig {
            corpus_size: 10,
            paraphrase_per_step: 11,
            ..HomogenizeConfig::default()
        };
        assert!(homogenization_sim(&space, &op, &cfg).is_err());
    }
}
