//! Probability-derived signals: perplexities, beam diversity, corpus dispersion.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::Chain;
use crate::gateway::{Backend, GatewayError};
use crate::metrics::{cosine_similarity, MetricsError};
use crate::runner::{build_prompt, PromptLibrary, PromptTemplate};

/// Eigenvalues of `K/n` below this are treated as exact zeros.
pub const EIGEN_FLOOR: f64 = 1e-10;

pub const FORWARD_PPL: &str = "forward_ppl";
pub const REVERSE_PPL: &str = "reverse_ppl";
pub const VENDI: &str = "vendi";
pub const CORPUS_PPL_STD: &str = "corpus_ppl_std";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SignalError {
    #[error("no token log-probabilities")]
    EmptyLogprobs,
    #[error("token {index} has positive log-probability {value}")]
    PositiveLogprob { index: usize, value: f64 },
    #[error("step {step}: scoring failed: {source}")]
    Scorer { step: usize, source: GatewayError },
    #[error("step {step}: {detail}")]
    Prompt { step: usize, detail: String },
    #[error("no embeddings")]
    NoEmbeddings,
    #[error("step {step} has candidates without embeddings")]
    MissingBeamEmbeddings { step: usize },
    #[error("snapshot {index} is empty")]
    EmptySnapshot { index: usize },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// `exp(-mean(token_logprobs))`.
pub fn conditional_perplexity(token_logprobs: &[f64]) -> Result<f64, SignalError> {
    if token_logprobs.is_empty() {
        return Err(SignalError::EmptyLogprobs);
    }
    if let Some((index, &value)) = token_logprobs.iter().enumerate().find(|(_, v)| **v > 0.0) {
        return Err(SignalError::PositiveLogprob { index, value });
    }
    let mean = token_logprobs.iter().sum::<f64>() / token_logprobs.len() as f64;
    Ok((-mean).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerplexitySeries {
    /// `(i, sigma(T_i | T_{i-1}))` for `i = 1..=M`.
    pub forward: Vec<(usize, f64)>,
    /// `(i, sigma(T_i | T_{i+1}))` for `i = 1..M`.
    pub reverse: Vec<(usize, f64)>,
    /// Mean of the last three forward values.
    pub alpha_estimate: f64,
}

fn template_for<'l>(chain: &Chain, step: usize, library: &'l PromptLibrary) -> Result<&'l PromptTemplate, SignalError> {
    let id = match &chain.steps[step].prompt_id {
        Some(id) => id.clone(),
        None => PromptLibrary::default_ids(chain.task, false).remove(0),
    };
    library.get(&id).ok_or_else(|| SignalError::Prompt {
        step,
        detail: format!("unknown prompt id {id}"),
    })
}

/// Scores every step with `scorer`, wrapping the conditioning text in the
/// prompt that produced the step (the task default when none is recorded).
///
/// Forward `sigma_i` scores `T_i` after the prompt applied to `T_{i-1}`;
/// reverse `sigma_hat_i` scores `T_i` after the prompt that produced
/// `T_{i+1}`, applied to `T_{i+1}`. The scorer need not be the backend that
/// generated the chain.
pub fn perplexity_series(
    chain: &Chain,
    scorer: &dyn Backend,
    model: &str,
    library: &PromptLibrary,
) -> Result<PerplexitySeries, SignalError> {
    let texts = chain.texts();
    let m = chain.rounds();
    let score = |step: usize, context: String, target: &str| -> Result<f64, SignalError> {
        let lp = scorer
            .score_continuation(model, &context, target)
            .map_err(|source| SignalError::Scorer { step, source })?;
        conditional_perplexity(&lp)
    };

    let forward: Vec<(usize, f64)> = (1..=m)
        .into_par_iter()
        .map(|i| {
            let t = template_for(chain, i, library)?;
            let prev = t.history.then(|| texts[i.saturating_sub(2)]);
            let ctx = build_prompt(t, texts[i - 1], prev).map_err(|e| SignalError::Prompt {
                step: i,
                detail: e.to_string(),
            })?;
            Ok((i, score(i, ctx, texts[i])?))
        })
        .collect::<Result<_, SignalError>>()?;

    let reverse: Vec<(usize, f64)> = (1..m)
        .into_par_iter()
        .map(|i| {
            let t = template_for(chain, i + 1, library)?;
            // a history prompt gets the conditioning text in both slots
            let prev = t.history.then_some(texts[i + 1]);
            let ctx = build_prompt(t, texts[i + 1], prev).map_err(|e| SignalError::Prompt {
                step: i,
                detail: e.to_string(),
            })?;
            Ok((i, score(i, ctx, texts[i])?))
        })
        .collect::<Result<_, SignalError>>()?;

    let tail = &forward[forward.len().saturating_sub(3)..];
    let alpha_estimate = tail.iter().map(|(_, s)| s).sum::<f64>() / tail.len() as f64;
    Ok(PerplexitySeries {
        forward,
        reverse,
        alpha_estimate,
    })
}

/// `exp(-sum lambda ln lambda)` over the eigenvalues of `K/n`, with the
/// cosine kernel `K`.
pub fn vendi_score(embeddings: &[Vec<f64>]) -> Result<f64, SignalError> {
    let n = embeddings.len();
    if n == 0 {
        return Err(SignalError::NoEmbeddings);
    }
    let mut k = DMatrix::<f64>::identity(n, n);
    for i in 0..n {
        for j in 0..i {
            let c = cosine_similarity(&embeddings[i], &embeddings[j])?;
            k[(i, j)] = c;
            k[(j, i)] = c;
        }
    }
    if n == 1 {
        cosine_similarity(&embeddings[0], &embeddings[0])?;
        return Ok(1.0);
    }
    k /= n as f64;
    let eigen = SymmetricEigen::new(k);
    let entropy: f64 = eigen
        .eigenvalues
        .iter()
        .filter(|&&l| l >= EIGEN_FLOOR)
        .map(|&l| -l * l.ln())
        .sum();
    Ok(entropy.exp().clamp(1.0, n as f64))
}

/// Vendi score of each step's beam, from stored candidate embeddings.
pub fn diversity_series(chain: &Chain) -> Result<Vec<(usize, f64)>, SignalError> {
    chain.steps[1..]
        .iter()
        .map(|s| {
            let vecs: Option<Vec<Vec<f64>>> = s.candidates.iter().map(|c| c.embedding.clone()).collect();
            match vecs {
                Some(v) if !v.is_empty() => Ok((s.step, vendi_score(&v)?)),
                _ => Err(SignalError::MissingBeamEmbeddings { step: s.step }),
            }
        })
        .collect()
}

/// Like [`diversity_series`], embedding candidate texts that carry no
/// stored vector.
pub fn diversity_series_with(chain: &Chain, embedder: &dyn Backend, model: &str) -> Result<Vec<(usize, f64)>, SignalError> {
    chain.steps[1..]
        .iter()
        .map(|s| {
            if s.candidates.is_empty() {
                return Err(SignalError::MissingBeamEmbeddings { step: s.step });
            }
            let vecs = match s.candidates.iter().map(|c| c.embedding.clone()).collect::<Option<Vec<_>>>() {
                Some(v) => v,
                None => {
                    let texts: Vec<String> = s.candidates.iter().map(|c| c.text.clone()).collect();
                    embedder
                        .embed(model, &texts)
                        .map_err(|source| SignalError::Scorer { step: s.step, source })?
                }
            };
            Ok((s.step, vendi_score(&vecs)?))
        })
        .collect()
}

/// Population standard deviation. Values are shifted by the first one, so
/// a constant input gives exactly zero.
pub fn population_std(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let shift = values[0];
    let mean = values.iter().map(|v| v - shift).sum::<f64>() / n;
    let var = values.iter().map(|v| (v - shift - mean).powi(2)).sum::<f64>() / n;
    var.max(0.0).sqrt()
}

/// Population std of per-text perplexity for each snapshot, in order.
pub fn corpus_perplexity_std_series<T, F>(snapshots: &[Vec<T>], perplexity: F) -> Result<Vec<f64>, SignalError>
where
    F: Fn(&T) -> f64,
{
    snapshots
        .iter()
        .enumerate()
        .map(|(index, snap)| {
            if snap.is_empty() {
                return Err(SignalError::EmptySnapshot { index });
            }
            let ppl: Vec<f64> = snap.iter().map(&perplexity).collect();
            Ok(population_std(&ppl))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::tests::chain_of;
    use crate::gateway::MockBackend;

    #[test]
    fn perplexity_examples() {
        let p = conditional_perplexity(&[0.5f64.ln(), 0.125f64.ln()]).unwrap();
        assert!((p - 4.0).abs() < 1e-12);
        assert_eq!(conditional_perplexity(&[0.0; 3]).unwrap(), 1.0);
        assert!(conditional_perplexity(&[]).is_err());
        assert!(matches!(
            conditional_perplexity(&[-1.0, 0.5]),
            Err(SignalError::PositiveLogprob { index: 1, .. })
        ));
    }

    #[test]
    fn vendi_examples() {
        let e = |v: &[f64]| v.to_vec();
        let same = vec![e(&[1.0, 2.0]); 3];
        assert!((vendi_score(&same).unwrap() - 1.0).abs() < 1e-9);
        let ortho = vec![e(&[1.0, 0.0, 0.0]), e(&[0.0, 1.0, 0.0]), e(&[0.0, 0.0, 1.0])];
        assert!((vendi_score(&ortho).unwrap() - 3.0).abs() < 1e-9);
        assert_eq!(vendi_score(&[e(&[3.0])]).unwrap(), 1.0);
        assert!(vendi_score(&[]).is_err());
        assert!(vendi_score(&[e(&[0.0, 0.0])]).is_err());
        assert!(vendi_score(&[e(&[1.0]), e(&[1.0, 0.0])]).is_err());
    }

    #[test]
    fn std_examples() {
        let s = corpus_perplexity_std_series(&[vec![2.0, 4.0], vec![3.0, 3.0]], |x| *x).unwrap();
        assert_eq!(s, vec![1.0, 0.0]);
        let empty: Vec<Vec<f64>> = vec![vec![1.0], vec![]];
        assert_eq!(
            corpus_perplexity_std_series(&empty, |x| *x),
            Err(SignalError::EmptySnapshot { index: 1 })
        );
    }

    #[test]
    fn single_round_chain_has_no_reverse_points() {
        let mock = MockBackend::default();
        let chain = chain_of(&["a b", "c d"]);
        let s = perplexity_series(&chain, &mock, "mock", &PromptLibrary::default()).unwrap();
        assert_eq!(s.forward.len(), 1);
        assert!(s.reverse.is_empty());
    }

    #[test]
    fn missing_beam_embeddings_name_the_step() {
        let chain = chain_of(&["a", "b", "c"]);
        assert_eq!(diversity_series(&chain), Err(SignalError::MissingBeamEmbeddings { step: 1 }));
    }
}
