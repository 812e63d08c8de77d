//! Textual-difference metrics over chains.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{validate_chain, Chain, Language};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    /// Unicode scalar values.
    #[default]
    Char,
    /// Whitespace-separated tokens (per character for Chinese).
    Word,
}

impl Granularity {
    pub fn as_str(self) -> &'static str {
        match self {
            Granularity::Char => "char",
            Granularity::Word => "word",
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("invalid chain {chain_id}: {detail}")]
    InvalidChain { chain_id: String, detail: String },
    #[error("chain too short for period {k}: M = {rounds}, need M >= {}", .k + 1)]
    TooShort { k: usize, rounds: usize },
    #[error("period k must be >= 1")]
    ZeroPeriod,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("step {step} has no embedding")]
    MissingEmbedding { step: usize },
}

/// Levenshtein distance over arbitrary units with unit costs.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    if short.is_empty() {
        return long.len();
    }
    let mut row: Vec<usize> = (0..=short.len()).collect();
    for (i, lu) in long.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, su) in short.iter().enumerate() {
            let sub = diag + usize::from(lu != su);
            diag = row[j + 1];
            row[j + 1] = sub.min(row[j] + 1).min(diag + 1);
        }
    }
    row[short.len()]
}

/// Splits text into comparison units.
pub fn units(text: &str, granularity: Granularity, language: Language) -> Vec<&str> {
    match (granularity, language) {
        (Granularity::Word, Language::En) => text.split_whitespace().collect(),
        // no whitespace segmentation for Chinese; compare per character
        (Granularity::Word, Language::Zh) | (Granularity::Char, _) => {
            text.char_indices().map(|(i, c)| &text[i..i + c.len_utf8()]).collect()
        }
    }
}

/// Levenshtein distance divided by the longer unit length; 0 for two empty texts.
pub fn normalized_edit_distance(a: &str, b: &str, granularity: Granularity) -> f64 {
    normalized_edit_distance_in(a, b, granularity, Language::En)
}

pub fn normalized_edit_distance_in(a: &str, b: &str, granularity: Granularity, language: Language) -> f64 {
    if a == b {
        return 0.0;
    }
    let ua = units(a, granularity, language);
    let ub = units(b, granularity, language);
    let denom = ua.len().max(ub.len());
    if denom == 0 {
        return 0.0;
    }
    levenshtein(&ua, &ub) as f64 / denom as f64
}

/// Pairwise normalized edit distances between every pair of steps of a chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifferenceMatrix {
    pub granularity: Granularity,
    pub values: Vec<Vec<f64>>,
}

impl DifferenceMatrix {
    pub fn from_texts(texts: &[&str], granularity: Granularity, language: Language) -> Self {
        let n = texts.len();
        let upper: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                (i + 1..n)
                    .map(|j| normalized_edit_distance_in(texts[i], texts[j], granularity, language))
                    .collect()
            })
            .collect();
        let mut values = vec![vec![0.0; n]; n];
        for (i, row) in upper.iter().enumerate() {
            for (off, &d) in row.iter().enumerate() {
                let j = i + 1 + off;
                values[i][j] = d;
                values[j][i] = d;
            }
        }
        DifferenceMatrix { granularity, values }
    }

    pub fn size(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }

    /// CSV with step indices as header row and first column, 6 decimals.
    pub fn to_csv(&self) -> String {
        let n = self.size();
        let mut out = String::from("step");
        for j in 0..n {
            let _ = write!(out, ",{j}");
        }
        out.push('\n');
        for (i, row) in self.values.iter().enumerate() {
            let _ = write!(out, "{i}");
            for v in row {
                let _ = write!(out, ",{v:.6}");
            }
            out.push('\n');
        }
        out
    }
}

pub fn difference_matrix(chain: &Chain, granularity: Granularity) -> Result<DifferenceMatrix, MetricsError> {
    ensure_valid(chain)?;
    Ok(DifferenceMatrix::from_texts(&chain.texts(), granularity, chain.language))
}

/// `tau_k = 1 - mean_{i=k+1..M} d(T_i, T_{i-k})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicityReport {
    pub k: usize,
    pub tau: f64,
    pub granularity: Granularity,
    pub per_pair: Vec<(usize, f64)>,
}

impl PeriodicityReport {
    /// Builds the report from lag distances `(i, d(T_i, T_{i-k}))`.
    pub fn from_pairs(k: usize, granularity: Granularity, per_pair: Vec<(usize, f64)>) -> Self {
        let tau = tau_from_distances(per_pair.iter().map(|&(_, d)| d));
        PeriodicityReport {
            k,
            tau,
            granularity,
            per_pair,
        }
    }
}

/// One minus the mean of the given distances.
pub fn tau_from_distances(distances: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = distances.into_iter().fold((0.0, 0usize), |(s, n), d| (s + d, n + 1));
    1.0 - sum / n as f64
}

/// Indices `i = k+1 ..= M` paired with `dist(i, i-k)`; needs `M >= k + 1`.
pub fn lag_pairs<F>(rounds: usize, k: usize, mut dist: F) -> Result<Vec<(usize, f64)>, MetricsError>
where
    F: FnMut(usize, usize) -> f64,
{
    if k == 0 {
        return Err(MetricsError::ZeroPeriod);
    }
    if rounds < k + 1 {
        return Err(MetricsError::TooShort { k, rounds });
    }
    Ok((k + 1..=rounds).map(|i| (i, dist(i, i - k))).collect())
}

pub fn lag_distance_series(
    chain: &Chain,
    k: usize,
    granularity: Granularity,
) -> Result<Vec<(usize, f64)>, MetricsError> {
    ensure_valid(chain)?;
    let texts = chain.texts();
    lag_pairs(chain.rounds(), k, |i, j| {
        normalized_edit_distance_in(texts[i], texts[j], granularity, chain.language)
    })
}

pub fn periodicity_degree(chain: &Chain, k: usize, granularity: Granularity) -> Result<PeriodicityReport, MetricsError> {
    let pairs = lag_distance_series(chain, k, granularity)?;
    Ok(PeriodicityReport::from_pairs(k, granularity, pairs))
}

pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64, MetricsError> {
    if u.len() != v.len() {
        return Err(MetricsError::DimensionMismatch(u.len(), v.len()));
    }
    let nu = norm(u);
    let nv = norm(v);
    if nu == 0.0 || nv == 0.0 {
        return Err(MetricsError::ZeroVector);
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Cosine similarity of each step's embedding with the origin's, for steps 1..=M.
pub fn similarity_to_origin_series(chain: &Chain) -> Result<Vec<(usize, f64)>, MetricsError> {
    let embedding = |idx: usize| {
        chain.steps[idx]
            .embedding
            .as_deref()
            .ok_or(MetricsError::MissingEmbedding {
                step: chain.steps[idx].step,
            })
    };
    let origin = embedding(0)?;
    (1..chain.steps.len())
        .map(|i| Ok((chain.steps[i].step, cosine_similarity(embedding(i)?, origin)?)))
        .collect()
}

fn ensure_valid(chain: &Chain) -> Result<(), MetricsError> {
    let violations = validate_chain(chain);
    if violations.is_empty() {
        Ok(())
    } else {
        Err(MetricsError::InvalidChain {
            chain_id: chain.chain_id.clone(),
            detail: violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "),
        })
    }
}

/// CSV with columns `step,value`, 6 decimals.
pub fn series_csv(series: &[(usize, f64)]) -> String {
    let mut out = String::from("step,value\n");
    for (i, v) in series {
        let _ = writeln!(out, "{i},{v:.6}");
    }
    out
}
