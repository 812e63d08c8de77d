use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::SimError;

/// Median and log-scale spread of the intrinsic perplexity draw, `1 + LogNormal`.
const PPL_LOG_MEDIAN: f64 = 20.0;
const PPL_LOG_SIGMA: f64 = 0.8;

/// Finite metric state space: unit vectors with `d(x, y) = (1 - cos) / 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpace {
    points: Vec<Vec<f64>>,
    dist: Vec<f64>,
    intrinsic_ppl: Vec<f64>,
}

impl SyntheticSpace {
    /// Normalizes `points` and precomputes distances.
    pub fn from_points(points: Vec<Vec<f64>>, intrinsic_ppl: Vec<f64>) -> Result<Self, SimError> {
        let n = points.len();
        if n < 3 {
            return Err(SimError::InvalidParameter(format!("need at least 3 states, got {n}")));
        }
        if intrinsic_ppl.len() != n {
            return Err(SimError::InvalidParameter("one intrinsic perplexity per state".into()));
        }
        if let Some(p) = intrinsic_ppl.iter().find(|p| !(**p >= 1.0 && p.is_finite())) {
            return Err(SimError::InvalidParameter(format!("intrinsic perplexity {p} < 1")));
        }
        let dim = points[0].len();
        let mut unit = Vec::with_capacity(n);
        for p in points {
            if p.len() != dim || dim < 2 {
                return Err(SimError::InvalidParameter("points must share one dimension >= 2".into()));
            }
            let norm = crate::metrics::norm(&p);
            if norm == 0.0 || !norm.is_finite() {
                return Err(SimError::InvalidParameter("zero point".into()));
            }
            unit.push(p.into_iter().map(|x| x / norm).collect::<Vec<_>>());
        }
        let mut dist = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..i {
                let cos: f64 = unit[i].iter().zip(&unit[j]).map(|(a, b)| a * b).sum();
                let d = ((1.0 - cos) / 2.0).clamp(0.0, 1.0);
                dist[i * n + j] = d;
                dist[j * n + i] = d;
            }
        }
        Ok(SyntheticSpace {
            points: unit,
            dist,
            intrinsic_ppl,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn point(&self, s: usize) -> &[f64] {
        &self.points[s]
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        self.dist[a * self.len() + b]
    }

    /// `1 - d`.
    pub fn similarity(&self, a: usize, b: usize) -> f64 {
        1.0 - self.distance(a, b)
    }

    pub fn intrinsic_ppl(&self, s: usize) -> f64 {
        self.intrinsic_ppl[s]
    }

    pub fn intrinsic_ppls(&self) -> &[f64] {
        &self.intrinsic_ppl
    }
}

/// Gaussian directions on the unit sphere and `1 + LogNormal(ln 20, 0.8)`
/// intrinsic perplexities, both from `seed`.
pub fn build_space(n: usize, d: usize, seed: u64) -> Result<SyntheticSpace, SimError> {
    if n < 3 {
        return Err(SimError::InvalidParameter(format!("need N >= 3, got {n}")));
    }
    if d < 2 {
        return Err(SimError::InvalidParameter(format!("need D >= 2, got {d}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    while points.len() < n {
        let p: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        if crate::metrics::norm(&p) > 1e-9 {
            points.push(p);
        }
    }
    let lognormal = LogNormal::new(PPL_LOG_MEDIAN.ln(), PPL_LOG_SIGMA).expect("valid lognormal");
    let ppl = (0..n).map(|_| 1.0 + lognormal.sample(&mut rng)).collect();
    SyntheticSpace::from_points(points, ppl)
}
