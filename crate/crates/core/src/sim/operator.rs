use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::space::SyntheticSpace;
use super::SimError;

/// Tolerance for affinity ties under an infinite `beta_logit`.
const TIE_EPS: f64 = 1e-12;

/// Self-reinforcing stochastic transition operator.
///
/// `logit(t) = beta_logit * base_affinity(s, t) + lambda * w(s, t)`, softmax
/// over states at least `delta_min` away from the current state (and from
/// the previous one in history mode). `beta_logit = inf` takes the affinity
/// argmax and breaks ties by the softmax of `lambda * w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorConfig {
    pub beta_logit: f64,
    pub lambda: f64,
    pub eta: f64,
    pub delta_min: f64,
    pub history_mode: bool,
    pub base_affinity: Vec<Vec<f64>>,
    pub seed: u64,
}

impl OperatorConfig {
    pub fn new(base_affinity: Vec<Vec<f64>>) -> Self {
        OperatorConfig {
            beta_logit: 1.5,
            lambda: 1.0,
            eta: 2.0,
            delta_min: 0.01,
            history_mode: false,
            base_affinity,
            seed: 0,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        OperatorConfig { seed, ..self.clone() }
    }

    pub fn validate(&self, space: &SyntheticSpace) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidParameter(m));
        if !(self.beta_logit > 0.0) {
            return bad(format!("beta_logit must be > 0, got {}", self.beta_logit));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return bad(format!("eta must be >= 0, got {}", self.eta));
        }
        if !(self.delta_min >= 0.0) {
            return bad(format!("delta_min must be >= 0, got {}", self.delta_min));
        }
        let n = space.len();
        if self.base_affinity.len() != n || self.base_affinity.iter().any(|r| r.len() != n) {
            return bad(format!("base_affinity must be {n}x{n}"));
        }
        for i in 0..n {
            for j in 0..i {
                let (a, b) = (self.base_affinity[i][j], self.base_affinity[j][i]);
                if !a.is_finite() || a != b {
                    return bad(format!("base_affinity must be finite and symmetric at ({i}, {j})"));
                }
            }
        }
        Ok(())
    }
}

/// Reinforcement weights `w(a, b)`, all starting at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    n: usize,
    w: Vec<f64>,
}

impl Weights {
    pub fn zeros(n: usize) -> Self {
        Weights { n, w: vec![0.0; n * n] }
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.w[a * self.n + b]
    }

    /// `w(a, b) += eta` and `w(b, a) += eta`.
    pub fn reinforce(&mut self, a: usize, b: usize, eta: f64) {
        self.w[a * self.n + b] += eta;
        if a != b {
            self.w[b * self.n + a] += eta;
        }
    }

    pub(crate) fn snapshot(&self, a: usize, b: usize) -> (f64, f64) {
        (self.get(a, b), self.get(b, a))
    }

    pub(crate) fn restore(&mut self, a: usize, b: usize, saved: (f64, f64)) {
        self.w[a * self.n + b] = saved.0;
        self.w[b * self.n + a] = saved.1;
    }
}

/// Next-state distribution from `current`. `prev` is required exactly when
/// the operator runs in history mode.
pub fn transition_distribution(
    space: &SyntheticSpace,
    op: &OperatorConfig,
    weights: &Weights,
    current: usize,
    prev: Option<usize>,
) -> Result<Vec<f64>, SimError> {
    let n = space.len();
    if current >= n || prev.is_some_and(|p| p >= n) {
        return Err(SimError::InvalidParameter(format!("state out of range 0..{n}")));
    }
    let prev = match (op.history_mode, prev) {
        (true, Some(p)) => Some(p),
        (false, None) => None,
        (true, None) => return Err(SimError::InvalidParameter("history mode needs the previous state".into())),
        (false, Some(_)) => return Err(SimError::InvalidParameter("previous state given outside history mode".into())),
    };
    let allowed: Vec<bool> = (0..n)
        .map(|t| space.distance(current, t) >= op.delta_min && prev.is_none_or(|p| space.distance(p, t) >= op.delta_min))
        .collect();
    let aff = &op.base_affinity[current];
    let reinforcement = |t: usize| if op.lambda == 0.0 { 0.0 } else { op.lambda * weights.get(current, t) };

    let mut logits = vec![f64::NEG_INFINITY; n];
    if op.beta_logit.is_infinite() {
        let best = (0..n)
            .filter(|&t| allowed[t])
            .map(|t| aff[t])
            .fold(f64::NEG_INFINITY, f64::max);
        for t in (0..n).filter(|&t| allowed[t] && aff[t] >= best - TIE_EPS) {
            logits[t] = reinforcement(t);
        }
    } else {
        for t in (0..n).filter(|&t| allowed[t]) {
            logits[t] = op.beta_logit * aff[t] + reinforcement(t);
        }
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(SimError::EmptySupport { state: current });
    }
    let mut p: Vec<f64> = logits.iter().map(|&l| if l == f64::NEG_INFINITY { 0.0 } else { (l - max).exp() }).collect();
    let z: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= z);
    Ok(p)
}

/// Inverse-CDF draw; never returns a zero-probability state.
pub(crate) fn sample_index<R: Rng>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &pi) in p.iter().enumerate() {
        if pi > 0.0 {
            acc += pi;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// No preference between states.
pub fn uniform_affinity(n: usize) -> Vec<Vec<f64>> {
    vec![vec![0.0; n]; n]
}

/// Symmetric `U[0, 1]` affinities with a zero diagonal.
pub fn random_affinity(n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = uniform_affinity(n);
    for i in 0..n {
        for j in 0..i {
            let v: f64 = rng.random();
            a[i][j] = v;
            a[j][i] = v;
        }
    }
    a
}

/// Affinity 1 between `2m` and `2m + 1`, 0 elsewhere. With an odd `n` the
/// last state has no partner.
pub fn pair_affinity(n: usize) -> Vec<Vec<f64>> {
    let mut a = uniform_affinity(n);
    for i in (0..n - n % 2).step_by(2) {
        a[i][i + 1] = 1.0;
        a[i + 1][i] = 1.0;
    }
    a
}

/// States `0, 1, 2` form a mutually attracted clique; the rest are paired
/// as in [`pair_affinity`].
pub fn pair_clique_affinity(n: usize) -> Vec<Vec<f64>> {
    let mut a = uniform_affinity(n);
    for i in 0..3.min(n) {
        for j in 0..3.min(n) {
            if i != j {
                a[i][j] = 1.0;
            }
        }
    }
    let rest = n.saturating_sub(3);
    for k in (0..rest - rest % 2).step_by(2) {
        let (x, y) = (3 + k, 4 + k);
        a[x][y] = 1.0;
        a[y][x] = 1.0;
    }
    a
}

/// `-(ppl(a) + ppl(b)) / (2 * scale)`: every row prefers low-perplexity targets.
pub fn low_ppl_affinity(space: &SyntheticSpace, scale: f64) -> Vec<Vec<f64>> {
    let n = space.len();
    let mut a = uniform_affinity(n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                a[i][j] = -(space.intrinsic_ppl(i) + space.intrinsic_ppl(j)) / (2.0 * scale);
            }
        }
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::build_space;

    #[test]
    fn uniform_three_state_excluding_self() {
        let space = build_space(3, 4, 1).unwrap();
        let op = OperatorConfig {
            lambda: 0.0,
            delta_min: 1e-9,
            ..OperatorConfig::new(uniform_affinity(3))
        };
        let p = transition_distribution(&space, &op, &Weights::zeros(3), 0, None).unwrap();
        assert_eq!(p, vec![0.0, 0.5, 0.5]);
    }

    #[test]
    fn history_anchor_rules() {
        let space = build_space(4, 3, 2).unwrap();
        let op = OperatorConfig {
            history_mode: true,
            ..OperatorConfig::new(uniform_affinity(4))
        };
        let w = Weights::zeros(4);
        assert!(transition_distribution(&space, &op, &w, 0, None).is_err());
        let p = transition_distribution(&space, &op, &w, 0, Some(1)).unwrap();
        assert_eq!((p[0], p[1]), (0.0, 0.0));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn everything_forbidden_is_an_error() {
        let space = build_space(3, 2, 3).unwrap();
        let op = OperatorConfig {
            delta_min: 2.0,
            ..OperatorConfig::new(uniform_affinity(3))
        };
        assert_eq!(
            transition_distribution(&space, &op, &Weights::zeros(3), 1, None),
            Err(SimError::EmptySupport { state: 1 })
        );
    }

    #[test]
    fn infinite_beta_is_argmax() {
        let space = build_space(6, 3, 4).unwrap();
        let op = OperatorConfig {
            beta_logit: f64::INFINITY,
            ..OperatorConfig::new(pair_affinity(6))
        };
        let p = transition_distribution(&space, &op, &Weights::zeros(6), 2, None).unwrap();
        assert_eq!(p[3], 1.0);
    }

    #[test]
    fn affinity_shapes() {
        let a = pair_clique_affinity(7);
        assert_eq!(a[0][1], 1.0);
        assert_eq!(a[2][0], 1.0);
        assert_eq!(a[3][4], 1.0);
        assert_eq!(a[5][6], 1.0);
        assert_eq!(a[3][5], 0.0);
        let r = random_affinity(5, 9);
        assert_eq!(r[1][3], r[3][1]);
        assert_eq!(r[2][2], 0.0);
    }
}
