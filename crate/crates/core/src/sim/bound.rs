use serde::{Deserialize, Serialize};

use super::chain::{anchor, reverse_distribution};
use super::operator::{transition_distribution, OperatorConfig, Weights};
use super::space::SyntheticSpace;
use super::SimError;

pub const MAX_STATES: usize = 64;
/// Longest enumerated path, in transitions (`i + 1`).
pub const MAX_PATH_STEPS: usize = 12;
/// Decision nodes visited before giving up.
pub const NODE_BUDGET: u64 = 5_000_000;
/// Share of path mass that must sit inside the perplexity band.
pub const BAND_MASS_FLOOR: f64 = 0.5;

/// Parameters of the lower bound
/// `E[Omega(s_{i-1}, s_{i+1})] > (1 - k alpha)(1 - (beta - alpha) / theta)`.
///
/// Perplexities live on the rescaled axis `sigma' = 1 - 1/sigma = 1 - p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    pub alpha: f64,
    pub beta: f64,
    pub theta: f64,
    pub k_slope: f64,
    pub epsilon: f64,
}

impl BoundParams {
    pub fn rhs(&self) -> f64 {
        (1.0 - self.k_slope * self.alpha) * (1.0 - (self.beta - self.alpha) / self.theta)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let ok = self.theta > 0.0
            && self.k_slope > 0.0
            && self.epsilon >= 0.0
            && self.alpha.is_finite()
            && self.beta.is_finite()
            && self.k_slope.is_finite()
            && self.theta.is_finite();
        if ok {
            Ok(())
        } else {
            Err(SimError::InvalidParameter(format!(
                "bound parameters need theta > 0, k_slope > 0, epsilon >= 0 and finite values: {self:?}"
            )))
        }
    }
}

/// Distribution of `s_0` in the enumerated expectation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    #[default]
    Uniform,
    Fixed(usize),
}

/// Least-squares `k` in `omega = 1 - k * sigma` with the intercept fixed at 1.
pub fn fit_similarity_slope(samples: &[(f64, f64)]) -> Result<f64, SimError> {
    let weighted: Vec<(f64, f64, f64)> = samples.iter().map(|&(s, o)| (1.0, s, o)).collect();
    weighted_slope(&weighted)
}

fn weighted_slope(samples: &[(f64, f64, f64)]) -> Result<f64, SimError> {
    let live: Vec<_> = samples.iter().filter(|(w, _, _)| *w > 0.0).collect();
    let distinct = live.iter().any(|(_, s, _)| *s != live[0].1);
    if live.len() < 2 || !distinct {
        return Err(SimError::DegenerateFit);
    }
    let num: f64 = live.iter().map(|(w, s, o)| w * s * (1.0 - o)).sum();
    let den: f64 = live.iter().map(|(w, s, _)| w * s * s).sum();
    Ok(num / den)
}

/// Visits every reachable history `s_0..=s_i` with its exact probability,
/// replaying reinforcement along the path. The callback receives the path
/// mass, the states, the distribution of `s_{i+1}` and the reverse
/// distribution from `s_i`, both under the weights after step `i`.
fn enumerate<F>(space: &SyntheticSpace, op: &OperatorConfig, i: usize, initial: InitialState, mut visit: F) -> Result<u64, SimError>
where
    F: FnMut(f64, &[usize], &[f64], &[f64]),
{
    op.validate(space)?;
    let n = space.len();
    if i < 2 {
        return Err(SimError::InvalidParameter(format!("step index must be >= 2, got {i}")));
    }
    if n > MAX_STATES || i + 1 > MAX_PATH_STEPS {
        return Err(SimError::EnumerationTooLarge(format!(
            "N = {n}, i + 1 = {} (limits {MAX_STATES}, {MAX_PATH_STEPS})",
            i + 1
        )));
    }
    let starts: Vec<(usize, f64)> = match initial {
        InitialState::Uniform => (0..n).map(|s| (s, 1.0 / n as f64)).collect(),
        InitialState::Fixed(s) if s < n => vec![(s, 1.0)],
        InitialState::Fixed(s) => return Err(SimError::InvalidParameter(format!("initial state {s} out of range"))),
    };

    struct Walk<'a, F> {
        space: &'a SyntheticSpace,
        op: &'a OperatorConfig,
        target: usize,
        weights: Weights,
        states: Vec<usize>,
        nodes: u64,
        visit: F,
    }

    impl<F: FnMut(f64, &[usize], &[f64], &[f64])> Walk<'_, F> {
        fn go(&mut self, mass: f64) -> Result<(), SimError> {
            self.nodes += 1;
            if self.nodes > NODE_BUDGET {
                return Err(SimError::EnumerationTooLarge(format!("more than {NODE_BUDGET} nodes")));
            }
            let current = *self.states.last().expect("nonempty");
            let p = transition_distribution(self.space, self.op, &self.weights, current, anchor(self.op, &self.states))?;
            if self.states.len() == self.target + 1 {
                let q = reverse_distribution(self.space, self.op, &self.weights, current)?;
                (self.visit)(mass, &self.states, &p, &q);
                return Ok(());
            }
            for (t, &pt) in p.iter().enumerate() {
                if pt == 0.0 {
                    continue;
                }
                let saved = self.weights.snapshot(current, t);
                self.weights.reinforce(current, t, self.op.eta);
                self.states.push(t);
                let res = self.go(mass * pt);
                self.states.pop();
                self.weights.restore(current, t, saved);
                res?;
            }
            Ok(())
        }
    }

    let mut walk = Walk {
        space,
        op,
        target: i,
        weights: Weights::zeros(n),
        states: Vec::with_capacity(i + 1),
        nodes: 0,
        visit: &mut visit,
    };
    for (s0, mass) in starts {
        walk.states.clear();
        walk.states.push(s0);
        walk.go(mass)?;
    }
    Ok(walk.nodes)
}

/// Path-averaged quantities at step `i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    /// `E[1 - p(s_{i+1} | s_i)]`.
    pub alpha: f64,
    /// `E[1 - q(s_{i-1} | s_i)]`, `q` the reverse distribution that
    /// generates `s_{i+1}`.
    pub reverse: f64,
    /// Slope of `omega = 1 - k sigma'` over decision nodes, where `sigma'`
    /// is the expected rescaled perplexity of a draw and `omega` the
    /// expected similarity of two independent draws.
    pub k_slope: f64,
    pub nodes: u64,
}

impl Measurement {
    /// Bound parameters implied by the measurement; `beta` is raised to
    /// `alpha` when the measured reverse perplexity is lower.
    pub fn params(&self, theta: f64, epsilon: f64) -> BoundParams {
        BoundParams {
            alpha: self.alpha,
            beta: self.reverse.max(self.alpha),
            theta,
            k_slope: self.k_slope,
            epsilon,
        }
    }
}

/// Estimates `alpha`, the reverse perplexity and `k` by exact enumeration.
pub fn measure_bound_params(
    space: &SyntheticSpace,
    op: &OperatorConfig,
    i: usize,
    initial: InitialState,
) -> Result<Measurement, SimError> {
    let mut mass_total = 0.0;
    let mut alpha = 0.0;
    let mut reverse = 0.0;
    let mut samples = Vec::new();
    let nodes = enumerate(space, op, i, initial, |mass, states, p, q| {
        let back = states[states.len() - 2];
        let support: Vec<(usize, f64)> = p.iter().copied().enumerate().filter(|(_, x)| *x > 0.0).collect();
        let sigma: f64 = support.iter().map(|(_, x)| x * (1.0 - x)).sum();
        let omega: f64 = support
            .iter()
            .flat_map(|&(a, pa)| support.iter().map(move |&(b, pb)| (a, b, pa * pb)))
            .map(|(a, b, w)| w * space.similarity(a, b))
            .sum();
        mass_total += mass;
        alpha += mass * sigma;
        reverse += mass * (1.0 - q[back]);
        samples.push((mass, sigma, omega));
    })?;
    Ok(Measurement {
        alpha: alpha / mass_total,
        reverse: reverse / mass_total,
        k_slope: weighted_slope(&samples)?,
        nodes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub step_index: usize,
    pub initial: InitialState,
    pub params: BoundParams,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    pub assumptions_met: bool,
    /// Unmet assumptions, empty when `assumptions_met`.
    pub notes: Vec<String>,
    pub measured_alpha: f64,
    pub measured_reverse: f64,
    /// Path mass whose last transition has `|sigma' - alpha| <= epsilon`.
    pub band_mass: f64,
    pub nodes: u64,
}

/// Exact check of the bound at step `i` for the given parameters.
pub fn verify_bound(
    space: &SyntheticSpace,
    op: &OperatorConfig,
    i: usize,
    params: BoundParams,
    initial: InitialState,
) -> Result<BoundReport, SimError> {
    params.validate()?;
    let mut mass_total = 0.0;
    let mut dist = 0.0;
    let mut alpha = 0.0;
    let mut reverse = 0.0;
    let mut band = 0.0;
    let nodes = enumerate(space, op, i, initial, |mass, states, p, q| {
        let back = states[states.len() - 2];
        mass_total += mass;
        for (t, &pt) in p.iter().enumerate().filter(|(_, x)| **x > 0.0) {
            dist += mass * pt * space.distance(back, t);
            alpha += mass * pt * (1.0 - pt);
            if ((1.0 - pt) - params.alpha).abs() <= params.epsilon {
                band += mass * pt;
            }
        }
        reverse += mass * (1.0 - q[back]);
    })?;
    let lhs = 1.0 - dist / mass_total;
    let measured_alpha = alpha / mass_total;
    let measured_reverse = reverse / mass_total;
    let band_mass = band / mass_total;
    let rhs = params.rhs();

    let mut notes = Vec::new();
    if params.beta < params.alpha {
        notes.push(format!("beta {} < alpha {}", params.beta, params.alpha));
    }
    if params.beta - params.alpha >= params.theta {
        notes.push(format!("beta - alpha = {} is not below theta {}", params.beta - params.alpha, params.theta));
    }
    if measured_reverse > params.beta + 1e-12 {
        notes.push(format!("measured reverse perplexity {measured_reverse} exceeds beta {}", params.beta));
    }
    if band_mass < BAND_MASS_FLOOR {
        notes.push(format!("only {band_mass} of the mass lies within epsilon of alpha"));
    }
    Ok(BoundReport {
        step_index: i,
        initial,
        params,
        lhs,
        rhs,
        holds: lhs > rhs,
        assumptions_met: notes.is_empty(),
        notes,
        measured_alpha,
        measured_reverse,
        band_mass,
        nodes,
    })
}
