//! Small nonparametric tests used to summarize replicated simulations.

use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, DiscreteCDF, Normal};

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignTest {
    pub positive: u64,
    pub negative: u64,
    /// Two-sided exact binomial p-value; zero differences are dropped.
    pub p_value: f64,
}

pub fn sign_test(pairs: &[(f64, f64)]) -> SignTest {
    let positive = pairs.iter().filter(|(a, b)| a > b).count() as u64;
    let negative = pairs.iter().filter(|(a, b)| a < b).count() as u64;
    let n = positive + negative;
    if n == 0 {
        return SignTest {
            positive,
            negative,
            p_value: 1.0,
        };
    }
    let tail = Binomial::new(0.5, n).expect("valid binomial").cdf(positive.min(negative));
    SignTest {
        positive,
        negative,
        p_value: (2.0 * tail).min(1.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KendallTrend {
    /// Kendall tau-b between position and value.
    pub tau: f64,
    pub z: f64,
    /// Two-sided normal approximation with tie correction.
    pub p_value: f64,
}

/// Mann-Kendall trend test of a series against its index.
pub fn kendall_trend(series: &[f64]) -> KendallTrend {
    let n = series.len();
    let mut s = 0i64;
    for i in 0..n {
        for j in i + 1..n {
            s += match series[j].partial_cmp(&series[i]) {
                Some(std::cmp::Ordering::Greater) => 1,
                Some(std::cmp::Ordering::Less) => -1,
                _ => 0,
            };
        }
    }
    let mut sorted = series.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut ties = Vec::new();
    let mut run = 1usize;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            if run > 1 {
                ties.push(run);
            }
            run = 1;
        }
    }
    if run > 1 {
        ties.push(run);
    }
    let nf = n as f64;
    let tie_var: f64 = ties.iter().map(|&t| (t * (t - 1) * (2 * t + 5)) as f64).sum();
    let var = (nf * (nf - 1.0) * (2.0 * nf + 5.0) - tie_var) / 18.0;
    let n0 = nf * (nf - 1.0) / 2.0;
    let n1: f64 = ties.iter().map(|&t| (t * (t - 1)) as f64 / 2.0).sum();
    let tau = if n0 > n1 { s as f64 / (n0 * (n0 - n1)).sqrt() } else { 0.0 };
    let z = if var <= 0.0 {
        0.0
    } else if s > 0 {
        (s as f64 - 1.0) / var.sqrt()
    } else if s < 0 {
        (s as f64 + 1.0) / var.sqrt()
    } else {
        0.0
    };
    let normal = Normal::standard();
    KendallTrend {
        tau,
        z,
        p_value: (2.0 * (1.0 - normal.cdf(z.abs()))).min(1.0),
    }
}

/// Pearson goodness-of-fit p-value of `observed` counts against `expected`
/// probabilities. Cells with zero expected probability must be empty.
pub fn chi_square_gof(observed: &[u64], expected: &[f64]) -> f64 {
    let total: u64 = observed.iter().sum();
    let mut stat = 0.0;
    let mut cells = 0;
    for (&o, &p) in observed.iter().zip(expected) {
        if p == 0.0 {
            if o > 0 {
                return 0.0;
            }
            continue;
        }
        let e = p * total as f64;
        stat += (o as f64 - e).powi(2) / e;
        cells += 1;
    }
    if cells < 2 {
        return 1.0;
    }
    1.0 - ChiSquared::new((cells - 1) as f64).expect("positive dof").cdf(stat)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn sign_test_extremes() {
        let all: Vec<(f64, f64)> = (0..10).map(|_| (1.0, 0.0)).collect();
        let t = sign_test(&all);
        assert_eq!(t.positive, 10);
        assert!((t.p_value - 2.0 / 1024.0).abs() < 1e-12);
        assert_eq!(sign_test(&[(1.0, 1.0)]).p_value, 1.0);
    }

    #[test]
    fn kendall_detects_monotone_decrease() {
        let s: Vec<f64> = (0..20).map(|i| 10.0 - i as f64).collect();
        let k = kendall_trend(&s);
        assert!((k.tau + 1.0).abs() < 1e-12);
        assert!(k.p_value < 1e-6);
        let flat = kendall_trend(&[1.0; 5]);
        assert_eq!(flat.p_value, 1.0);
    }

    #[test]
    fn chi_square_on_exact_counts() {
        assert!((chi_square_gof(&[50, 50], &[0.5, 0.5]) - 1.0).abs() < 1e-12);
        assert!(chi_square_gof(&[90, 10], &[0.5, 0.5]) < 1e-10);
        assert_eq!(chi_square_gof(&[1, 5], &[0.0, 1.0]), 0.0);
    }
}
