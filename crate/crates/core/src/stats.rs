//! Goodness-of-fit helpers and moment estimators.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_traits::Zero;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::combinatorics::{to_f64, BigRat};

/// Upper-tail p-value of Pearson's statistic for `observed` against
/// `expected` counts with `dof` degrees of freedom.
pub fn chi_square_p_value(observed: &[u64], expected: &[f64], dof: usize) -> f64 {
    assert_eq!(observed.len(), expected.len());
    assert!(dof >= 1);
    let stat: f64 = observed.iter().zip(expected).map(|(&o, &e)| (o as f64 - e).powi(2) / e).sum();
    let dist = ChiSquared::new(dof as f64).expect("positive degrees of freedom");
    1.0 - dist.cdf(stat)
}

/// Total variation distance between an empirical histogram and an exact law.
pub fn tv_distance(hist: &BTreeMap<u64, u64>, law: &BTreeMap<i64, BigRat>) -> f64 {
    let total: u64 = hist.values().sum();
    if total == 0 {
        return 1.0;
    }
    let mut keys: Vec<i64> = law.keys().copied().collect();
    keys.extend(hist.keys().map(|&k| k as i64));
    keys.sort_unstable();
    keys.dedup();
    let half_l1: f64 = keys
        .iter()
        .map(|k| {
            let emp = if *k >= 0 { hist.get(&(*k as u64)).copied().unwrap_or(0) } else { 0 };
            let p = law.get(k).map(to_f64).unwrap_or(0.0);
            (emp as f64 / total as f64 - p).abs()
        })
        .sum();
    half_l1 / 2.0
}

/// Chi-square test of a histogram of positive integers against `Geo(p)`.
///
/// Cells `1..K` are kept while their expected count is at least 5; the rest
/// of the tail is pooled into one cell.
pub fn geometric_chi_square(hist: &BTreeMap<u64, u64>, p: f64) -> f64 {
    let total: u64 = hist.values().sum();
    let nf = total as f64;
    let mut observed = Vec::new();
    let mut expected = Vec::new();
    let mut k = 1u64;
    let mut tail = 1.0;
    loop {
        let pk = p * (1.0 - p).powi(k as i32 - 1);
        let rest = tail - pk;
        if nf * pk < 5.0 || nf * rest < 5.0 {
            break;
        }
        observed.push(hist.get(&k).copied().unwrap_or(0));
        expected.push(nf * pk);
        tail = rest;
        k += 1;
    }
    let pooled: u64 = hist.range(k..).map(|(_, &c)| c).sum();
    observed.push(pooled);
    expected.push(nf * tail);
    if observed.len() < 2 {
        return 1.0;
    }
    chi_square_p_value(&observed, &expected, observed.len() - 1)
}

/// Sample moments of integer data, computed exactly and converted at the end.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub count: usize,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    /// `m3 / m2^{3/2}` with population central moments.
    pub skewness: f64,
    /// `m4 / m2^2 - 3`.
    pub excess_kurtosis: f64,
}

pub fn moments(values: &[i64]) -> Moments {
    let count = values.len();
    if count < 2 {
        let mean = values.first().map(|&v| v as f64).unwrap_or(f64::NAN);
        return Moments { count, mean, variance: f64::NAN, skewness: f64::NAN, excess_kurtosis: f64::NAN };
    }
    let n = BigInt::from(count);
    let mean = BigRat::new(values.iter().map(|&v| BigInt::from(v)).sum(), n.clone());
    let mut m = [BigRat::zero(), BigRat::zero(), BigRat::zero()];
    for &v in values {
        let d = BigRat::from_integer(BigInt::from(v)) - &mean;
        let d2 = &d * &d;
        m[0] += &d2;
        m[1] += &d2 * &d;
        m[2] += &d2 * &d2;
    }
    let nr = BigRat::from_integer(n.clone());
    let m2 = to_f64(&(&m[0] / &nr));
    let m3 = to_f64(&(&m[1] / &nr));
    let m4 = to_f64(&(&m[2] / &nr));
    let variance = to_f64(&(&m[0] / BigRat::from_integer(n - 1)));
    Moments { count, mean: to_f64(&mean), variance, skewness: m3 / m2.powf(1.5), excess_kurtosis: m4 / (m2 * m2) - 3.0 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::combinatorics::rat;

    #[test]
    fn chi_square_perfect_fit_has_p_one() {
        let p = chi_square_p_value(&[10, 10, 10], &[10.0, 10.0, 10.0], 2);
        assert!((p - 1.0).abs() < 1e-12);
        let p = chi_square_p_value(&[30, 0, 0], &[10.0, 10.0, 10.0], 2);
        assert!(p < 1e-10);
    }

    #[test]
    fn tv_of_exact_histogram_is_zero() {
        let hist = BTreeMap::from([(1u64, 1u64), (3, 2)]);
        let law = BTreeMap::from([(1i64, rat(1, 3)), (3, rat(2, 3))]);
        assert!(tv_distance(&hist, &law) < 1e-15);
        let hist = BTreeMap::from([(1u64, 1u64)]);
        assert!((tv_distance(&hist, &law) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn moments_of_symmetric_data() {
        let m = moments(&[-2, -1, 0, 1, 2]);
        assert_eq!(m.mean, 0.0);
        assert!((m.variance - 2.5).abs() < 1e-12);
        assert!(m.skewness.abs() < 1e-12);
        assert!((m.excess_kurtosis - (6.8 / 4.0 - 3.0)).abs() < 1e-12);
    }

    #[test]
    fn geometric_fit_accepts_its_own_expectation() {
        let p: f64 = 0.4;
        let hist: BTreeMap<u64, u64> = (1..40u64)
            .map(|k| (k, (1e6 * p * (1.0 - p).powi(k as i32 - 1)).round() as u64))
            .filter(|&(_, c)| c > 0)
            .collect();
        assert!(geometric_chi_square(&hist, p) > 0.5);
        assert!(geometric_chi_square(&hist, 0.3) < 1e-6);
    }
}
