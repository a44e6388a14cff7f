//! Closed-form constants and distributions, evaluated in exact rationals.
//!
//! Throughout, `m = ⌊n/2⌋`.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_traits::{One, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::combinatorics::{
    binomial, double_factorial, falling_double_factorial, falling_factorial, int_rat, rat, BigRat,
};
use crate::shapes::{gamma, validate_strong, weak_of_strong, StrongShape, WeakShape};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TheoryError {
    #[error("n must be at least {min}, got {n}")]
    TooSmall { n: usize, min: usize },
    #[error("this quantity is defined for odd n only, got n = {0}")]
    EvenN(usize),
    #[error("{word} is not a strong shape for n = {n}")]
    InvalidShape { word: String, n: usize },
    #[error("{shape} is not a weak shape for n = {n}")]
    InvalidWeakShape { shape: String, n: usize },
    #[error("invalid moment query: {0}")]
    BadQuery(String),
}

fn require(n: usize, min: usize) -> Result<(), TheoryError> {
    if n < min {
        Err(TheoryError::TooSmall { n, min })
    } else {
        Ok(())
    }
}

fn require_odd(n: usize, min: usize) -> Result<(), TheoryError> {
    if n.is_multiple_of(2) {
        return Err(TheoryError::EvenN(n));
    }
    require(n, min)
}

fn big(x: i64) -> BigInt {
    BigInt::from(x)
}

/// Probability generating function, stored by coefficients.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pgf {
    coeffs: Vec<BigRat>,
}

impl Pgf {
    pub fn new(mut coeffs: Vec<BigRat>) -> Self {
        while coeffs.len() > 1 && coeffs.last().is_some_and(Zero::is_zero) {
            coeffs.pop();
        }
        Self { coeffs }
    }

    /// The law of the constant 0.
    pub fn one() -> Self {
        Self { coeffs: vec![BigRat::one()] }
    }

    pub fn coefficients(&self) -> &[BigRat] {
        &self.coeffs
    }

    pub fn prob(&self, k: usize) -> BigRat {
        self.coeffs.get(k).cloned().unwrap_or_else(BigRat::zero)
    }

    pub fn total(&self) -> BigRat {
        self.coeffs.iter().sum()
    }

    pub fn mean(&self) -> BigRat {
        self.coeffs.iter().enumerate().map(|(k, p)| p * int_rat(big(k as i64))).sum()
    }

    pub fn variance(&self) -> BigRat {
        let mean = self.mean();
        let second: BigRat = self.coeffs.iter().enumerate().map(|(k, p)| p * int_rat(big((k * k) as i64))).sum();
        second - &mean * &mean
    }

    /// Law of the sum of independent variables.
    pub fn convolve(&self, other: &Pgf) -> Pgf {
        let mut out = vec![BigRat::zero(); self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Pgf::new(out)
    }

    pub fn power(&self, t: usize) -> Pgf {
        (0..t).fold(Pgf::one(), |acc, _| acc.convolve(self))
    }

    pub fn to_pmf(&self) -> Pmf {
        Pmf::new(
            self.coeffs.iter().enumerate().filter(|(_, p)| !p.is_zero()).map(|(k, p)| (k as i64, p.clone())).collect(),
        )
    }
}

/// A finitely supported law on the integers.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Pmf {
    support: BTreeMap<i64, BigRat>,
}

impl Pmf {
    pub fn new(support: BTreeMap<i64, BigRat>) -> Self {
        Self { support }
    }

    /// Normalises integer weights.
    pub fn from_weights<W: Into<BigInt> + Clone>(weights: &BTreeMap<i64, W>) -> Self {
        let total: BigInt = weights.values().cloned().map(Into::into).sum();
        Self {
            support: weights
                .iter()
                .map(|(&k, w)| (k, BigRat::new(w.clone().into(), total.clone())))
                .filter(|(_, p)| !p.is_zero())
                .collect(),
        }
    }

    pub fn support(&self) -> &BTreeMap<i64, BigRat> {
        &self.support
    }

    pub fn prob(&self, k: i64) -> BigRat {
        self.support.get(&k).cloned().unwrap_or_else(BigRat::zero)
    }

    pub fn total(&self) -> BigRat {
        self.support.values().sum()
    }

    pub fn mean(&self) -> BigRat {
        self.support.iter().map(|(&k, p)| p * int_rat(big(k))).sum()
    }

    pub fn variance(&self) -> BigRat {
        let mean = self.mean();
        let second: BigRat = self.support.iter().map(|(&k, p)| p * int_rat(big(k * k))).sum();
        second - &mean * &mean
    }
}

/// Per-layer reset probability `p₀`.
pub fn reset_probability(n: usize) -> Result<BigRat, TheoryError> {
    require(n, 1)?;
    let m = (n / 2) as i64;
    let d = double_factorial(2 * m - 1);
    let num = if n.is_multiple_of(2) { &d * &d } else { big((n * n) as i64) * &d * &d };
    Ok(BigRat::new(num, double_factorial(2 * n as i64 - 1)))
}

/// Loop rate `μ_n = Σ_{j=0}^{m-1} 1/(2n-2j-1)`.
pub fn loop_rate(n: usize) -> Result<BigRat, TheoryError> {
    require(n, 1)?;
    let n = n as i64;
    Ok((0..n / 2).map(|j| rat(1, 2 * n - 2 * j - 1)).sum())
}

/// Loop-count variance rate `σ_n² = Σ_{j=0}^{m-1} (2n-2j-2)/(2n-2j-1)²`.
pub fn loop_rate_variance(n: usize) -> Result<BigRat, TheoryError> {
    require(n, 1)?;
    let n = n as i64;
    Ok((0..n / 2)
        .map(|j| {
            let d = 2 * n - 2 * j - 1;
            rat(d - 1, d * d)
        })
        .sum())
}

/// Law of the number of loops closed by one layer in the modified process.
pub fn loop_increment_pgf(n: usize) -> Result<Pgf, TheoryError> {
    require(n, 1)?;
    let m = (n / 2) as i64;
    let ni = n as i64;
    let (lead, roots): (BigInt, Vec<i64>) = if n.is_multiple_of(2) {
        (double_factorial(ni - 1), (1..=m).map(|k| ni + 2 * (k - 1)).collect())
    } else {
        (double_factorial(ni), (1..=m).map(|k| ni + 2 * k - 1).collect())
    };
    let scale = BigRat::new(lead, double_factorial(2 * ni - 1));
    // Expand Π (x + c) with integer coefficients.
    let mut poly = vec![BigInt::one()];
    for c in roots {
        let mut next = vec![BigInt::zero(); poly.len() + 1];
        for (i, a) in poly.iter().enumerate() {
            next[i] += a * c;
            next[i + 1] += a;
        }
        poly = next;
    }
    Ok(Pgf::new(poly.into_iter().map(|a| int_rat(a) * &scale).collect()))
}

/// `((2n+1)/(3n), (2n+1)/3)`: vertex density of the transverse string and
/// its growth per level.
pub fn transverse_density(n: usize) -> Result<(BigRat, BigRat), TheoryError> {
    require_odd(n, 1)?;
    let n = n as i64;
    Ok((rat(2 * n + 1, 3 * n), rat(2 * n + 1, 3)))
}

/// CLT variance `(4/135)(n-1)(n+2)(2n+1)` of the transverse string length.
pub fn transverse_clt_variance(n: usize) -> Result<BigRat, TheoryError> {
    require_odd(n, 1)?;
    let n = n as i64;
    Ok(rat(4 * (n - 1) * (n + 2) * (2 * n + 1), 135))
}

/// Law of `V`, the number of level vertices on the infinite string:
/// `P[V = 2j+1] = ⟦2m⟧_j / ⟦2m+1⟧_{j+1}`.
pub fn level_occupancy_dist(n: usize) -> Result<Pmf, TheoryError> {
    require_odd(n, 1)?;
    let m = (n / 2) as i64;
    Ok(Pmf::new(
        (0..=m)
            .map(|j| {
                let p = BigRat::new(
                    falling_double_factorial(2 * m, j as u64),
                    falling_double_factorial(2 * m + 1, j as u64 + 1),
                );
                (2 * j + 1, p)
            })
            .collect(),
    ))
}

/// Law of `E`, the number of across edges of the infinite string in a layer.
pub fn layer_crossing_dist(n: usize) -> Result<Pmf, TheoryError> {
    require_odd(n, 1)?;
    let m = (n / 2) as u64;
    let mi = m as i64;
    let mut support = BTreeMap::new();
    for ell in 0..=m {
        let mut p = BigRat::zero();
        for j in ell..=m {
            for k in ell..=m {
                let num = binomial(j, ell)
                    * binomial(k, ell)
                    * falling_double_factorial(2 * mi, j)
                    * falling_double_factorial(2 * mi, k);
                if num.is_zero() {
                    continue;
                }
                p += BigRat::new(num, falling_double_factorial(4 * mi + 1, j + k + 1));
            }
        }
        support.insert(2 * ell as i64 + 1, p);
    }
    Ok(Pmf::new(support))
}

/// Rates of across and bending edges along the transverse string.
pub fn across_bend_rates(n: usize) -> Result<(BigRat, BigRat), TheoryError> {
    require_odd(n, 1)?;
    let m = (n / 2) as i64;
    let den = 12 * m + 3;
    Ok((rat(1, 1) + rat(8 * m * m, den), rat(8 * m * m + 4 * m, den)))
}

/// One-layer and eventual fates of a distinguished sling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlingFates {
    pub to_string: BigRat,
    pub to_loop: BigRat,
    pub survive: BigRat,
    /// Parameter of the geometric time until the fate is decided.
    pub geo_param: BigRat,
    pub eventual_string: BigRat,
    pub pair_eventual_string: BigRat,
}

pub fn sling_fate_probs(n: usize) -> Result<SlingFates, TheoryError> {
    require_odd(n, 3)?;
    let d = n as i64 + 2;
    Ok(SlingFates {
        to_string: rat(2, d),
        to_loop: rat(1, d),
        survive: rat(d - 3, d),
        geo_param: rat(3, d),
        eventual_string: rat(2, 3),
        pair_eventual_string: rat(8, 15),
    })
}

/// One-layer joint fates of two distinguished slings, rows (i) to (viii).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TwoSlingTable {
    pub rows: [BigRat; 8],
}

impl TwoSlingTable {
    pub const LABELS: [&'static str; 8] = [
        "both to string",
        "first to string, second to loop",
        "first to string, second survives",
        "first to loop, second survives",
        "both to loops separately",
        "both to one loop",
        "both survive separately",
        "both survive jointly",
    ];

    /// Rows (ii) to (iv) have mirror images with the slings swapped.
    pub const MULTIPLICITY: [u32; 8] = [1, 2, 2, 2, 1, 1, 1, 1];

    pub fn weighted_sum(&self) -> BigRat {
        self.rows.iter().zip(Self::MULTIPLICITY).map(|(p, w)| p * int_rat(big(w as i64))).sum()
    }
}

pub fn two_sling_table(n: usize) -> Result<TwoSlingTable, TheoryError> {
    require_odd(n, 5)?;
    let n = n as i64;
    let d = (n + 4) * (n + 2);
    Ok(TwoSlingTable {
        rows: [
            rat(8, d),
            rat(2, d),
            rat(2 * (n - 1), d),
            rat(n - 1, d),
            rat(1, d),
            rat(2, d),
            rat((n - 1) * (n - 3), d),
            rat(4 * (n - 1), d),
        ],
    })
}

/// Law of the number of slings absorbed by the string in one layer:
/// `P[X = s] = 2^s (2m+1) (m)_s / ⟦4m+1⟧_{s+1}`.
pub fn string_absorption_dist(n: usize) -> Result<Pmf, TheoryError> {
    require_odd(n, 1)?;
    let m = (n / 2) as i64;
    Ok(Pmf::new(
        (0..=m)
            .map(|s| {
                let num = (BigInt::one() << s as usize) * (2 * m + 1) * falling_factorial(m, s as u64);
                (s, BigRat::new(num, falling_double_factorial(4 * m + 1, s as u64 + 1)))
            })
            .collect(),
    ))
}

/// Rate, autocovariances and CLT variance of a shape count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapeRate {
    pub mu: BigRat,
    /// `K(0..=r+1)`; every later lag vanishes.
    pub autocov: Vec<BigRat>,
    pub sigma2: BigRat,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeakShapeRate {
    pub gamma: BigInt,
    pub mu: BigRat,
    pub sigma2: BigRat,
}

// Occupancy `a_i`, zero outside `0..=r`.
fn a_at(a: &[u32], i: i64) -> i64 {
    if i < 0 {
        0
    } else {
        a.get(i as usize).map_or(0, |&x| x as i64)
    }
}

// Edge count `b_i` of layer `s+i`: `b_0 = a_0`, `b_i = a_i + a_{i-1}`.
fn b_at(a: &[u32], i: i64) -> i64 {
    match i {
        i if i < 0 => 0,
        0 => a_at(a, 0),
        i => a_at(a, i) + a_at(a, i - 1),
    }
}

// Ordered selections of `k` items from a pool; 0 when the pool is too small.
fn select(pool: i64, k: i64) -> BigInt {
    if pool < k {
        BigInt::zero()
    } else {
        falling_factorial(pool, k as u64)
    }
}

fn fdf(n: usize, b: i64) -> BigInt {
    falling_double_factorial(2 * n as i64 - 1, b as u64)
}

// Π_{i≥0} (n)_{2a_i + 2a_{i-h}} / ⟦2n-1⟧_{b_i + b_{i-h}}, the lag-h product.
fn lag_product(n: usize, a: &[u32], h: i64) -> BigRat {
    let ni = n as i64;
    let top = a.len() as i64 + h;
    let mut num = BigInt::one();
    for i in 0..=top {
        num *= select(ni, 2 * a_at(a, i) + 2 * a_at(a, i - h));
        if num.is_zero() {
            return BigRat::zero();
        }
    }
    let den: BigInt = (0..=top).map(|i| fdf(n, b_at(a, i) + b_at(a, i - h))).product();
    BigRat::new(num, den)
}

fn weak_rate(n: usize, a: &WeakShape) -> ShapeRate {
    let a = a.a();
    let a0 = a[0] as i64;
    let ni = n as i64;
    let r = a.len() as i64 - 1;
    let mut num = BigInt::one();
    let mut den = BigInt::from(2 * a0);
    for i in 0..=r + 1 {
        num *= select(ni, 2 * a_at(a, i));
        den *= fdf(n, b_at(a, i));
    }
    let mu = BigRat::new(num, den);
    let mu2 = &mu * &mu;
    let scale = rat(1, 4 * a0 * a0);
    let mut autocov = vec![lag_product(n, a, 0) * &scale + &mu - &mu2];
    for h in 1..=r + 1 {
        autocov.push(lag_product(n, a, h) * &scale - &mu2);
    }
    let sigma2 = &autocov[0] + autocov[1..].iter().sum::<BigRat>() * rat(2, 1);
    ShapeRate { mu, autocov, sigma2 }
}

/// `μ_n^S`, `K_S(h)` and `σ²_{n,S}` for a strong shape.
pub fn shape_rate(n: usize, shape: &StrongShape) -> Result<ShapeRate, TheoryError> {
    if !validate_strong(shape, n) {
        return Err(TheoryError::InvalidShape { word: shape.to_string(), n });
    }
    let a = weak_of_strong(shape).expect("validated shape");
    Ok(weak_rate(n, &a))
}

/// Rate and CLT variance of the count of loops with weak shape `a`.
pub fn weak_shape_rate(n: usize, a: &WeakShape) -> Result<WeakShapeRate, TheoryError> {
    if !a.is_valid_for(n) {
        return Err(TheoryError::InvalidWeakShape { shape: a.to_string(), n });
    }
    let s = weak_rate(n, a);
    let g = gamma(a);
    let gr = int_rat(g.clone());
    let g2 = int_rat(&g * (&g - 1));
    Ok(WeakShapeRate { mu: &gr * &s.mu, sigma2: &gr * &gr * &s.sigma2 - g2 * &s.mu, gamma: g })
}

/// Which expectation of exploration indicators to evaluate. `k` and `k'`
/// index the start vertex `n - k` of a level, which has `k - 1` vertices
/// below it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentQuery {
    /// `E[Y^S_{n,k}(s)]`.
    Single { k: usize },
    /// `E[Y^S_{n,k}(s) Y^{S'}_{n,k'}(s)]` with `k' < k`.
    SameLevel { k: usize, k_prime: usize },
    /// `E[Y^S_{n,k}(s) Y^{S'}_{n,k'}(s+h)]` with `h > 0`.
    Lagged { k: usize, k_prime: usize, h: usize },
}

/// Exact pairwise moments of the shape indicators.
pub fn pairwise_shape_moments(
    n: usize,
    s: &StrongShape,
    s_prime: &StrongShape,
    query: MomentQuery,
) -> Result<BigRat, TheoryError> {
    for w in [s, s_prime] {
        if !validate_strong(w, n) {
            return Err(TheoryError::InvalidShape { word: w.to_string(), n });
        }
    }
    let a = weak_of_strong(s).expect("validated");
    let ap = weak_of_strong(s_prime).expect("validated");
    let (a, ap) = (a.a(), ap.a());
    let ni = n as i64;
    let a0 = a_at(a, 0);
    let ap0 = a_at(ap, 0);
    let check_k = |k: usize| {
        if (1..=n).contains(&k) {
            Ok(k as i64)
        } else {
            Err(TheoryError::BadQuery(format!("k = {k} outside 1..={n}")))
        }
    };
    let (num, den) = match query {
        MomentQuery::Single { k } => {
            let k = check_k(k)?;
            let mut num = select(k - 1, 2 * a0 - 1);
            let mut den = BigInt::one();
            for i in 0..=a.len() as i64 {
                if i >= 1 {
                    num *= select(ni, 2 * a_at(a, i));
                }
                den *= fdf(n, b_at(a, i));
            }
            (num, den)
        }
        MomentQuery::SameLevel { k, k_prime } => {
            let (k, kp) = (check_k(k)?, check_k(k_prime)?);
            if kp >= k {
                return Err(TheoryError::BadQuery("same-level moments need k' < k".into()));
            }
            let mut num = select(k - 2 * ap0 - 1, 2 * a0 - 1) * select(kp - 1, 2 * ap0 - 1);
            let mut den = BigInt::one();
            let top = a.len().max(ap.len()) as i64;
            for i in 0..=top {
                if i >= 1 {
                    num *= select(ni, 2 * a_at(a, i) + 2 * a_at(ap, i));
                }
                if num.is_zero() {
                    return Ok(BigRat::zero());
                }
                den *= fdf(n, b_at(a, i) + b_at(ap, i));
            }
            (num, den)
        }
        MomentQuery::Lagged { k, k_prime, h } => {
            let (k, kp) = (check_k(k)?, check_k(k_prime)?);
            if h == 0 {
                return Err(TheoryError::BadQuery("lagged moments need h > 0".into()));
            }
            let h = h as i64;
            let mut num = select(k - 1, 2 * a0 - 1) * select(kp - 1, 2 * ap0 - 1);
            let mut den = BigInt::one();
            let top = (a.len() as i64).max(ap.len() as i64 + h);
            for i in 0..=top {
                if i == h {
                    num *= select(ni - 2 * ap0, 2 * a_at(a, h));
                } else if i >= 1 {
                    num *= select(ni, 2 * a_at(a, i) + 2 * a_at(ap, i - h));
                }
                if num.is_zero() {
                    return Ok(BigRat::zero());
                }
                den *= fdf(n, b_at(a, i) + b_at(ap, i - h));
            }
            (num, den)
        }
    };
    Ok(BigRat::new(num, den))
}

/// String form of a rational plus its decimal value, for reports.
#[derive(Debug, Clone, Serialize)]
pub struct RatValue {
    pub exact: String,
    pub decimal: f64,
}

impl From<&BigRat> for RatValue {
    fn from(x: &BigRat) -> Self {
        Self { exact: crate::combinatorics::format_rat(x), decimal: crate::combinatorics::to_f64(x) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes::enumerate_strong;

    fn w(s: &str) -> StrongShape {
        s.parse().unwrap()
    }

    // The k-indexed form obtained in the proof.
    fn loop_rate_by_parity(n: usize) -> BigRat {
        let m = (n / 2) as i64;
        let n = n as i64;
        (1..=m).map(|k| if n % 2 == 0 { rat(1, n + 2 * k - 1) } else { rat(1, n + 2 * k) }).sum()
    }

    fn loop_variance_by_parity(n: usize) -> BigRat {
        let m = (n / 2) as i64;
        let n = n as i64;
        (1..=m)
            .map(|k| {
                if n % 2 == 0 {
                    let d = n + 2 * k - 1;
                    rat(n + 2 * (k - 1), d * d)
                } else {
                    let d = n + 2 * k;
                    rat(n + 2 * k - 1, d * d)
                }
            })
            .sum()
    }

    #[test]
    fn reset_probabilities() {
        assert_eq!(reset_probability(1).unwrap(), rat(1, 1));
        assert_eq!(reset_probability(2).unwrap(), rat(1, 3));
        assert_eq!(reset_probability(3).unwrap(), rat(3, 5));
        assert_eq!(reset_probability(5).unwrap(), rat(5, 21));
        assert!(reset_probability(0).is_err());
    }

    #[test]
    fn reset_probability_matches_layer_count() {
        for n in 1..=6 {
            let all: Vec<_> = crate::matching::enumerate_all(n).unwrap().collect();
            let hits = all.iter().filter(|l| l.across_count() == n % 2).count();
            assert_eq!(reset_probability(n).unwrap(), rat(hits as i64, all.len() as i64), "n={n}");
        }
    }

    #[test]
    fn loop_constants() {
        assert_eq!(loop_rate(1).unwrap(), rat(0, 1));
        assert_eq!(loop_rate(2).unwrap(), rat(1, 3));
        assert_eq!(loop_rate(3).unwrap(), rat(1, 5));
        assert_eq!(loop_rate(4).unwrap(), rat(12, 35));
        assert_eq!(loop_rate(5).unwrap(), rat(16, 63));
        assert_eq!(loop_rate_variance(1).unwrap(), rat(0, 1));
        assert_eq!(loop_rate_variance(2).unwrap(), rat(2, 9));
        assert_eq!(loop_rate_variance(3).unwrap(), rat(4, 25));
        assert_eq!(loop_rate_variance(4).unwrap(), rat(346, 1225));
        for n in 1..=30 {
            assert_eq!(loop_rate(n).unwrap(), loop_rate_by_parity(n), "n={n}");
            assert_eq!(loop_rate_variance(n).unwrap(), loop_variance_by_parity(n), "n={n}");
        }
    }

    #[test]
    fn pgf_values_and_moments() {
        let g2 = loop_increment_pgf(2).unwrap();
        assert_eq!(g2.coefficients(), &[rat(2, 3), rat(1, 3)]);
        let g3 = loop_increment_pgf(3).unwrap();
        assert_eq!(g3.coefficients(), &[rat(4, 5), rat(1, 5)]);
        let g4 = loop_increment_pgf(4).unwrap();
        assert_eq!(g4.coefficients(), &[rat(24, 35), rat(10, 35), rat(1, 35)]);
        assert_eq!(loop_increment_pgf(1).unwrap().coefficients(), &[rat(1, 1)]);
        for n in 1..=12 {
            let g = loop_increment_pgf(n).unwrap();
            assert_eq!(g.total(), rat(1, 1), "n={n}");
            assert_eq!(g.mean(), loop_rate(n).unwrap(), "n={n}");
            assert_eq!(g.variance(), loop_rate_variance(n).unwrap(), "n={n}");
        }
        let g = loop_increment_pgf(2).unwrap().power(3);
        assert_eq!(g.coefficients(), &[rat(8, 27), rat(12, 27), rat(6, 27), rat(1, 27)]);
    }

    #[test]
    fn transverse_constants() {
        assert_eq!(transverse_density(3).unwrap(), (rat(7, 9), rat(7, 3)));
        assert_eq!(transverse_density(5).unwrap().1, rat(11, 3));
        assert_eq!(transverse_density(1).unwrap().0, rat(1, 1));
        assert_eq!(transverse_clt_variance(3).unwrap(), rat(56, 27));
        assert_eq!(transverse_density(4), Err(TheoryError::EvenN(4)));
    }

    #[test]
    fn local_laws() {
        let v3 = level_occupancy_dist(3).unwrap();
        assert_eq!(v3.prob(1), rat(1, 3));
        assert_eq!(v3.prob(3), rat(2, 3));
        assert_eq!(level_occupancy_dist(1).unwrap().prob(1), rat(1, 1));
        let v5 = level_occupancy_dist(5).unwrap();
        assert_eq!(v5.prob(1), rat(1, 5));
        assert_eq!(v5.prob(3), rat(4, 15));
        assert_eq!(v5.prob(5), rat(8, 15));
        let e3 = layer_crossing_dist(3).unwrap();
        assert_eq!(e3.prob(1), rat(11, 15));
        assert_eq!(e3.prob(3), rat(4, 15));
        assert_eq!(e3.mean(), rat(23, 15));
        assert_eq!(layer_crossing_dist(1).unwrap().prob(1), rat(1, 1));
        assert_eq!(across_bend_rates(3).unwrap(), (rat(23, 15), rat(4, 5)));
        assert_eq!(across_bend_rates(1).unwrap(), (rat(1, 1), rat(0, 1)));
        let (a, b) = across_bend_rates(3).unwrap();
        assert_eq!(a + b, transverse_density(3).unwrap().1);
    }

    #[test]
    fn local_law_identities() {
        for n in (1..=11).step_by(2) {
            let m = (n / 2) as i64;
            let v = level_occupancy_dist(n).unwrap();
            assert_eq!(v.total(), rat(1, 1));
            assert_eq!(v.mean(), rat(2 * n as i64 + 1, 3), "n={n}");
            assert_eq!(v.mean(), rat(4 * m + 3, 3));
            let e = layer_crossing_dist(n).unwrap();
            assert_eq!(e.total(), rat(1, 1), "n={n}");
            assert_eq!(e.mean(), across_bend_rates(n).unwrap().0, "n={n}");
            let (a, b) = across_bend_rates(n).unwrap();
            assert_eq!(a + b, transverse_density(n).unwrap().1, "n={n}");
            assert_eq!(string_absorption_dist(n).unwrap().total(), rat(1, 1), "n={n}");
        }
    }

    #[test]
    fn sling_fate_constants() {
        let f = sling_fate_probs(3).unwrap();
        assert_eq!((f.to_string.clone(), f.to_loop.clone()), (rat(2, 5), rat(1, 5)));
        assert_eq!(&f.to_string + &f.to_loop + &f.survive, rat(1, 1));
        assert_eq!(f.geo_param, &f.to_string + &f.to_loop);
        assert_eq!(&f.to_string / &f.geo_param, f.eventual_string);
        assert!(sling_fate_probs(1).is_err());
        let t = two_sling_table(5).unwrap();
        assert_eq!(t.rows[0], rat(8, 63));
        assert_eq!(t.rows[6], rat(8, 63));
        for n in (5..=11).step_by(2) {
            assert_eq!(two_sling_table(n).unwrap().weighted_sum(), rat(1, 1), "n={n}");
        }
        assert!(two_sling_table(3).is_err());
        assert_eq!(two_sling_table(6), Err(TheoryError::EvenN(6)));
    }

    #[test]
    fn absorption_law() {
        let x = string_absorption_dist(3).unwrap();
        assert_eq!(x.prob(0), rat(3, 5));
        assert_eq!(x.prob(1), rat(2, 5));
        assert_eq!(string_absorption_dist(1).unwrap().prob(0), rat(1, 1));
        // The mean number of absorbed slings is m times the one-sling rate.
        for n in (3..=11).step_by(2) {
            let m = (n / 2) as i64;
            let expect = sling_fate_probs(n).unwrap().to_string * rat(m, 1);
            assert_eq!(string_absorption_dist(n).unwrap().mean(), expect, "n={n}");
        }
    }

    #[test]
    fn bb_shape_rate() {
        let s = shape_rate(2, &w("BB")).unwrap();
        assert_eq!(s.mu, rat(1, 9));
        assert_eq!(s.autocov, vec![rat(8, 81), rat(2, 81)]);
        assert_eq!(s.sigma2, rat(4, 27));
        assert!(shape_rate(1, &w("BB")).is_err());
        assert!(shape_rate(4, &w("AB")).is_err());
    }

    #[test]
    fn zigzag_rates() {
        let mut sum2 = BigRat::zero();
        let mut sum3 = BigRat::zero();
        for ell in 1..=60 {
            let z = StrongShape::zigzag(ell);
            let l = ell as u32;
            let mu2 = shape_rate(2, &z).unwrap().mu;
            assert_eq!(mu2, BigRat::new(BigInt::from(2).pow(l - 1), BigInt::from(3).pow(l + 1)));
            let mu3 = shape_rate(3, &z).unwrap().mu;
            assert_eq!(mu3, rat(3, 25) * BigRat::new(BigInt::from(2).pow(l - 1), BigInt::from(5).pow(l - 1)));
            sum2 += mu2;
            sum3 += mu3;
            // Partial sums of geometric series, exactly.
            let q2 = BigRat::new(BigInt::from(2).pow(l), BigInt::from(3).pow(l));
            assert_eq!(sum2, rat(1, 3) * (rat(1, 1) - q2));
            let q3 = BigRat::new(BigInt::from(2).pow(l), BigInt::from(5).pow(l));
            assert_eq!(sum3, rat(1, 5) * (rat(1, 1) - q3));
        }
    }

    #[test]
    fn weak_rates() {
        let r = weak_shape_rate(2, &WeakShape::new(vec![1])).unwrap();
        assert_eq!((r.mu, r.sigma2), (rat(1, 9), rat(4, 27)));
        let a = WeakShape::new(vec![1, 1, 1]);
        assert_eq!(weak_shape_rate(3, &a).unwrap().mu, rat(3, 25) * rat(4, 25));
        let a = WeakShape::new(vec![2, 1]);
        let r = weak_shape_rate(4, &a).unwrap();
        let s = shape_rate(4, &w("ABABBB")).unwrap();
        assert_eq!(r.gamma, BigInt::from(2));
        assert_eq!(r.mu, &s.mu * rat(2, 1));
        assert_eq!(r.sigma2, &s.sigma2 * rat(4, 1) - &s.mu * rat(2, 1));
        assert!(weak_shape_rate(3, &WeakShape::new(vec![2])).is_err());
    }

    #[test]
    fn shape_variances_are_positive() {
        for n in 2..=8 {
            for word in enumerate_strong(n, 8).unwrap() {
                let s = shape_rate(n, &word).unwrap();
                assert!(s.sigma2 > BigRat::zero(), "n={n} {word}");
                assert_eq!(s.autocov.len(), weak_of_strong(&word).unwrap().stretch() + 2);
            }
        }
    }

    #[test]
    fn loop_sizes_account_for_loop_vertices() {
        // Σ_S |S| μ_S over all shapes converges to the loop-vertex density.
        // For n = 2 every loop is a zigzag; rate of loop vertices is 2.
        let total: BigRat =
            (1..=80).map(|ell| shape_rate(2, &StrongShape::zigzag(ell)).unwrap().mu * rat(2 * ell as i64, 1)).sum();
        assert!((crate::combinatorics::to_f64(&total) - 2.0).abs() < 1e-9);
        let total: BigRat =
            (1..=80).map(|ell| shape_rate(3, &StrongShape::zigzag(ell)).unwrap().mu * rat(2 * ell as i64, 1)).sum();
        assert!((crate::combinatorics::to_f64(&total) - 2.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn indicator_moments_sum_to_rates() {
        for n in 2..=6 {
            for word in enumerate_strong(n, 8).unwrap() {
                let rate = shape_rate(n, &word).unwrap();
                let single: BigRat =
                    (1..=n).map(|k| pairwise_shape_moments(n, &word, &word, MomentQuery::Single { k }).unwrap()).sum();
                assert_eq!(single, rate.mu, "n={n} {word}");
                let mut pairs = BigRat::zero();
                for k in 1..=n {
                    for kp in 1..k {
                        pairs +=
                            pairwise_shape_moments(n, &word, &word, MomentQuery::SameLevel { k, k_prime: kp }).unwrap();
                    }
                }
                let mu2 = &rate.mu * &rate.mu;
                assert_eq!(&single + pairs * rat(2, 1), &rate.autocov[0] + &mu2, "n={n} {word}");
                let r = weak_of_strong(&word).unwrap().stretch();
                for h in 1..=r + 3 {
                    let mut lag = BigRat::zero();
                    for k in 1..=n {
                        for kp in 1..=n {
                            lag += pairwise_shape_moments(n, &word, &word, MomentQuery::Lagged { k, k_prime: kp, h })
                                .unwrap();
                        }
                    }
                    let expect = if h <= r + 1 { &rate.autocov[h] + &mu2 } else { mu2.clone() };
                    assert_eq!(lag, expect, "n={n} {word} h={h}");
                }
            }
        }
    }

    #[test]
    fn overfull_columns_vanish() {
        // Two copies of BBBB need 8 vertices in one column.
        let s = w("BBBB");
        let q = MomentQuery::SameLevel { k: 4, k_prime: 1 };
        assert_eq!(pairwise_shape_moments(4, &s, &s, q).unwrap(), BigRat::zero());
        assert!(pairwise_shape_moments(4, &s, &s, MomentQuery::Single { k: 0 }).is_err());
        assert!(pairwise_shape_moments(4, &s, &s, MomentQuery::Lagged { k: 1, k_prime: 1, h: 0 }).is_err());
    }
}
