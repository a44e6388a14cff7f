//! Exact integer and rational building blocks.
//!
//! Every closed-form constant in the crate is assembled from the products
//! defined here. Nothing in this module touches floating point.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

/// Arbitrary-precision rational, always in lowest terms with a positive
/// denominator.
pub type BigRat = BigRational;

/// `k!!`, with `0!! = (-1)!! = 1`. Any non-positive argument gives the empty
/// product.
pub fn double_factorial(k: i64) -> BigInt {
    let mut acc = BigInt::one();
    let mut x = k;
    while x > 1 {
        acc *= x;
        x -= 2;
    }
    acc
}

/// Falling factorial `(n)_k = n(n-1)...(n-k+1)`, `(n)_0 = 1`.
///
/// For `0 <= n < k` one of the factors is zero, so the result vanishes.
pub fn falling_factorial(n: i64, k: u64) -> BigInt {
    let mut acc = BigInt::one();
    for i in 0..k as i64 {
        let f = n - i;
        if f == 0 {
            return BigInt::zero();
        }
        acc *= f;
    }
    acc
}

/// Falling double factorial `[[n]]_k = n(n-2)...(n-2k+2)`, `[[n]]_0 = 1`.
pub fn falling_double_factorial(n: i64, k: u64) -> BigInt {
    let mut acc = BigInt::one();
    for i in 0..k as i64 {
        let f = n - 2 * i;
        if f == 0 {
            return BigInt::zero();
        }
        acc *= f;
    }
    acc
}

/// `sum_{k=1}^{n} (k-1)_a`, evaluated term by term.
pub fn falling_sum(n: u64, a: u64) -> BigRat {
    let mut acc = BigInt::zero();
    for k in 1..=n as i64 {
        acc += falling_factorial(k - 1, a);
    }
    BigRat::from_integer(acc)
}

/// Binomial coefficient `C(n, k)` for non-negative arguments (0 when `k > n`).
pub fn binomial(n: u64, k: u64) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigInt::one();
    for i in 0..k {
        acc *= n - i;
        acc /= i + 1;
    }
    acc
}

/// Number of perfect matchings on `2n` points, `(2n-1)!!`.
pub fn matching_count(n: u64) -> BigInt {
    double_factorial(2 * n as i64 - 1)
}

pub(crate) fn rat(num: i64, den: i64) -> BigRat {
    BigRat::new(BigInt::from(num), BigInt::from(den))
}

pub(crate) fn int_rat(x: BigInt) -> BigRat {
    BigRat::from_integer(x)
}

/// Lossy conversion used only at output boundaries.
pub fn to_f64(x: &BigRat) -> f64 {
    use num_traits::ToPrimitive;
    match x.to_f64() {
        Some(v) if v.is_finite() => v,
        _ => {
            // Very large numerator/denominator pairs: scale down by digits.
            let n = x.numer().to_string();
            let d = x.denom().to_string();
            let keep = 17usize;
            let (ne, de) = (n.len().saturating_sub(keep), d.len().saturating_sub(keep));
            let nf: f64 = n[..n.len() - ne].parse().unwrap_or(0.0);
            let df: f64 = d[..d.len() - de].parse().unwrap_or(1.0);
            nf / df * 10f64.powi(ne as i32 - de as i32)
        }
    }
}

/// Renders a rational as `"p/q"`, or `"p"` for integers.
pub fn format_rat(x: &BigRat) -> String {
    if x.denom().is_one() {
        x.numer().to_string()
    } else {
        format!("{}/{}", x.numer(), x.denom())
    }
}

/// Parses `"p/q"` or `"p"`.
pub fn parse_rat(s: &str) -> Option<BigRat> {
    let s = s.trim();
    match s.split_once('/') {
        Some((p, q)) => {
            let p: BigInt = p.trim().parse().ok()?;
            let q: BigInt = q.trim().parse().ok()?;
            if q.is_zero() {
                None
            } else {
                Some(BigRat::new(p, q))
            }
        }
        None => Some(BigRat::from_integer(s.parse().ok()?)),
    }
}
