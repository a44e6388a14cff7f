//! Perfect matchings on `2n` labelled points and the partial matchings used
//! for the left boundary of a modified diagram.
//!
//! Index convention for a layer: points `0..n` are the left level's vertices
//! top to bottom, points `n..2n` the right level's vertices top to bottom.

use rand::Rng;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Largest `n` accepted by [`enumerate_all`]; `(11)!! = 10395`.
pub const MAX_ENUMERATION_SIZE: usize = 6;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MatchingError {
    #[error("matching size must be at least 1")]
    EmptySize,
    #[error("exhaustive enumeration is limited to n <= {MAX_ENUMERATION_SIZE}, got n = {0}")]
    Capacity(usize),
    #[error("invalid matching: {0}")]
    Invalid(String),
}

/// A fixed-point-free involution on `2n` points.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PerfectMatching {
    n: usize,
    partner: Vec<usize>,
}

impl PerfectMatching {
    /// Builds and validates a matching from its partner array (length `2n`).
    pub fn from_partner(partner: Vec<usize>) -> Result<Self, MatchingError> {
        if partner.is_empty() || !partner.len().is_multiple_of(2) {
            return Err(MatchingError::Invalid(format!(
                "partner array length {} is not a positive even number",
                partner.len()
            )));
        }
        for (i, &p) in partner.iter().enumerate() {
            if p >= partner.len() || p == i || partner[p] != i {
                return Err(MatchingError::Invalid(format!("point {i} maps to {p}")));
            }
        }
        Ok(Self { n: partner.len() / 2, partner })
    }

    /// Builds a matching from an explicit list of `n` pairs.
    pub fn from_pairs(n: usize, pairs: &[(usize, usize)]) -> Result<Self, MatchingError> {
        if pairs.len() != n {
            return Err(MatchingError::Invalid(format!("expected {n} pairs, got {}", pairs.len())));
        }
        let mut partner = vec![usize::MAX; 2 * n];
        for &(a, b) in pairs {
            if a >= 2 * n || b >= 2 * n || partner[a] != usize::MAX || partner[b] != usize::MAX {
                return Err(MatchingError::Invalid(format!("bad pair ({a}, {b})")));
            }
            partner[a] = b;
            partner[b] = a;
        }
        Self::from_partner(partner)
    }

    /// The layer matching every left vertex straight across to the same row.
    pub fn identity(n: usize) -> Self {
        let partner = (0..2 * n).map(|i| if i < n { i + n } else { i - n }).collect();
        Self { n, partner }
    }

    /// Number of pairs.
    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn partner(&self, i: usize) -> usize {
        self.partner[i]
    }

    pub fn partners(&self) -> &[usize] {
        &self.partner
    }

    /// Pairs `(i, j)` with `i < j`, sorted by `i`.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        (0..2 * self.n).filter_map(|i| (i < self.partner[i]).then_some((i, self.partner[i]))).collect()
    }

    /// Number of pairs joining a left point to a right point.
    pub fn across_count(&self) -> usize {
        (0..self.n).filter(|&i| self.partner[i] >= self.n).count()
    }

    fn is_involution(&self) -> bool {
        self.partner.iter().enumerate().all(|(i, &p)| p != i && self.partner[p] == i)
    }
}

/// Draws a uniform perfect matching on `2n` points.
///
/// Repeatedly pairs the lowest unmatched point with a uniformly chosen other
/// unmatched point; each of the `(2n-1)!!` matchings has the same probability.
pub fn sample_uniform<R: Rng + ?Sized>(n: usize, rng: &mut R) -> PerfectMatching {
    assert!(n >= 1, "sample_uniform requires n >= 1");
    let mut m = PerfectMatching { n, partner: vec![0; 2 * n] };
    let mut pool = Vec::with_capacity(2 * n);
    sample_uniform_into(&mut m, &mut pool, rng);
    m
}

/// Re-samples `target` in place; `pool` is scratch space.
pub fn sample_uniform_into<R: Rng + ?Sized>(target: &mut PerfectMatching, pool: &mut Vec<usize>, rng: &mut R) {
    pool.clear();
    pool.extend(0..2 * target.n);
    fill_uniform(pool, &mut target.partner, rng);
    debug_assert!(target.is_involution());
}

// Pairs off the points in `pool` (kept sorted) uniformly at random.
fn fill_uniform<R: Rng + ?Sized>(pool: &mut Vec<usize>, partner: &mut [usize], rng: &mut R) {
    while !pool.is_empty() {
        let a = pool.remove(0);
        let j = rng.random_range(0..pool.len() as u32) as usize;
        let b = pool.remove(j);
        partner[a] = b;
        partner[b] = a;
    }
}

/// A partial involution on `n` points: the boundary matching of a modified
/// diagram, or the sling pairing of a frontier.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PartialMatching {
    partner: Vec<Option<usize>>,
}

impl PartialMatching {
    pub fn from_partner(partner: Vec<Option<usize>>) -> Result<Self, MatchingError> {
        for (i, p) in partner.iter().enumerate() {
            if let Some(p) = *p {
                if p >= partner.len() || p == i || partner[p] != Some(i) {
                    return Err(MatchingError::Invalid(format!("point {i} maps to {p}")));
                }
            }
        }
        Ok(Self { partner })
    }

    /// Pairs plus the number of points; unlisted points stay unmatched.
    pub fn from_pairs(n: usize, pairs: &[(usize, usize)]) -> Result<Self, MatchingError> {
        let mut partner = vec![None; n];
        for &(a, b) in pairs {
            if a >= n || b >= n || partner[a].is_some() || partner[b].is_some() || a == b {
                return Err(MatchingError::Invalid(format!("bad pair ({a}, {b})")));
            }
            partner[a] = Some(b);
            partner[b] = Some(a);
        }
        Ok(Self { partner })
    }

    pub fn size(&self) -> usize {
        self.partner.len()
    }

    #[inline]
    pub fn partner(&self, i: usize) -> Option<usize> {
        self.partner[i]
    }

    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.partner.iter().enumerate().filter_map(|(i, p)| p.filter(|&p| i < p).map(|p| (i, p))).collect()
    }

    /// Unmatched points in increasing order.
    pub fn holes(&self) -> Vec<usize> {
        (0..self.partner.len()).filter(|&i| self.partner[i].is_none()).collect()
    }

    /// Number of matched points.
    pub fn support_size(&self) -> usize {
        self.partner.iter().filter(|p| p.is_some()).count()
    }
}

/// Samples the left boundary of a modified diagram on `n` points.
///
/// Even `n`: a uniform perfect matching of all points. Odd `n = 2m+1`: a
/// uniformly chosen unmatched point plus a uniform matching of the other `2m`.
pub fn sample_initial_partial<R: Rng + ?Sized>(n: usize, rng: &mut R) -> PartialMatching {
    assert!(n >= 1, "sample_initial_partial requires n >= 1");
    let mut pool: Vec<usize> = (0..n).collect();
    if n % 2 == 1 {
        let h = rng.random_range(0..n as u32) as usize;
        pool.remove(h);
    }
    let mut partner = vec![usize::MAX; n];
    fill_uniform(&mut pool, &mut partner, rng);
    PartialMatching { partner: partner.into_iter().map(|p| (p != usize::MAX).then_some(p)).collect() }
}

/// Every perfect matching on `2n` points, each exactly once, in
/// lexicographic order of their partner arrays.
pub fn enumerate_all(n: usize) -> Result<std::vec::IntoIter<PerfectMatching>, MatchingError> {
    if n == 0 {
        return Err(MatchingError::EmptySize);
    }
    if n > MAX_ENUMERATION_SIZE {
        return Err(MatchingError::Capacity(n));
    }
    let mut out = Vec::new();
    let mut partner = vec![usize::MAX; 2 * n];
    enumerate_rec(&mut partner, &mut out, &mut |p| PerfectMatching { n, partner: p.to_vec() });
    Ok(out.into_iter())
}

/// Every boundary state [`sample_initial_partial`] can return.
pub fn enumerate_initial(n: usize) -> Result<Vec<PartialMatching>, MatchingError> {
    if n == 0 {
        return Err(MatchingError::EmptySize);
    }
    if n > 2 * MAX_ENUMERATION_SIZE {
        return Err(MatchingError::Capacity(n));
    }
    let holes: Vec<Option<usize>> = if n % 2 == 1 { (0..n).map(Some).collect() } else { vec![None] };
    let mut out = Vec::new();
    for hole in holes {
        let mut partner = vec![usize::MAX; n];
        if let Some(h) = hole {
            partner[h] = h;
        }
        enumerate_rec(&mut partner, &mut out, &mut |p| PartialMatching {
            partner: p.iter().enumerate().map(|(i, &q)| (q != i).then_some(q)).collect(),
        });
    }
    Ok(out)
}

// Fills `usize::MAX` slots of `partner` in all possible ways.
fn enumerate_rec<T>(partner: &mut [usize], out: &mut Vec<T>, emit: &mut impl FnMut(&[usize]) -> T) {
    let Some(a) = partner.iter().position(|&p| p == usize::MAX) else {
        out.push(emit(partner));
        return;
    };
    for b in a + 1..partner.len() {
        if partner[b] == usize::MAX {
            partner[a] = b;
            partner[b] = a;
            enumerate_rec(partner, out, emit);
            partner[a] = usize::MAX;
            partner[b] = usize::MAX;
        }
    }
}

impl Serialize for PerfectMatching {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let pairs: Vec<[usize; 2]> = self.pairs().into_iter().map(|(a, b)| [a, b]).collect();
        pairs.serialize(s)
    }
}

impl<'de> Deserialize<'de> for PerfectMatching {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let pairs: Vec<[usize; 2]> = Vec::deserialize(d)?;
        let pairs: Vec<(usize, usize)> = pairs.into_iter().map(|[a, b]| (a, b)).collect();
        PerfectMatching::from_pairs(pairs.len(), &pairs).map_err(D::Error::custom)
    }
}

#[derive(Serialize, Deserialize)]
struct PartialRepr {
    n: usize,
    pairs: Vec<[usize; 2]>,
}

impl Serialize for PartialMatching {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        PartialRepr { n: self.size(), pairs: self.pairs().into_iter().map(|(a, b)| [a, b]).collect() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for PartialMatching {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = PartialRepr::deserialize(d)?;
        let pairs: Vec<(usize, usize)> = r.pairs.into_iter().map(|[a, b]| (a, b)).collect();
        PartialMatching::from_pairs(r.n, &pairs).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::combinatorics::matching_count;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::{HashMap, HashSet};

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn n1_has_a_single_outcome() {
        let mut r = rng(1);
        for _ in 0..100 {
            assert_eq!(sample_uniform(1, &mut r).pairs(), vec![(0, 1)]);
        }
    }

    #[test]
    fn enumeration_counts_and_uniqueness() {
        assert_eq!(enumerate_all(1).unwrap().count(), 1);
        assert_eq!(enumerate_all(2).unwrap().count(), 3);
        assert_eq!(enumerate_all(4).unwrap().count(), 105);
        for n in 1..=5 {
            let all: Vec<_> = enumerate_all(n).unwrap().collect();
            let set: HashSet<_> = all.iter().cloned().collect();
            assert_eq!(set.len(), all.len());
            assert_eq!(num_bigint::BigInt::from(all.len()), matching_count(n as u64));
            assert!(all.iter().all(|m| m.is_involution()));
        }
    }

    #[test]
    fn enumeration_guards_capacity() {
        assert_eq!(enumerate_all(7).unwrap_err(), MatchingError::Capacity(7));
        assert_eq!(enumerate_all(6).unwrap().count(), 10395);
    }

    #[test]
    fn n2_draws_are_uniform() {
        let mut r = rng(7);
        let draws = 100_000;
        let mut counts: HashMap<Vec<(usize, usize)>, u32> = HashMap::new();
        for _ in 0..draws {
            *counts.entry(sample_uniform(2, &mut r).pairs()).or_default() += 1;
        }
        assert_eq!(counts.len(), 3);
        let p = 1.0 / 3.0;
        let sd = (p * (1.0 - p) / draws as f64).sqrt();
        for &c in counts.values() {
            assert!((c as f64 / draws as f64 - p).abs() < 3.0 * sd, "{counts:?}");
        }
    }

    #[test]
    fn n3_draws_pass_chi_square() {
        let mut r = rng(11);
        let draws = 100_000;
        let all: Vec<_> = enumerate_all(3).unwrap().collect();
        let mut counts: HashMap<PerfectMatching, u64> = HashMap::new();
        for _ in 0..draws {
            *counts.entry(sample_uniform(3, &mut r)).or_default() += 1;
        }
        assert_eq!(counts.len(), 15);
        let observed: Vec<u64> = all.iter().map(|m| counts[m]).collect();
        let expected = vec![draws as f64 / 15.0; 15];
        let p = crate::stats::chi_square_p_value(&observed, &expected, 14);
        assert!(p > 0.01, "p = {p}");
    }

    #[test]
    fn fixed_pair_has_marginal_one_over_2n_minus_1() {
        let mut r = rng(5);
        let n = 4;
        let draws = 100_000;
        let hits = (0..draws).filter(|_| sample_uniform(n, &mut r).partner(1) == 6).count();
        let p = 1.0 / (2 * n - 1) as f64;
        let sd = (p * (1.0 - p) / draws as f64).sqrt();
        assert!((hits as f64 / draws as f64 - p).abs() < 3.0 * sd);
    }

    #[test]
    fn initial_partial_shapes() {
        let mut r = rng(3);
        let p = sample_initial_partial(1, &mut r);
        assert_eq!(p.holes(), vec![0]);
        assert!(p.pairs().is_empty());
        assert_eq!(sample_initial_partial(2, &mut r).pairs(), vec![(0, 1)]);
        let mut seen = HashSet::new();
        for _ in 0..300 {
            let p = sample_initial_partial(3, &mut r);
            assert_eq!(p.holes().len(), 1);
            seen.insert(p);
        }
        assert_eq!(seen.len(), 3);
        assert_eq!(enumerate_initial(3).unwrap().len(), 3);
        assert_eq!(enumerate_initial(5).unwrap().len(), 15);
        assert_eq!(enumerate_initial(4).unwrap().len(), 3);
    }

    #[test]
    fn json_is_pair_lists() {
        let m = PerfectMatching::from_pairs(2, &[(0, 3), (1, 2)]).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(s, "[[0,3],[1,2]]");
        let back: PerfectMatching = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
        assert!(serde_json::from_str::<PerfectMatching>("[[0,1],[1,2]]").is_err());
    }

    #[test]
    fn rejects_non_involutions() {
        assert!(PerfectMatching::from_partner(vec![1, 0, 2, 3]).is_err());
        assert!(PerfectMatching::from_partner(vec![1, 2, 0, 3]).is_err());
        assert!(PerfectMatching::from_partner(vec![1, 0, 3, 2]).is_ok());
        assert_eq!(PerfectMatching::identity(3).across_count(), 3);
    }

    proptest::proptest! {
        #[test]
        fn sampled_matchings_are_involutions(n in 1usize..12, seed in 0u64..1000) {
            let m = sample_uniform(n, &mut rng(seed));
            proptest::prop_assert!(m.is_involution());
            let back = PerfectMatching::from_partner(m.partners().to_vec()).unwrap();
            proptest::prop_assert_eq!(back, m);
        }
    }
}
