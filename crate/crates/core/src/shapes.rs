//! Strong and weak loop shapes and the automaton that recognises them.
//!
//! The automaton has states `(column k, top | bottom)` with start `top_0`.
//! A top state means the exploration is heading right, a bottom state that
//! it is heading left:
//!
//! * `top_k --A--> top_{k+1}`, `top_k --B--> bottom_k`
//! * `bottom_k --A--> bottom_{k-1}` (undefined at `k = 0`), `bottom_k --B--> top_k`
//!
//! A word is a strong shape for `n` iff the run is defined, ends in `top_0`
//! and no state is occupied more than `⌊n/2⌋` times. Occupation is counted
//! for the states the run leaves, so the final return to `top_0` is not
//! counted. The occupation of `top_k` is `a_k`.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_traits::One;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::combinatorics::binomial;
use crate::diagram::{Component, ComponentKind};

/// Largest word length accepted by [`enumerate_strong`].
pub const MAX_ENUMERATION_LENGTH: usize = 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ShapeError {
    #[error("letter {0:?} is not A or B")]
    BadLetter(char),
    #[error("word {0} is not accepted by the shape automaton")]
    NotAccepted(String),
    #[error("word {word} is not a strong shape for n = {n}")]
    InvalidForN { word: String, n: usize },
    #[error("weak shape {0:?} is not valid for n = {1}")]
    InvalidWeak(Vec<u32>, usize),
    #[error("component is not a closed loop")]
    NotALoop,
    #[error("word enumeration is limited to length {MAX_ENUMERATION_LENGTH}, got {0}")]
    Capacity(usize),
}

impl ShapeError {
    pub fn is_capacity(&self) -> bool {
        matches!(self, ShapeError::Capacity(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Letter {
    A,
    B,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StrongShape(Vec<Letter>);

impl StrongShape {
    pub fn from_letters(letters: Vec<Letter>) -> Self {
        Self(letters)
    }

    pub fn letters(&self) -> &[Letter] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `A^{ℓ-1} B A^{ℓ-1} B`, the only strong shape of size `2ℓ` for `n ≤ 3`.
    pub fn zigzag(ell: usize) -> Self {
        assert!(ell >= 1);
        let mut w = vec![Letter::A; ell - 1];
        w.push(Letter::B);
        w.extend(std::iter::repeat_n(Letter::A, ell - 1));
        w.push(Letter::B);
        Self(w)
    }
}

impl fmt::Display for StrongShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in &self.0 {
            f.write_str(match l {
                Letter::A => "A",
                Letter::B => "B",
            })?;
        }
        Ok(())
    }
}

impl FromStr for StrongShape {
    type Err = ShapeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.trim()
            .chars()
            .map(|c| match c {
                'A' | 'a' => Ok(Letter::A),
                'B' | 'b' => Ok(Letter::B),
                other => Err(ShapeError::BadLetter(other)),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(StrongShape)
    }
}

impl Serialize for StrongShape {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for StrongShape {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Occupancy sequence `a_0..a_r` with no trailing zeros.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeakShape(Vec<u32>);

impl WeakShape {
    /// Drops trailing zeros.
    pub fn new(mut a: Vec<u32>) -> Self {
        while a.last() == Some(&0) {
            a.pop();
        }
        Self(a)
    }

    pub fn a(&self) -> &[u32] {
        &self.0
    }

    /// `r`, the largest offset with `a_r > 0`.
    pub fn stretch(&self) -> usize {
        self.0.len().saturating_sub(1)
    }

    /// Number of vertices, `2 Σ a_k`.
    pub fn size(&self) -> usize {
        2 * self.0.iter().map(|&x| x as usize).sum::<usize>()
    }

    /// Non-empty, no internal zeros and `2 a_k ≤ n`.
    pub fn is_valid_for(&self, n: usize) -> bool {
        !self.0.is_empty() && self.0.iter().all(|&x| x >= 1 && 2 * x as usize <= n)
    }
}

impl fmt::Display for WeakShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(u32::to_string).collect();
        write!(f, "({})", parts.join(","))
    }
}

impl FromStr for WeakShape {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().trim_start_matches(['(', '[']).trim_end_matches([')', ']']);
        s.split(',').map(|p| p.trim().parse::<u32>()).collect::<Result<Vec<_>, _>>().map(WeakShape::new)
    }
}

/// Occupation counts of a complete automaton run.
struct Run {
    top: Vec<u32>,
    bottom: Vec<u32>,
}

// Runs the automaton; `None` if a transition is undefined or the run does
// not end in `top_0`.
fn run(word: &[Letter]) -> Option<Run> {
    if word.is_empty() {
        return None;
    }
    let mut top = vec![0u32];
    let mut bottom = vec![0u32];
    let (mut k, mut is_top) = (0usize, true);
    for &l in word {
        if is_top {
            top[k] += 1;
        } else {
            bottom[k] += 1;
        }
        match (is_top, l) {
            (true, Letter::A) => {
                k += 1;
                if k == top.len() {
                    top.push(0);
                    bottom.push(0);
                }
            }
            (true, Letter::B) => is_top = false,
            (false, Letter::A) => k = k.checked_sub(1)?,
            (false, Letter::B) => is_top = true,
        }
    }
    (k == 0 && is_top).then_some(Run { top, bottom })
}

/// Whether `word` is a strong shape for `n`.
pub fn validate_strong(word: &StrongShape, n: usize) -> bool {
    let cap = (n / 2) as u32;
    run(&word.0).is_some_and(|r| r.top.iter().chain(&r.bottom).all(|&c| c <= cap))
}

/// The weak shape of an accepted word.
pub fn weak_of_strong(word: &StrongShape) -> Result<WeakShape, ShapeError> {
    let r = run(&word.0).ok_or_else(|| ShapeError::NotAccepted(word.to_string()))?;
    debug_assert_eq!(r.top, r.bottom);
    Ok(WeakShape::new(r.top))
}

/// `γ_n^a = Π_{i≥1} C(a_{i-1} + a_i - 1, a_i)`, the number of strong shapes
/// with weak shape `a` (independent of `n` once `a` is valid).
pub fn gamma(a: &WeakShape) -> BigInt {
    a.0.windows(2).fold(BigInt::one(), |acc, w| acc * binomial(u64::from(w[0] + w[1] - 1), u64::from(w[1])))
}

/// The strong shape of a closed loop, read along its canonical walk.
pub fn shape_of_loop(c: &Component) -> Result<StrongShape, ShapeError> {
    if c.kind != ComponentKind::ClosedLoop {
        return Err(ShapeError::NotALoop);
    }
    let len = c.walk.len();
    let letters =
        (0..len).map(|i| if c.walk[i].0 != c.walk[(i + 1) % len].0 { Letter::A } else { Letter::B }).collect();
    Ok(StrongShape(letters))
}

/// All strong shapes for `n` of length at most `max_len`, ordered by length
/// and then lexicographically (`A < B`).
pub fn enumerate_strong(n: usize, max_len: usize) -> Result<Vec<StrongShape>, ShapeError> {
    if max_len > MAX_ENUMERATION_LENGTH {
        return Err(ShapeError::Capacity(max_len));
    }
    let cap = (n / 2) as u32;
    let mut out = Vec::new();
    let mut word = Vec::new();
    let mut top = vec![0u32; max_len + 1];
    let mut bottom = vec![0u32; max_len + 1];
    dfs(cap, max_len, 0, true, &mut word, &mut top, &mut bottom, &mut out);
    out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn dfs(
    cap: u32,
    max_len: usize,
    k: usize,
    is_top: bool,
    word: &mut Vec<Letter>,
    top: &mut [u32],
    bottom: &mut [u32],
    out: &mut Vec<StrongShape>,
) {
    if !word.is_empty() && k == 0 && is_top {
        out.push(StrongShape(word.clone()));
    }
    // Coming home takes B A^k B from top_k and A^k B from bottom_k.
    let remaining = max_len - word.len();
    let needed = if is_top { k + 2 } else { k + 1 };
    if needed > remaining {
        return;
    }
    let occ = if is_top { &mut top[k] } else { &mut bottom[k] };
    if *occ >= cap {
        return;
    }
    *occ += 1;
    let moves: [(Letter, Option<(usize, bool)>); 2] = if is_top {
        [(Letter::A, Some((k + 1, true))), (Letter::B, Some((k, false)))]
    } else {
        [(Letter::A, k.checked_sub(1).map(|j| (j, false))), (Letter::B, Some((k, true)))]
    };
    for (l, next) in moves {
        if let Some((nk, nt)) = next {
            word.push(l);
            dfs(cap, max_len, nk, nt, word, top, bottom, out);
            word.pop();
        }
    }
    if is_top {
        top[k] -= 1;
    } else {
        bottom[k] -= 1;
    }
}

/// All weak shapes valid for `n` with `Σ a_k ≤ max_total`.
pub fn enumerate_weak(n: usize, max_total: u32) -> Vec<WeakShape> {
    fn rec(cap: u32, left: u32, cur: &mut Vec<u32>, out: &mut Vec<WeakShape>) {
        if !cur.is_empty() {
            out.push(WeakShape(cur.clone()));
        }
        for x in 1..=cap.min(left) {
            cur.push(x);
            rec(cap, left - x, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec((n / 2) as u32, max_total, &mut Vec::new(), &mut out);
    out
}
