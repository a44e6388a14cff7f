//! Ground truth at small scale.
//!
//! [`exact_by_enumeration`] walks every diagram and classifies it with
//! [`BrauerDiagram::components`]. The Markov engines work on frontier
//! pairings instead, with a one-layer composition of their own (union-find
//! over the two levels of a layer) so that they share no path-following code
//! with [`crate::simulate`].

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Zero};
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use thiserror::Error;

use crate::combinatorics::{double_factorial, int_rat, rat, BigRat};
use crate::diagram::{edge_profile, level_counts, BrauerDiagram, EdgeKind};
use crate::matching::{enumerate_all, enumerate_initial, PartialMatching, PerfectMatching};
use crate::shapes::{shape_of_loop, StrongShape};
use crate::theory::Pmf;
use crate::ComponentKind;

/// Largest number of diagrams [`exact_by_enumeration`] visits.
pub const MAX_DIAGRAMS: u64 = 10_000_000;
pub const MAX_MARKOV_N: usize = 5;
pub const MAX_MARKOV_T: usize = 1000;
/// Largest number of augmented states the distribution engine keeps.
pub const MAX_MARKOV_STATES: usize = 2_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("singular linear system")]
    Singular,
}

impl OracleError {
    pub fn is_capacity(&self) -> bool {
        matches!(self, OracleError::Capacity(_))
    }
}

/// A statistic of a modified diagram with `t` layers.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Statistic {
    LoopCount,
    ShapeCount(StrongShape),
    /// Vertices of the transverse string.
    TransverseLength,
    TransverseAcross,
    TransverseBends,
    /// String vertices on one level.
    LevelOccupancy {
        level: usize,
    },
    /// String across edges in one layer.
    LayerCrossing {
        layer: usize,
    },
    ResetCount,
}

impl fmt::Display for Statistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Statistic::LoopCount => f.write_str("loops"),
            Statistic::ShapeCount(w) => write!(f, "shape:{w}"),
            Statistic::TransverseLength => f.write_str("transverse"),
            Statistic::TransverseAcross => f.write_str("across"),
            Statistic::TransverseBends => f.write_str("bends"),
            Statistic::LevelOccupancy { level } => write!(f, "v:{level}"),
            Statistic::LayerCrossing { layer } => write!(f, "e:{layer}"),
            Statistic::ResetCount => f.write_str("resets"),
        }
    }
}

impl FromStr for Statistic {
    type Err = OracleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || OracleError::Invalid(format!("unknown statistic {s}"));
        let num = |x: &str| x.parse::<usize>().map_err(|_| bad());
        Ok(match s.trim() {
            "loops" => Statistic::LoopCount,
            "transverse" => Statistic::TransverseLength,
            "across" => Statistic::TransverseAcross,
            "bends" => Statistic::TransverseBends,
            "resets" => Statistic::ResetCount,
            other => {
                if let Some(w) = other.strip_prefix("shape:") {
                    Statistic::ShapeCount(w.parse().map_err(|_| bad())?)
                } else if let Some(l) = other.strip_prefix("v:") {
                    Statistic::LevelOccupancy { level: num(l)? }
                } else if let Some(l) = other.strip_prefix("e:") {
                    Statistic::LayerCrossing { layer: num(l)? }
                } else {
                    return Err(bad());
                }
            }
        })
    }
}

impl Statistic {
    fn needs_string(&self) -> bool {
        matches!(
            self,
            Statistic::TransverseLength
                | Statistic::TransverseAcross
                | Statistic::TransverseBends
                | Statistic::LevelOccupancy { .. }
                | Statistic::LayerCrossing { .. }
        )
    }

    fn check(&self, n: usize, t: usize) -> Result<(), OracleError> {
        if n == 0 {
            return Err(OracleError::Invalid("n must be at least 1".into()));
        }
        if self.needs_string() && n.is_multiple_of(2) {
            return Err(OracleError::Invalid(format!("{self} needs odd n, got {n}")));
        }
        match *self {
            Statistic::LevelOccupancy { level } if level > t => {
                Err(OracleError::Invalid(format!("level {level} beyond t = {t}")))
            }
            Statistic::LayerCrossing { layer } if layer == 0 || layer > t => {
                Err(OracleError::Invalid(format!("layer {layer} outside 1..={t}")))
            }
            _ => Ok(()),
        }
    }
}

fn diagram_statistic(d: &BrauerDiagram, stat: &Statistic) -> i64 {
    let comps = d.components();
    let string = || {
        comps
            .iter()
            .find(|c| c.kind == ComponentKind::TransverseString)
            .expect("modified diagram with odd n has a string")
    };
    let count = |k: EdgeKind| string().edges.iter().filter(|e| e.kind == k).count() as i64;
    match stat {
        Statistic::LoopCount => comps.iter().filter(|c| c.kind == ComponentKind::ClosedLoop).count() as i64,
        Statistic::ShapeCount(w) => comps
            .iter()
            .filter(|c| c.kind == ComponentKind::ClosedLoop)
            .filter(|c| shape_of_loop(c).ok().as_ref() == Some(w))
            .count() as i64,
        Statistic::TransverseLength => string().size() as i64,
        Statistic::TransverseAcross => count(EdgeKind::Across),
        Statistic::TransverseBends => string().edges.len() as i64 - count(EdgeKind::Across),
        Statistic::LevelOccupancy { level } => level_counts(string(), *level) as i64,
        Statistic::LayerCrossing { layer } => edge_profile(string(), *layer).0 as i64,
        Statistic::ResetCount => d.layers().iter().filter(|l| l.across_count() == d.n() % 2).count() as i64,
    }
}

/// Exact law of `stat` over all modified diagrams with `t` layers, each
/// boundary matching and each layer uniform.
pub fn exact_by_enumeration(n: usize, t: usize, stat: &Statistic) -> Result<Pmf, OracleError> {
    stat.check(n, t)?;
    let inits = enumerate_initial(n).map_err(|e| OracleError::Capacity(e.to_string()))?;
    let layers: Vec<PerfectMatching> = enumerate_all(n).map_err(|e| OracleError::Capacity(e.to_string()))?.collect();
    let total = (layers.len() as u64)
        .checked_pow(t as u32)
        .and_then(|x| x.checked_mul(inits.len() as u64))
        .filter(|&x| x <= MAX_DIAGRAMS)
        .ok_or_else(|| OracleError::Capacity(format!("more than {MAX_DIAGRAMS} diagrams at n = {n}, t = {t}")))?;
    debug_assert!(total >= 1);
    let heads: Vec<usize> = if t == 0 { vec![usize::MAX] } else { (0..layers.len()).collect() };
    let count_head = |head: usize| -> BTreeMap<i64, u64> {
        let mut hist = BTreeMap::new();
        let rest = t.saturating_sub(1);
        let mut idx = vec![0usize; rest];
        loop {
            let mut seq: Vec<PerfectMatching> = Vec::with_capacity(t);
            if head != usize::MAX {
                seq.push(layers[head].clone());
            }
            seq.extend(idx.iter().map(|&i| layers[i].clone()));
            for init in &inits {
                let d = BrauerDiagram::from_parts(n, seq.clone(), Some(init.clone())).expect("sizes match");
                *hist.entry(diagram_statistic(&d, stat)).or_insert(0u64) += 1;
            }
            // Mixed-radix increment over the remaining layers.
            let mut k = 0;
            loop {
                if k == rest {
                    return hist;
                }
                idx[k] += 1;
                if idx[k] < layers.len() {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
    };
    #[cfg(feature = "parallel")]
    let parts: Vec<BTreeMap<i64, u64>> = heads.par_iter().map(|&h| count_head(h)).collect();
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<BTreeMap<i64, u64>> = heads.iter().map(|&h| count_head(h)).collect();
    let mut hist: BTreeMap<i64, u64> = BTreeMap::new();
    for p in parts {
        for (k, v) in p {
            *hist.entry(k).or_default() += v;
        }
    }
    Ok(Pmf::from_weights(&hist))
}

// Union-find over the `2n` points of a layer.
struct Dsu(Vec<usize>);

impl Dsu {
    fn new(k: usize) -> Self {
        Dsu((0..k).collect())
    }

    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut y = x;
        while self.0[y] != r {
            let next = self.0[y];
            self.0[y] = r;
            y = next;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// One component after composing a layer: the old slings it contains (by
/// index in the old pairing's pair order) and its edges in the layer.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub(crate) struct Piece {
    olds: Vec<usize>,
    across: u32,
    left: u32,
    right: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub(crate) struct Outcome {
    next: PartialMatching,
    /// New slings, in the new pairing's pair order.
    slings: Vec<Piece>,
    string: Option<Piece>,
    loops: Vec<Piece>,
    reset: bool,
}

/// Composes `layer` onto the frontier with sling pairing `state`; a hole in
/// `state` is the transverse string's endpoint.
pub(crate) fn compose(state: &PartialMatching, layer: &PerfectMatching) -> Outcome {
    let n = state.size();
    let old = state.pairs();
    let holes = state.holes();
    let mut dsu = Dsu::new(2 * n);
    for &(a, b) in &old {
        dsu.union(a, b);
    }
    let edges = layer.pairs();
    for &(a, b) in &edges {
        dsu.union(a, b);
    }
    #[derive(Default)]
    struct Group {
        piece: Piece,
        rights: Vec<usize>,
    }
    let mut groups: BTreeMap<usize, Group> = BTreeMap::new();
    for (i, &(a, _)) in old.iter().enumerate() {
        groups.entry(dsu.find(a)).or_default().piece.olds.push(i);
    }
    for &(a, b) in &edges {
        let g = &mut groups.entry(dsu.find(a)).or_default().piece;
        match (a < n, b < n) {
            (true, true) => g.left += 1,
            (false, false) => g.right += 1,
            _ => g.across += 1,
        }
    }
    for r in 0..n {
        groups.entry(dsu.find(n + r)).or_default().rights.push(r);
    }
    let string_root = holes.first().map(|&h| dsu.find(h));
    let mut pairs = Vec::new();
    let mut slings = Vec::new();
    let mut loops = Vec::new();
    let mut string = None;
    let mut string_row = None;
    for (root, g) in groups {
        if Some(root) == string_root {
            debug_assert_eq!(g.rights.len(), 1);
            string_row = Some(g.rights[0]);
            string = Some(g.piece);
        } else if g.rights.is_empty() {
            loops.push(g.piece);
        } else {
            debug_assert_eq!(g.rights.len(), 2);
            pairs.push((g.rights[0], g.rights[1]));
            slings.push(g.piece);
        }
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.sort_by_key(|&i| pairs[i]);
    let slings = order.iter().map(|&i| slings[i].clone()).collect();
    loops.sort();
    let next = PartialMatching::from_pairs(n, &pairs).expect("components are disjoint");
    debug_assert_eq!(next.holes().first().copied(), string_row);
    Outcome { next, slings, string, loops, reset: layer.across_count() == n % 2 }
}

/// All frontier pairings and, for each, the grouped outcomes of every layer.
pub(crate) struct Kernel {
    n: usize,
    states: Vec<PartialMatching>,
    /// `(outcome, next state, number of layers)`.
    rows: Vec<Vec<(Outcome, usize, u64)>>,
    layer_count: u64,
}

impl Kernel {
    pub(crate) fn new(n: usize) -> Result<Self, OracleError> {
        if n == 0 || n > MAX_MARKOV_N {
            return Err(OracleError::Capacity(format!("Markov oracle supports 1 <= n <= {MAX_MARKOV_N}")));
        }
        let states = enumerate_initial(n).map_err(|e| OracleError::Capacity(e.to_string()))?;
        let index: HashMap<_, _> = states.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
        let layers: Vec<PerfectMatching> = enumerate_all(n).expect("n <= 5").collect();
        let rows = states
            .iter()
            .map(|s| {
                let mut grouped: BTreeMap<Outcome, u64> = BTreeMap::new();
                for l in &layers {
                    *grouped.entry(compose(s, l)).or_default() += 1;
                }
                grouped
                    .into_iter()
                    .map(|(o, c)| {
                        let j = index[&o.next];
                        (o, j, c)
                    })
                    .collect()
            })
            .collect();
        Ok(Self { n, states, rows, layer_count: layers.len() as u64 })
    }

    fn prob(&self, count: u64) -> BigRat {
        rat(count as i64, self.layer_count as i64)
    }

    fn m(&self) -> usize {
        self.n / 2
    }
}

/// Initial per-sling attributes and string value of a statistic at time 0.
fn initial_attrs(stat: &Statistic, m: usize) -> (Vec<i64>, i64) {
    match stat {
        Statistic::LoopCount | Statistic::ResetCount | Statistic::ShapeCount(_) => (vec![], 0),
        Statistic::TransverseLength => (vec![2; m], 1),
        Statistic::TransverseBends => (vec![1; m], 0),
        _ => (vec![0; m], 0),
    }
}

/// One layer's effect on the attributes; `u` is the layer's index.
fn update(stat: &Statistic, u: usize, o: &Outcome, attrs: &[i64], val: i64) -> (Vec<i64>, i64) {
    let sum = |p: &Piece| p.olds.iter().map(|&i| attrs[i]).sum::<i64>();
    let consts = |p: &Piece, on_string: bool| -> i64 {
        match stat {
            Statistic::TransverseLength => {
                if on_string {
                    1
                } else {
                    2
                }
            }
            Statistic::TransverseAcross => p.across as i64,
            Statistic::TransverseBends => p.left as i64 + if on_string { 0 } else { p.right as i64 },
            Statistic::LayerCrossing { layer } if *layer == u => p.across as i64,
            _ => 0,
        }
    };
    match stat {
        Statistic::LoopCount => (vec![], val + o.loops.len() as i64),
        Statistic::ResetCount => (vec![], val + o.reset as i64),
        _ => {
            let next = o.slings.iter().map(|p| sum(p) + consts(p, false)).collect();
            let gain = o.string.as_ref().map_or(0, |p| sum(p) + consts(p, true));
            (next, val + gain)
        }
    }
}

/// Exact law from the Markov engine, and the mass lost above `cap`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkovLaw {
    pub pmf: Pmf,
    pub overflow: BigRat,
}

/// Exact law of `stat` after `t` layers by propagating the distribution of
/// (frontier pairing, per-sling attributes, value) one layer at a time.
pub fn exact_by_markov(n: usize, t: usize, stat: &Statistic, cap: i64) -> Result<MarkovLaw, OracleError> {
    stat.check(n, t)?;
    if let Statistic::ShapeCount(_) = stat {
        return Err(OracleError::Unsupported("shape counts need full loop histories; use enumeration".into()));
    }
    if t > MAX_MARKOV_T {
        return Err(OracleError::Capacity(format!("t = {t} exceeds {MAX_MARKOV_T}")));
    }
    let k = Kernel::new(n)?;
    let (attrs0, val0) = initial_attrs(stat, k.m());
    let mark = |time: usize, attrs: &mut Vec<i64>, val: &mut i64| {
        if let Statistic::LevelOccupancy { level } = stat {
            if *level == time {
                attrs.iter_mut().for_each(|a| *a = 2);
                *val = 1;
            }
        }
    };
    type Key = (usize, Vec<i64>, i64);
    let mut cur: HashMap<Key, BigUint> = HashMap::new();
    for s in 0..k.states.len() {
        let (mut a, mut v) = (attrs0.clone(), val0);
        mark(0, &mut a, &mut v);
        cur.insert((s, a, v), BigUint::one());
    }
    let states = BigInt::from(k.states.len());
    let mut overflow = BigRat::zero();
    for u in 1..=t {
        let mut spilled = BigUint::zero();
        let mut next: HashMap<Key, BigUint> = HashMap::with_capacity(cur.len());
        for ((s, attrs, val), w) in &cur {
            for (o, j, c) in &k.rows[*s] {
                let (mut na, mut nv) = update(stat, u, o, attrs, *val);
                mark(u, &mut na, &mut nv);
                let wc = w * BigUint::from(*c);
                if nv > cap {
                    spilled += wc;
                } else {
                    *next.entry((*j, na, nv)).or_default() += wc;
                }
            }
        }
        if next.len() > MAX_MARKOV_STATES {
            return Err(OracleError::Capacity(format!("{} augmented states at layer {u}", next.len())));
        }
        overflow += BigRat::new(BigInt::from(spilled), &states * BigInt::from(k.layer_count).pow(u as u32));
        cur = next;
    }
    let total = states * BigInt::from(k.layer_count).pow(t as u32);
    let mut pmf: BTreeMap<i64, BigRat> = BTreeMap::new();
    for ((_, _, v), w) in cur {
        *pmf.entry(v).or_insert_with(BigRat::zero) += BigRat::new(BigInt::from(w), total.clone());
    }
    Ok(MarkovLaw { pmf: Pmf::new(pmf), overflow })
}

// Gauss-Jordan elimination over the rationals.
fn solve(mut a: Vec<Vec<BigRat>>, mut b: Vec<BigRat>) -> Result<Vec<BigRat>, OracleError> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).find(|&r| !a[r][col].is_zero()).ok_or(OracleError::Singular)?;
        a.swap(col, piv);
        b.swap(col, piv);
        let inv = a[col][col].recip();
        for x in &mut a[col][col..] {
            *x *= &inv;
        }
        b[col] *= &inv;
        let prow = a[col].clone();
        let pb = b[col].clone();
        for r in 0..n {
            if r == col || a[r][col].is_zero() {
                continue;
            }
            let f = a[r][col].clone();
            for (x, p) in a[r][col..].iter_mut().zip(&prow[col..]) {
                if !p.is_zero() {
                    *x -= &f * p;
                }
            }
            b[r] -= &f * &pb;
        }
    }
    Ok(b)
}

/// Kernel rows as exact transition probabilities between pairings.
pub fn transition_matrix(n: usize) -> Result<(Vec<PartialMatching>, Vec<Vec<BigRat>>), OracleError> {
    let k = Kernel::new(n)?;
    let s = k.states.len();
    let mut p = vec![vec![BigRat::zero(); s]; s];
    for (i, row) in k.rows.iter().enumerate() {
        for (_, j, c) in row {
            p[i][*j] += k.prob(*c);
        }
    }
    Ok((k.states, p))
}

/// `P[layer is a reset | frontier]` for every frontier pairing.
pub fn reset_probabilities(n: usize) -> Result<Vec<(PartialMatching, BigRat)>, OracleError> {
    let k = Kernel::new(n)?;
    Ok(k.states
        .iter()
        .zip(&k.rows)
        .map(|(s, row)| {
            let hits: u64 = row.iter().filter(|(o, _, _)| o.reset).map(|(_, _, c)| c).sum();
            (s.clone(), k.prob(hits))
        })
        .collect())
}

/// Exact stationary law of the frontier pairing, solved from `πP = π`.
pub fn stationary_distribution(n: usize) -> Result<Vec<(PartialMatching, BigRat)>, OracleError> {
    let (states, p) = transition_matrix(n)?;
    let s = states.len();
    // Rows of (Pᵀ - I) with the last equation replaced by Σπ = 1.
    let mut a = vec![vec![BigRat::zero(); s]; s];
    for i in 0..s {
        for j in 0..s {
            a[j][i] = p[i][j].clone();
        }
        a[i][i] -= BigRat::one();
    }
    a[s - 1] = vec![BigRat::one(); s];
    let mut b = vec![BigRat::zero(); s];
    b[s - 1] = BigRat::one();
    let pi = solve(a, b)?;
    Ok(states.into_iter().zip(pi).collect())
}

/// Law of the loops closed by one layer from a uniformly drawn frontier.
pub fn loop_increment_law(n: usize) -> Result<Pmf, OracleError> {
    let k = Kernel::new(n)?;
    let mut hist: BTreeMap<i64, u64> = BTreeMap::new();
    for row in &k.rows {
        for (o, _, c) in row {
            *hist.entry(o.loops.len() as i64).or_default() += c;
        }
    }
    Ok(Pmf::from_weights(&hist))
}

// The frontier with the string on row 0 (odd n) and slings on consecutive
// rows after it.
fn canonical_frontier(n: usize) -> PartialMatching {
    let off = n % 2;
    let pairs: Vec<_> = (0..n / 2).map(|i| (off + 2 * i, off + 2 * i + 1)).collect();
    PartialMatching::from_pairs(n, &pairs).expect("disjoint pairs")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Fate {
    String,
    Loop(usize),
    Sling(usize),
}

fn fate(o: &Outcome, sling: usize) -> Fate {
    if o.string.as_ref().is_some_and(|p| p.olds.contains(&sling)) {
        return Fate::String;
    }
    if let Some(i) = o.loops.iter().position(|p| p.olds.contains(&sling)) {
        return Fate::Loop(i);
    }
    let i = o.slings.iter().position(|p| p.olds.contains(&sling)).expect("every sling has a fate");
    Fate::Sling(i)
}

/// Largest `n` for the one-layer classifiers.
pub const MAX_ONE_LAYER_N: usize = 7;

// Grouped outcomes of every layer from the canonical frontier.
fn canonical_row(n: usize, min_n: usize) -> Result<(Vec<(Outcome, u64)>, u64), OracleError> {
    if n.is_multiple_of(2) || n < min_n {
        return Err(OracleError::Invalid(format!("needs odd n >= {min_n}, got {n}")));
    }
    if n > MAX_ONE_LAYER_N {
        return Err(OracleError::Capacity(format!("one-layer classifiers support n <= {MAX_ONE_LAYER_N}")));
    }
    let s = canonical_frontier(n);
    let mut grouped: BTreeMap<Outcome, u64> = BTreeMap::new();
    let mut total = 0;
    for_each_matching(n, &mut vec![usize::MAX; 2 * n], &mut |l| {
        *grouped.entry(compose(&s, l)).or_default() += 1;
        total += 1;
    });
    Ok((grouped.into_iter().collect(), total))
}

// Visits every perfect matching of `2n` points by pairing the lowest free
// point with each later free point in turn.
fn for_each_matching(n: usize, partner: &mut Vec<usize>, f: &mut impl FnMut(&PerfectMatching)) {
    let Some(a) = partner.iter().position(|&p| p == usize::MAX) else {
        f(&PerfectMatching::from_partner(partner.clone()).expect("involution"));
        return;
    };
    for b in a + 1..2 * n {
        if partner[b] == usize::MAX {
            partner[a] = b;
            partner[b] = a;
            for_each_matching(n, partner, f);
            partner[a] = usize::MAX;
            partner[b] = usize::MAX;
        }
    }
}

/// One-layer fate of a distinguished sling: `(to string, to loop, survives)`.
pub fn sling_fate_law(n: usize) -> Result<(BigRat, BigRat, BigRat), OracleError> {
    let (row, total) = canonical_row(n, 3)?;
    let prob = |c: u64| rat(c as i64, total as i64);
    let mut c = [0u64; 3];
    for (o, w) in &row {
        let i = match fate(o, 0) {
            Fate::String => 0,
            Fate::Loop(_) => 1,
            Fate::Sling(_) => 2,
        };
        c[i] += w;
    }
    Ok((prob(c[0]), prob(c[1]), prob(c[2])))
}

/// One-layer joint fates of the first two slings of the canonical frontier,
/// in the row order of [`crate::theory::TwoSlingTable`], together with the
/// mirror images of rows (ii) to (iv).
pub fn two_sling_law(n: usize) -> Result<([BigRat; 8], [BigRat; 3]), OracleError> {
    let (row, total) = canonical_row(n, 5)?;
    let prob = |c: u64| rat(c as i64, total as i64);
    let mut rows = [0u64; 8];
    let mut mirror = [0u64; 3];
    for (o, w) in &row {
        use Fate::*;
        match (fate(o, 0), fate(o, 1)) {
            (String, String) => rows[0] += w,
            (String, Loop(_)) => rows[1] += w,
            (String, Sling(_)) => rows[2] += w,
            (Loop(_), Sling(_)) => rows[3] += w,
            (Loop(a), Loop(b)) if a != b => rows[4] += w,
            (Loop(_), Loop(_)) => rows[5] += w,
            (Sling(a), Sling(b)) if a != b => rows[6] += w,
            (Sling(_), Sling(_)) => rows[7] += w,
            (Loop(_), String) => mirror[0] += w,
            (Sling(_), String) => mirror[1] += w,
            (Sling(_), Loop(_)) => mirror[2] += w,
        }
    }
    Ok((rows.map(prob), mirror.map(prob)))
}

/// Law of the number of slings the string absorbs in one layer.
pub fn absorption_law(n: usize) -> Result<Pmf, OracleError> {
    let (row, _) = canonical_row(n, 1)?;
    let mut hist: BTreeMap<i64, u64> = BTreeMap::new();
    for (o, w) in &row {
        let x = o.string.as_ref().map_or(0, |p| p.olds.len()) as i64;
        *hist.entry(x).or_default() += w;
    }
    Ok(Pmf::from_weights(&hist))
}

/// Exact laws of `V` and `E` for the infinite string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalLaws {
    pub v: Pmf,
    pub e: Pmf,
}

/// Laws of `V` and `E` at stationarity. Probed slings carry tallies until
/// they join the string or close; the resulting absorbing chain is solved
/// exactly, one value of the running tally at a time.
pub fn local_laws(n: usize) -> Result<LocalLaws, OracleError> {
    if n.is_multiple_of(2) {
        return Err(OracleError::Invalid(format!("local laws need odd n, got {n}")));
    }
    let k = Kernel::new(n)?;
    let pi = stationary_distribution(n)?;
    let m = k.m();
    let mut v_start = Vec::new();
    let mut e_start = Vec::new();
    for (s, (state, p)) in pi.iter().enumerate() {
        debug_assert_eq!(&k.states[s], state);
        v_start.push(((s, vec![2u32; m]), 1u32, p.clone()));
        for (o, j, c) in &k.rows[s] {
            let tallies = o.slings.iter().map(|q| q.across).collect();
            let x = o.string.as_ref().map_or(0, |q| q.across);
            e_start.push(((*j, tallies), x, p * k.prob(*c)));
        }
    }
    Ok(LocalLaws { v: absorb(&k, v_start)?, e: absorb(&k, e_start)? })
}

type TallyState = (usize, Vec<u32>);

fn absorb(k: &Kernel, start: Vec<(TallyState, u32, BigRat)>) -> Result<Pmf, OracleError> {
    let n = k.n as u32;
    let mut final_law: BTreeMap<i64, BigRat> = BTreeMap::new();
    let mut index: HashMap<TallyState, usize> = HashMap::new();
    let mut states: Vec<TallyState> = Vec::new();
    // (target or None when resolved, tally gained, probability).
    let mut trans: Vec<Vec<(Option<usize>, u32, BigRat)>> = Vec::new();
    let mut init: Vec<(usize, u32, BigRat)> = Vec::new();
    let mut queue = Vec::new();
    let mut intern = |st: TallyState, states: &mut Vec<TallyState>, queue: &mut Vec<usize>| -> usize {
        *index.entry(st.clone()).or_insert_with(|| {
            states.push(st);
            queue.push(states.len() - 1);
            states.len() - 1
        })
    };
    for (st, x, p) in start {
        if st.1.iter().all(|&t| t == 0) {
            *final_law.entry(x as i64).or_insert_with(BigRat::zero) += p;
        } else {
            let i = intern(st, &mut states, &mut queue);
            init.push((i, x, p));
        }
    }
    while let Some(i) = queue.pop() {
        if trans.len() <= i {
            trans.resize(states.len(), Vec::new());
        }
        let (s, tallies) = states[i].clone();
        let mut out = Vec::new();
        for (o, j, c) in &k.rows[s] {
            let sum = |p: &Piece| p.olds.iter().map(|&q| tallies[q]).sum::<u32>();
            let next: Vec<u32> = o.slings.iter().map(sum).collect();
            let gain = o.string.as_ref().map_or(0, sum);
            let target =
                if next.iter().all(|&t| t == 0) { None } else { Some(intern((*j, next), &mut states, &mut queue)) };
            out.push((target, gain, k.prob(*c)));
        }
        if trans.len() < states.len() {
            trans.resize(states.len(), Vec::new());
        }
        trans[i] = out;
    }
    let ns = states.len();
    // g[x][i]: expected visits to state i with running tally x.
    let mut g: Vec<Vec<BigRat>> = Vec::new();
    for x in 0..=n {
        let mut rhs = vec![BigRat::zero(); ns];
        for (i, x0, p) in &init {
            if *x0 == x {
                rhs[*i] += p;
            }
        }
        for (y, gy) in g.iter().enumerate() {
            for (i, row) in trans.iter().enumerate() {
                if gy[i].is_zero() {
                    continue;
                }
                for (target, gain, p) in row {
                    if let Some(j) = target {
                        if y as u32 + gain == x && *gain > 0 {
                            rhs[*j] += &gy[i] * p;
                        }
                    }
                }
            }
        }
        if rhs.iter().all(Zero::is_zero) {
            g.push(rhs);
            continue;
        }
        let mut a = vec![vec![BigRat::zero(); ns]; ns];
        for (i, ai) in a.iter_mut().enumerate() {
            ai[i] = BigRat::one();
        }
        for (i, row) in trans.iter().enumerate() {
            for (target, gain, p) in row {
                if let (Some(j), 0) = (target, gain) {
                    a[*j][i] -= p;
                }
            }
        }
        g.push(solve(a, rhs)?);
    }
    for (x, gx) in g.iter().enumerate() {
        for (i, row) in trans.iter().enumerate() {
            if gx[i].is_zero() {
                continue;
            }
            for (target, gain, p) in row {
                if target.is_none() {
                    *final_law.entry((x as u32 + gain) as i64).or_insert_with(BigRat::zero) += &gx[i] * p;
                }
            }
        }
    }
    final_law.retain(|_, p| !p.is_zero());
    Ok(Pmf::new(final_law))
}

/// Rewards whose long-run rate and variance [`regenerative_constants`]
/// computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Reward {
    Loops,
    Resets,
    Transverse,
    Across,
    Bends,
}

impl Reward {
    fn uses_attrs(self) -> bool {
        matches!(self, Reward::Transverse | Reward::Across | Reward::Bends)
    }

    fn fresh(self) -> i64 {
        match self {
            Reward::Transverse => 2,
            Reward::Bends => 1,
            _ => 0,
        }
    }
}

/// Long-run quantities from one renewal block: `R` is a block's length and
/// `Z` the reward collected over it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegenConstants {
    pub mean_block: BigRat,
    /// `E[Z] / E[R]`.
    pub rate: BigRat,
    /// `E[(Z - rate R)²] / E[R]`, the CLT variance per layer.
    pub variance: BigRat,
}

/// Exact rate and CLT variance of a reward, from the first and second
/// moments of one renewal block. The block starts in the post-reset law and
/// ends at the next reset layer; the moments are propagated through affine
/// maps of `(sling attributes, Z, R)` and summed in closed form.
pub fn regenerative_constants(n: usize, reward: Reward) -> Result<RegenConstants, OracleError> {
    if reward.uses_attrs() && n.is_multiple_of(2) {
        return Err(OracleError::Invalid(format!("string rewards need odd n, got {n}")));
    }
    let kern = Kernel::new(n)?;
    let ma = if reward.uses_attrs() { kern.m() } else { 0 };
    let kv = ma + 2;
    let (zi, ri) = (ma, ma + 1);
    // Flat layout: [1, y_0..y_{k-1}, y_i y_j for i <= j].
    let idx2: Vec<Vec<usize>> = {
        let mut table = vec![vec![0; kv]; kv];
        let pairs = (0..kv).flat_map(|i| (i..kv).map(move |j| (i, j)));
        for ((i, j), slot) in pairs.zip(1 + kv..) {
            table[i][j] = slot;
            table[j][i] = slot;
        }
        table
    };
    let d = 1 + kv + kv * (kv + 1) / 2;
    let lift = |a: &[Vec<i64>], c: &[i64]| -> Vec<Vec<i64>> {
        let mut l = vec![vec![0i64; d]; d];
        l[0][0] = 1;
        for i in 0..kv {
            l[1 + i][0] += c[i];
            for j in 0..kv {
                l[1 + i][1 + j] += a[i][j];
            }
        }
        for i in 0..kv {
            for q in i..kv {
                let row = idx2[i][q];
                l[row][0] += c[i] * c[q];
                for j in 0..kv {
                    l[row][1 + j] += c[i] * a[q][j] + c[q] * a[i][j];
                }
                for j in 0..kv {
                    for r in 0..kv {
                        let x = a[i][j] * a[q][r];
                        if x != 0 {
                            l[row][idx2[j][r]] += x;
                        }
                    }
                }
            }
        }
        l
    };
    let affine = |o: &Outcome| -> (Vec<Vec<i64>>, Vec<i64>) {
        let mut a = vec![vec![0i64; kv]; kv];
        let mut c = vec![0i64; kv];
        if reward.uses_attrs() {
            for (i, p) in o.slings.iter().enumerate() {
                for &q in &p.olds {
                    a[i][q] = 1;
                }
                c[i] = match reward {
                    Reward::Transverse => 2,
                    Reward::Across => p.across as i64,
                    _ => (p.left + p.right) as i64,
                };
            }
            if let Some(p) = &o.string {
                for &q in &p.olds {
                    a[zi][q] = 1;
                }
                c[zi] = match reward {
                    Reward::Transverse => 1,
                    Reward::Across => p.across as i64,
                    _ => p.left as i64,
                };
            }
        } else {
            c[zi] = match reward {
                Reward::Loops => o.loops.len() as i64,
                _ => o.reset as i64,
            };
        }
        a[zi][zi] = 1;
        a[ri][ri] = 1;
        c[ri] = 1;
        (a, c)
    };
    let s = kern.states.len();
    let dim = s * d;
    // Integer operators summed over layers: T (continue) and U (absorb).
    let mut t_op = vec![vec![0i64; dim]; dim];
    let mut u_op = vec![vec![0i64; dim]; d];
    for (i, row) in kern.rows.iter().enumerate() {
        for (o, j, c) in row {
            let (a, cc) = affine(o);
            let l = lift(&a, &cc);
            let w = *c as i64;
            for r in 0..d {
                for q in 0..d {
                    if l[r][q] == 0 {
                        continue;
                    }
                    if o.reset {
                        u_op[r][i * d + q] += w * l[r][q];
                    } else {
                        t_op[j * d + r][i * d + q] += w * l[r][q];
                    }
                }
            }
        }
    }
    let lc = kern.layer_count as i64;
    let mut a = vec![vec![BigRat::zero(); dim]; dim];
    for (r, row) in t_op.iter().enumerate() {
        for (q, &x) in row.iter().enumerate() {
            if x != 0 {
                a[r][q] = rat(-x, lc);
            }
        }
        a[r][r] += BigRat::one();
    }
    let mut b = vec![BigRat::zero(); dim];
    let mut y0 = vec![0i64; kv];
    for v in y0.iter_mut().take(ma) {
        *v = reward.fresh();
    }
    for i in 0..s {
        let base = i * d;
        let w = rat(1, s as i64);
        b[base] = w.clone();
        for p in 0..kv {
            b[base + 1 + p] = &w * int_rat(BigInt::from(y0[p]));
            for q in p..kv {
                b[base + idx2[p][q]] = &w * int_rat(BigInt::from(y0[p] * y0[q]));
            }
        }
    }
    let visits = solve(a, b)?;
    let absorbed: Vec<BigRat> = u_op
        .iter()
        .map(|row| row.iter().zip(&visits).filter(|(x, _)| **x != 0).map(|(&x, v)| rat(x, lc) * v).sum())
        .collect();
    debug_assert_eq!(absorbed[0], BigRat::one());
    let er = absorbed[1 + ri].clone();
    let ez = absorbed[1 + zi].clone();
    let rate = &ez / &er;
    let second =
        &absorbed[idx2[zi][zi]] - rat(2, 1) * &rate * &absorbed[idx2[zi][ri]] + &rate * &rate * &absorbed[idx2[ri][ri]];
    Ok(RegenConstants { variance: second / &er, mean_block: er, rate })
}

/// Row sums of the exact kernel, one per pairing.
pub fn kernel_row_sums(n: usize) -> Result<Vec<BigRat>, OracleError> {
    let (_, p) = transition_matrix(n)?;
    Ok(p.into_iter().map(|row| row.into_iter().sum()).collect())
}

/// `(2n-1)!!`, the number of layers.
pub fn layer_count(n: usize) -> BigInt {
    double_factorial(2 * n as i64 - 1)
}
