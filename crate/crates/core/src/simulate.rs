//! Streaming simulation of the sling process of a modified diagram.
//!
//! A [`Frontier`] holds only the paths that end on the current level: the
//! transverse string (odd `n`) and the slings. Each [`Frontier::step`]
//! composes one layer onto it and reports the loops that close, the slings
//! the string absorbs and whether the layer is a reset. Memory does not grow
//! with the number of layers.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matching::{sample_initial_partial, sample_uniform_into, PartialMatching, PerfectMatching};
use crate::shapes::{validate_strong, Letter, StrongShape, WeakShape};
use crate::stats::{moments, Moments};

pub const DEFAULT_SHAPE_CAP: usize = 64;
pub const DEFAULT_STRETCH_CAP: usize = 32;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{what} requires odd n, got n = {n}")]
    EvenN { what: &'static str, n: usize },
    #[error("cannot merge reports: {0}")]
    Mismatch(String),
}

/// How much per-sling history the frontier keeps.
///
/// `shape_cap` bounds the loop size for which strong shapes are rebuilt;
/// `stretch_cap` bounds the stretch for which weak shapes are recorded.
/// Loops beyond a cap are reported with `None` in the corresponding field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Detail {
    pub shape_cap: Option<usize>,
    pub stretch_cap: Option<usize>,
}

impl Detail {
    pub const NONE: Detail = Detail { shape_cap: None, stretch_cap: None };

    pub fn full() -> Self {
        Detail { shape_cap: Some(DEFAULT_SHAPE_CAP), stretch_cap: Some(DEFAULT_STRETCH_CAP) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    String,
    /// End `0` or `1` of a sling.
    End(usize, usize),
}

/// Vertices from `ends[0]` to `ends[1]`; `layers[i]` is the layer of the
/// edge after `verts[i]`.
#[derive(Debug, Clone, Default)]
struct Path {
    verts: Vec<(u64, usize)>,
    layers: Vec<u64>,
}

#[derive(Debug, Clone)]
struct Sling {
    ends: [usize; 2],
    size: u64,
    across: u64,
    bends: u64,
    /// Smallest vertex in `(level, row)` order.
    first: (u64, usize),
    path: Option<Path>,
    /// Vertex counts per level, starting at `first.0`.
    occ: Option<Vec<u32>>,
    /// Probe tallies `[V, E]`.
    tally: [u32; 2],
}

#[derive(Debug, Clone)]
struct StringEnd {
    row: usize,
    size: u64,
    across: u64,
    bends: u64,
    tally: [u32; 2],
}

/// A loop closed during a step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LoopEvent {
    /// The layer whose left bends closed the loop; one more than its
    /// rightmost level.
    pub closing_layer: u64,
    pub leftmost_level: u64,
    /// Topmost row of the loop on its leftmost level.
    pub start_row: usize,
    pub size: u64,
    pub word: Option<StrongShape>,
    pub weak: Option<WeakShape>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StepEvents {
    /// Ordered by `(leftmost_level, start_row)`.
    pub loops: Vec<LoopEvent>,
    /// Slings absorbed by the transverse string.
    pub absorbed: u32,
    pub is_reset: bool,
    /// Vertices, across edges and bends added to the transverse string.
    pub string_growth: u64,
    pub string_across: u64,
    pub string_bends: u64,
}

// Accumulates a sling or loop from pieces.
struct Builder {
    detail: Detail,
    size: u64,
    across: u64,
    bends: u64,
    first: (u64, usize),
    path: Option<Path>,
    occ: Option<(u64, Vec<u32>)>,
    tally: [u32; 2],
}

impl Builder {
    fn new(detail: Detail) -> Self {
        Self {
            detail,
            size: 0,
            across: 0,
            bends: 0,
            first: (u64::MAX, usize::MAX),
            path: detail.shape_cap.map(|_| Path::default()),
            occ: detail.stretch_cap.map(|_| (u64::MAX, Vec::new())),
            tally: [0; 2],
        }
    }

    fn push_vertex(&mut self, v: (u64, usize), edge: Option<u64>) {
        self.size += 1;
        self.first = self.first.min(v);
        if let Some(p) = &mut self.path {
            if let Some(l) = edge {
                p.layers.push(l);
            }
            p.verts.push(v);
        }
        self.add_occ(v.0, &[1]);
        self.cap_path();
    }

    // Appends a sling, entered at end 1 when `reversed`.
    fn push_sling(&mut self, s: &mut Sling, reversed: bool, edge: Option<u64>) {
        self.size += s.size;
        self.across += s.across;
        self.bends += s.bends;
        self.first = self.first.min(s.first);
        self.tally[0] += s.tally[0];
        self.tally[1] += s.tally[1];
        match (&mut self.path, s.path.take()) {
            (Some(p), Some(mut q)) => {
                if reversed {
                    q.verts.reverse();
                    q.layers.reverse();
                }
                if let Some(l) = edge {
                    p.layers.push(l);
                }
                p.verts.append(&mut q.verts);
                p.layers.append(&mut q.layers);
            }
            _ => self.path = None,
        }
        match s.occ.take() {
            Some(o) => self.add_occ(s.first.0, &o),
            None => self.occ = None,
        }
        self.cap_path();
    }

    fn cap_path(&mut self) {
        if self.detail.shape_cap.is_some_and(|cap| self.size > cap as u64) {
            self.path = None;
        }
    }

    fn add_occ(&mut self, start: u64, counts: &[u32]) {
        let Some((base, occ)) = &mut self.occ else { return };
        if occ.is_empty() {
            *base = start;
        } else if start < *base {
            let shift = (*base - start) as usize;
            occ.splice(0..0, std::iter::repeat_n(0, shift));
            *base = start;
        }
        let off = (start - *base) as usize;
        if occ.len() < off + counts.len() {
            occ.resize(off + counts.len(), 0);
        }
        for (i, c) in counts.iter().enumerate() {
            occ[off + i] += c;
        }
        let cap = self.detail.stretch_cap.unwrap_or(0);
        if occ.len() > cap + 1 {
            self.occ = None;
        }
    }

    fn into_sling(self, ends: [usize; 2]) -> Sling {
        let occ = self.occ.map(|(base, o)| {
            debug_assert_eq!(base, self.first.0);
            o
        });
        Sling {
            ends,
            size: self.size,
            across: self.across,
            bends: self.bends,
            first: self.first,
            path: self.path,
            occ,
            tally: self.tally,
        }
    }

    // `closing` is the layer of the edge from the last vertex back to the first.
    fn into_loop(self, closing: u64) -> LoopEvent {
        let word = self.path.map(|mut p| {
            p.layers.push(closing);
            canonical_word(&p)
        });
        let weak = self.occ.map(|(_, o)| {
            debug_assert!(o.iter().all(|c| c % 2 == 0 && *c > 0));
            WeakShape::new(o.iter().map(|c| c / 2).collect())
        });
        LoopEvent {
            closing_layer: closing,
            leftmost_level: self.first.0,
            start_row: self.first.1,
            size: self.size,
            word,
            weak,
        }
    }
}

// Reads a cyclic path from its smallest vertex, leaving through the edge on
// that vertex's right.
fn canonical_word(p: &Path) -> StrongShape {
    let k = p.verts.len();
    let s = (0..k).min_by_key(|&i| p.verts[i]).expect("non-empty loop");
    let forward = p.layers[s] == p.verts[s].0 + 1;
    let at = |i: usize| if forward { (s + i) % k } else { (s + k - i % k) % k };
    StrongShape::from_letters(
        (0..k).map(|i| if p.verts[at(i)].0 != p.verts[at(i + 1)].0 { Letter::A } else { Letter::B }).collect(),
    )
}

/// State of the sling process on the current rightmost level.
#[derive(Debug, Clone)]
pub struct Frontier {
    n: usize,
    level: u64,
    slot: Vec<Slot>,
    slings: Vec<Sling>,
    string: Option<StringEnd>,
    detail: Detail,
    loop_vertices: u64,
    probe_edges: bool,
}

impl Frontier {
    /// The frontier at level 0 of a modified diagram with boundary matching
    /// `initial`.
    pub fn new(initial: &PartialMatching, detail: Detail) -> Self {
        let n = initial.size();
        assert!(n >= 1);
        let holes = initial.holes();
        assert_eq!(holes.len(), n % 2, "boundary matching must leave n mod 2 points free");
        let mut slot = vec![Slot::String; n];
        let mut slings = Vec::new();
        for (a, b) in initial.pairs() {
            let mut bl = Builder::new(detail);
            bl.push_vertex((0, a), None);
            bl.push_vertex((0, b), Some(0));
            bl.bends = 1;
            slot[a] = Slot::End(slings.len(), 0);
            slot[b] = Slot::End(slings.len(), 1);
            slings.push(bl.into_sling([a, b]));
        }
        let string = holes.first().map(|&row| StringEnd { row, size: 1, across: 0, bends: 0, tally: [0; 2] });
        Self { n, level: 0, slot, slings, string, detail, loop_vertices: 0, probe_edges: false }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of layers consumed.
    pub fn level(&self) -> u64 {
        self.level
    }

    pub fn sling_count(&self) -> usize {
        self.slings.len()
    }

    pub fn string_row(&self) -> Option<usize> {
        self.string.as_ref().map(|s| s.row)
    }

    /// Vertex count of the transverse string so far.
    pub fn string_size(&self) -> Option<u64> {
        self.string.as_ref().map(|s| s.size)
    }

    /// The sling endpoint pairing on the current level.
    pub fn pairing(&self) -> PartialMatching {
        let pairs: Vec<_> = self.slings.iter().map(|s| (s.ends[0], s.ends[1])).collect();
        PartialMatching::from_pairs(self.n, &pairs).expect("frontier slings are disjoint")
    }

    /// Marks the current level for a local-law probe: the string carries
    /// `V = 1` and each sling its two endpoints, and the next layer's across
    /// edges are tallied into `E`.
    pub fn start_probe(&mut self) {
        for s in &mut self.slings {
            s.tally = [2, 0];
        }
        if let Some(st) = &mut self.string {
            st.tally = [1, 0];
        }
        self.probe_edges = true;
    }

    /// Whether some live sling still carries probe tallies.
    pub fn probe_pending(&self) -> bool {
        self.probe_edges || self.slings.iter().any(|s| s.tally != [0, 0])
    }

    /// Takes the string's `(V, E)` tallies once the probe has resolved.
    pub fn take_probe(&mut self) -> Option<(u32, u32)> {
        if self.probe_pending() {
            return None;
        }
        self.string.as_mut().map(|s| {
            let t = s.tally;
            s.tally = [0; 2];
            (t[0], t[1])
        })
    }

    /// Composes one layer onto the frontier.
    pub fn step(&mut self, layer: &PerfectMatching) -> StepEvents {
        let n = self.n;
        assert_eq!(layer.size(), n, "layer size");
        let p = layer.partners();
        let lay = self.level + 1;
        let probe = std::mem::take(&mut self.probe_edges);
        let mut old = std::mem::take(&mut self.slings);
        let mut used = vec![false; old.len()];
        let mut seen = vec![false; n];
        let mut slot = vec![Slot::String; n];
        let mut slings = Vec::with_capacity(old.len() + 1);
        let mut ev = StepEvents::default();

        // The string walks through left bends and absorbed slings until it
        // crosses to the new level.
        if let Some(st) = &mut self.string {
            let (size0, across0, bends0) = (st.size, st.across, st.bends);
            let mut cur = st.row;
            loop {
                let x = p[cur];
                if x >= n {
                    st.size += 1;
                    st.across += 1;
                    st.row = x - n;
                    st.tally[1] += probe as u32;
                    seen[x - n] = true;
                    break;
                }
                st.bends += 1;
                let Slot::End(s, e) = self.slot[x] else { unreachable!("string meets itself") };
                used[s] = true;
                let sl = &old[s];
                st.size += sl.size;
                st.across += sl.across;
                st.bends += sl.bends;
                st.tally[0] += sl.tally[0];
                st.tally[1] += sl.tally[1];
                ev.absorbed += 1;
                cur = sl.ends[1 - e];
            }
            ev.string_growth = st.size - size0;
            ev.string_across = st.across - across0;
            ev.string_bends = st.bends - bends0;
        }

        // Every other new-level vertex starts a new sling.
        for r in 0..n {
            if seen[r] {
                continue;
            }
            seen[r] = true;
            let mut b = Builder::new(self.detail);
            b.push_vertex((lay, r), None);
            let x = p[n + r];
            let end = if x >= n {
                b.bends += 1;
                b.push_vertex((lay, x - n), Some(lay));
                x - n
            } else {
                b.across += 1;
                b.tally[1] += probe as u32;
                let mut cur = x;
                loop {
                    let Slot::End(s, e) = self.slot[cur] else { unreachable!("string endpoint reused") };
                    debug_assert!(!used[s]);
                    used[s] = true;
                    let other = old[s].ends[1 - e];
                    b.push_sling(&mut old[s], e == 1, Some(lay));
                    let y = p[other];
                    if y >= n {
                        b.across += 1;
                        b.tally[1] += probe as u32;
                        b.push_vertex((lay, y - n), Some(lay));
                        break y - n;
                    }
                    b.bends += 1;
                    cur = y;
                }
            };
            seen[end] = true;
            slot[r] = Slot::End(slings.len(), 0);
            slot[end] = Slot::End(slings.len(), 1);
            slings.push(b.into_sling([r, end]));
        }

        // The remaining slings are joined by left bends into closed loops.
        for s0 in 0..old.len() {
            if used[s0] {
                continue;
            }
            let mut b = Builder::new(self.detail);
            let (mut s, mut e, mut edge) = (s0, 0, None);
            loop {
                used[s] = true;
                let other = old[s].ends[1 - e];
                b.push_sling(&mut old[s], e == 1, edge);
                let y = p[other];
                debug_assert!(y < n);
                let Slot::End(s2, e2) = self.slot[y] else { unreachable!("loop through string") };
                if s2 == s0 {
                    debug_assert_eq!(e2, 0);
                    break;
                }
                (s, e, edge) = (s2, e2, Some(lay));
            }
            let lp = b.into_loop(lay);
            self.loop_vertices += lp.size;
            ev.loops.push(lp);
        }
        ev.loops.sort_by_key(|l| (l.leftmost_level, l.start_row));

        ev.is_reset = layer.across_count() == n % 2;
        debug_assert_eq!(ev.is_reset, slings.iter().all(|s| s.size == 2));
        self.slot = slot;
        self.slings = slings;
        self.level = lay;
        debug_assert_eq!(self.vertex_total(), n as u64 * (lay + 1), "vertex conservation");
        ev
    }

    // Vertices on levels `0..=level`, counted through the components.
    fn vertex_total(&self) -> u64 {
        self.loop_vertices
            + self.slings.iter().map(|s| s.size).sum::<u64>()
            + self.string.as_ref().map_or(0, |s| s.size)
    }
}

/// A frontier in the post-reset law, drawn with full shape detail.
pub fn init_frontier<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Frontier {
    init_frontier_with(n, rng, Detail::full())
}

pub fn init_frontier_with<R: Rng + ?Sized>(n: usize, rng: &mut R, detail: Detail) -> Frontier {
    Frontier::new(&sample_initial_partial(n, rng), detail)
}

/// The random stream of one replica.
pub fn replica_rng(seed: u64, replica: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica as u64);
    rng
}

/// A statistic accumulated along a run.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tracker {
    /// Loop count `C(t)`.
    Loops,
    /// Vertex count of the transverse string.
    Transverse,
    /// Across edges of the transverse string.
    Across,
    /// Bending edges of the transverse string.
    Bends,
    /// Number of reset layers.
    Resets,
    /// Loops of one strong shape.
    Shape(StrongShape),
    /// Loops of one weak shape.
    Weak(WeakShape),
}

impl fmt::Display for Tracker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tracker::Loops => f.write_str("loops"),
            Tracker::Transverse => f.write_str("transverse"),
            Tracker::Across => f.write_str("across"),
            Tracker::Bends => f.write_str("bends"),
            Tracker::Resets => f.write_str("resets"),
            Tracker::Shape(w) => write!(f, "shape:{w}"),
            Tracker::Weak(a) => {
                let parts: Vec<String> = a.a().iter().map(u32::to_string).collect();
                write!(f, "weak:{}", parts.join(","))
            }
        }
    }
}

impl FromStr for Tracker {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = |msg: String| SimError::InvalidConfig(msg);
        Ok(match s.trim() {
            "loops" => Tracker::Loops,
            "transverse" => Tracker::Transverse,
            "across" => Tracker::Across,
            "bends" => Tracker::Bends,
            "resets" => Tracker::Resets,
            other => {
                if let Some(w) = other.strip_prefix("shape:") {
                    Tracker::Shape(w.parse().map_err(|e| bad(format!("tracker {other}: {e}")))?)
                } else if let Some(a) = other.strip_prefix("weak:") {
                    let a: WeakShape = a.parse().map_err(|e| bad(format!("tracker {other}: {e}")))?;
                    if a.a().is_empty() || a.a().contains(&0) {
                        return Err(bad(format!("tracker {other}: weak shapes have positive entries")));
                    }
                    Tracker::Weak(a)
                } else {
                    return Err(bad(format!("unknown tracker {other}")));
                }
            }
        })
    }
}

impl Serialize for Tracker {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Tracker {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn default_shape_cap() -> usize {
    DEFAULT_SHAPE_CAP
}
fn default_stretch_cap() -> usize {
    DEFAULT_STRETCH_CAP
}
fn default_replicas() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunConfig {
    pub n: usize,
    pub t: u64,
    pub seed: u64,
    pub trackers: Vec<Tracker>,
    #[serde(default = "default_shape_cap")]
    pub shape_cap: usize,
    #[serde(default = "default_stretch_cap")]
    pub stretch_cap: usize,
    #[serde(default = "default_replicas")]
    pub replicas: u32,
    /// Index of the first replica stream.
    #[serde(default)]
    pub first_replica: u32,
}

impl RunConfig {
    pub fn new(n: usize, t: u64, seed: u64, trackers: Vec<Tracker>) -> Self {
        Self {
            n,
            t,
            seed,
            trackers,
            shape_cap: DEFAULT_SHAPE_CAP,
            stretch_cap: DEFAULT_STRETCH_CAP,
            replicas: 1,
            first_replica: 0,
        }
    }

    pub fn with_replicas(mut self, replicas: u32) -> Self {
        self.replicas = replicas;
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::InvalidConfig(msg));
        if self.n == 0 {
            return bad("n must be at least 1".into());
        }
        if self.t == 0 {
            return bad("t must be at least 1".into());
        }
        if self.replicas == 0 {
            return bad("replicas must be at least 1".into());
        }
        if self.first_replica.checked_add(self.replicas).is_none() {
            return bad("replica range overflows".into());
        }
        let mut seen = BTreeSet::new();
        for tr in &self.trackers {
            if !seen.insert(tr) {
                return bad(format!("tracker {tr} given twice"));
            }
            match tr {
                Tracker::Transverse | Tracker::Across | Tracker::Bends if self.n.is_multiple_of(2) => {
                    return Err(SimError::EvenN { what: "the transverse string", n: self.n });
                }
                Tracker::Shape(w) => {
                    if w.len() > self.shape_cap {
                        return bad(format!("shape {w} is longer than the shape cap {}", self.shape_cap));
                    }
                    if !validate_strong(w, self.n) {
                        return bad(format!("{w} is not a strong shape for n = {}", self.n));
                    }
                }
                Tracker::Weak(a) => {
                    if a.stretch() > self.stretch_cap {
                        return bad(format!("weak shape {a} exceeds the stretch cap {}", self.stretch_cap));
                    }
                    if !a.is_valid_for(self.n) {
                        return bad(format!("{a} is not a weak shape for n = {}", self.n));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn detail(&self) -> Detail {
        let shapes = self.trackers.iter().any(|t| matches!(t, Tracker::Shape(_)));
        let weak = self.trackers.iter().any(|t| matches!(t, Tracker::Weak(_)));
        Detail { shape_cap: shapes.then_some(self.shape_cap), stretch_cap: weak.then_some(self.stretch_cap) }
    }
}

/// Sums for one tracker over all replicas.
///
/// The regenerative sums run over complete renewal blocks: `R` is a block's
/// length and `Z` the tracker's increment over it.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrackerStats {
    /// Final values, one per replica, sorted.
    pub finals: Vec<i64>,
    /// Sum of all increments.
    pub increments: i128,
    pub layers: u64,
    pub blocks: u64,
    pub sum_r: i128,
    pub sum_z: i128,
    pub sum_r2: i128,
    pub sum_z2: i128,
    pub sum_rz: i128,
}

impl TrackerStats {
    /// Increment per layer.
    pub fn estimate(&self) -> f64 {
        self.increments as f64 / self.layers as f64
    }

    /// Regenerative standard error of [`Self::estimate`].
    pub fn std_error(&self) -> f64 {
        if self.blocks < 2 || self.sum_r == 0 {
            return f64::NAN;
        }
        let r = self.sum_z as f64 / self.sum_r as f64;
        let ss = self.sum_z2 as f64 - 2.0 * r * self.sum_rz as f64 + r * r * self.sum_r2 as f64;
        ss.max(0.0).sqrt() / self.sum_r as f64
    }

    pub fn final_moments(&self) -> Moments {
        moments(&self.finals)
    }

    fn merge(&mut self, o: &TrackerStats) {
        self.finals.extend_from_slice(&o.finals);
        self.finals.sort_unstable();
        self.increments += o.increments;
        self.layers += o.layers;
        self.blocks += o.blocks;
        self.sum_r += o.sum_r;
        self.sum_z += o.sum_z;
        self.sum_r2 += o.sum_r2;
        self.sum_z2 += o.sum_z2;
        self.sum_rz += o.sum_rz;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackerSummary {
    pub estimate: f64,
    pub std_error: f64,
    pub blocks: u64,
    pub replicas: usize,
    pub final_mean: f64,
    pub final_variance: f64,
    pub final_skewness: f64,
    pub final_excess_kurtosis: f64,
}

/// Mergeable result of one or more replicas.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsReport {
    pub n: usize,
    /// Layers per replica.
    pub t: u64,
    pub seed: u64,
    pub replicas: BTreeSet<u32>,
    pub trackers: BTreeMap<String, TrackerStats>,
    pub loops: u64,
    /// Loops whose strong or weak shape exceeded its cap while tracked.
    pub shape_overflow: u64,
    pub weak_overflow: u64,
    pub reset_intervals: BTreeMap<u64, u64>,
    /// Slings absorbed by the string per layer.
    pub absorbed: BTreeMap<u64, u64>,
    /// Loops whose level range contains an earlier reset.
    pub loop_span_violations: u64,
    pub v_hist: BTreeMap<u64, u64>,
    pub e_hist: BTreeMap<u64, u64>,
}

fn merge_hist(a: &mut BTreeMap<u64, u64>, b: &BTreeMap<u64, u64>) {
    for (k, v) in b {
        *a.entry(*k).or_default() += v;
    }
}

impl StatsReport {
    /// Combines reports of disjoint replica sets of the same experiment.
    pub fn merge(&mut self, other: &StatsReport) -> Result<(), SimError> {
        if (self.n, self.t, self.seed) != (other.n, other.t, other.seed) {
            return Err(SimError::Mismatch(format!(
                "(n, t, seed) = {:?} vs {:?}",
                (self.n, self.t, self.seed),
                (other.n, other.t, other.seed)
            )));
        }
        if !self.replicas.is_disjoint(&other.replicas) {
            return Err(SimError::Mismatch("replica sets overlap".into()));
        }
        if self.trackers.keys().ne(other.trackers.keys()) {
            return Err(SimError::Mismatch("tracker sets differ".into()));
        }
        self.replicas.extend(&other.replicas);
        for (k, v) in &other.trackers {
            self.trackers.get_mut(k).expect("same keys").merge(v);
        }
        self.loops += other.loops;
        self.shape_overflow += other.shape_overflow;
        self.weak_overflow += other.weak_overflow;
        self.loop_span_violations += other.loop_span_violations;
        merge_hist(&mut self.reset_intervals, &other.reset_intervals);
        merge_hist(&mut self.absorbed, &other.absorbed);
        merge_hist(&mut self.v_hist, &other.v_hist);
        merge_hist(&mut self.e_hist, &other.e_hist);
        Ok(())
    }

    pub fn tracker(&self, t: &Tracker) -> Option<&TrackerStats> {
        self.trackers.get(&t.to_string())
    }

    pub fn summaries(&self) -> BTreeMap<String, TrackerSummary> {
        self.trackers
            .iter()
            .map(|(k, s)| {
                let m = s.final_moments();
                (
                    k.clone(),
                    TrackerSummary {
                        estimate: s.estimate(),
                        std_error: s.std_error(),
                        blocks: s.blocks,
                        replicas: s.finals.len(),
                        final_mean: m.mean,
                        final_variance: m.variance,
                        final_skewness: m.skewness,
                        final_excess_kurtosis: m.excess_kurtosis,
                    },
                )
            })
            .collect()
    }
}

/// Whether replicas run on the rayon pool or one after another.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecMode {
    Sequential,
    /// Falls back to sequential execution without the `parallel` feature.
    Parallel,
}

/// Sets the size of the global worker pool; call before any run. A no-op
/// without the `parallel` feature.
pub fn set_threads(threads: usize) -> Result<(), SimError> {
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| SimError::InvalidConfig(format!("thread pool: {e}")))?;
    let _ = threads;
    Ok(())
}

pub fn run(config: &RunConfig) -> Result<StatsReport, SimError> {
    run_with(config, ExecMode::Parallel)
}

pub fn run_with(config: &RunConfig, mode: ExecMode) -> Result<StatsReport, SimError> {
    config.validate()?;
    let ids: Vec<u32> = (config.first_replica..config.first_replica + config.replicas).collect();
    let reports = map_replicas(&ids, mode, |r| run_replica(config, r));
    merge_all(reports)
}

fn map_replicas<F>(ids: &[u32], mode: ExecMode, f: F) -> Vec<StatsReport>
where
    F: Fn(u32) -> StatsReport + Sync + Send,
{
    match mode {
        #[cfg(feature = "parallel")]
        ExecMode::Parallel => ids.par_iter().map(|&r| f(r)).collect(),
        _ => ids.iter().map(|&r| f(r)).collect(),
    }
}

fn merge_all(reports: Vec<StatsReport>) -> Result<StatsReport, SimError> {
    let mut it = reports.into_iter();
    let mut acc = it.next().expect("at least one replica");
    for r in it {
        acc.merge(&r)?;
    }
    Ok(acc)
}

fn increment(tr: &Tracker, ev: &StepEvents) -> i64 {
    match tr {
        Tracker::Loops => ev.loops.len() as i64,
        Tracker::Transverse => ev.string_growth as i64,
        Tracker::Across => ev.string_across as i64,
        Tracker::Bends => ev.string_bends as i64,
        Tracker::Resets => ev.is_reset as i64,
        Tracker::Shape(w) => ev.loops.iter().filter(|l| l.word.as_ref() == Some(w)).count() as i64,
        Tracker::Weak(a) => ev.loops.iter().filter(|l| l.weak.as_ref() == Some(a)).count() as i64,
    }
}

fn run_replica(cfg: &RunConfig, replica: u32) -> StatsReport {
    let n = cfg.n;
    let detail = cfg.detail();
    let mut rng = replica_rng(cfg.seed, replica);
    let mut f = init_frontier_with(n, &mut rng, detail);
    let mut layer = PerfectMatching::identity(n);
    let mut pool = Vec::with_capacity(2 * n);
    let k = cfg.trackers.len();
    let mut value: Vec<i64> = cfg.trackers.iter().map(|t| if *t == Tracker::Transverse { 1 } else { 0 }).collect();
    let mut stats = vec![TrackerStats::default(); k];
    let mut block = vec![0i64; k];
    let mut rep =
        StatsReport { n, t: cfg.t, seed: cfg.seed, replicas: BTreeSet::from([replica]), ..Default::default() };
    let mut last_reset = 0u64;
    for u in 1..=cfg.t {
        sample_uniform_into(&mut layer, &mut pool, &mut rng);
        let ev = f.step(&layer);
        for (i, tr) in cfg.trackers.iter().enumerate() {
            let d = increment(tr, &ev);
            value[i] += d;
            block[i] += d;
        }
        rep.loops += ev.loops.len() as u64;
        for l in &ev.loops {
            if l.leftmost_level < last_reset {
                rep.loop_span_violations += 1;
            }
            rep.shape_overflow += (detail.shape_cap.is_some() && l.word.is_none()) as u64;
            rep.weak_overflow += (detail.stretch_cap.is_some() && l.weak.is_none()) as u64;
        }
        if n % 2 == 1 {
            *rep.absorbed.entry(ev.absorbed as u64).or_default() += 1;
        }
        if ev.is_reset {
            let r = (u - last_reset) as i128;
            *rep.reset_intervals.entry(u - last_reset).or_default() += 1;
            for (s, z) in stats.iter_mut().zip(block.iter_mut()) {
                let zz = *z as i128;
                s.blocks += 1;
                s.sum_r += r;
                s.sum_z += zz;
                s.sum_r2 += r * r;
                s.sum_z2 += zz * zz;
                s.sum_rz += r * zz;
                *z = 0;
            }
            last_reset = u;
        }
    }
    for (i, (s, tr)) in stats.into_iter().zip(&cfg.trackers).enumerate() {
        let init = if *tr == Tracker::Transverse { 1 } else { 0 };
        let s = TrackerStats { finals: vec![value[i]], increments: (value[i] - init) as i128, layers: cfg.t, ..s };
        rep.trackers.insert(tr.to_string(), s);
    }
    rep
}

/// Probe schedule for [`sample_local_laws`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalLawConfig {
    pub n: usize,
    /// Total probes over all replicas.
    pub probes: u64,
    pub seed: u64,
    /// Layers simulated before the first probe.
    pub burn_in: u64,
    /// Layers between a resolved probe and the next one.
    pub spacing: u64,
    #[serde(default = "default_replicas")]
    pub replicas: u32,
}

impl LocalLawConfig {
    /// Spacing of `⌈1/p₀⌉` layers, one expected renewal interval.
    pub fn new(n: usize, probes: u64, seed: u64) -> Self {
        let p0 = crate::combinatorics::to_f64(&crate::theory::reset_probability(n.max(1)).expect("n >= 1"));
        Self { n, probes, seed, burn_in: 100, spacing: (1.0 / p0).ceil() as u64, replicas: 1 }
    }
}

/// Samples `V` (string vertices on a level) and `E` (string across edges in
/// the following layer). A probe is read off once every sling carrying its
/// tallies has either joined the string or closed into a loop, which happens
/// at the latest at the next reset.
pub fn sample_local_laws(cfg: &LocalLawConfig) -> Result<StatsReport, SimError> {
    sample_local_laws_with(cfg, ExecMode::Parallel)
}

pub fn sample_local_laws_with(cfg: &LocalLawConfig, mode: ExecMode) -> Result<StatsReport, SimError> {
    if cfg.n.is_multiple_of(2) {
        return Err(SimError::EvenN { what: "local laws", n: cfg.n });
    }
    if cfg.probes == 0 || cfg.replicas == 0 {
        return Err(SimError::InvalidConfig("probes and replicas must be positive".into()));
    }
    let ids: Vec<u32> = (0..cfg.replicas).collect();
    let reports = map_replicas(&ids, mode, |r| {
        let share = cfg.probes / cfg.replicas as u64 + ((r as u64) < cfg.probes % cfg.replicas as u64) as u64;
        local_law_replica(cfg, r, share)
    });
    merge_all(reports)
}

fn local_law_replica(cfg: &LocalLawConfig, replica: u32, probes: u64) -> StatsReport {
    let n = cfg.n;
    let mut rng = replica_rng(cfg.seed, replica);
    let mut f = init_frontier_with(n, &mut rng, Detail::NONE);
    let mut layer = PerfectMatching::identity(n);
    let mut pool = Vec::with_capacity(2 * n);
    let mut advance = |f: &mut Frontier, steps: u64| {
        for _ in 0..steps {
            sample_uniform_into(&mut layer, &mut pool, &mut rng);
            f.step(&layer);
        }
    };
    let mut rep = StatsReport { n, t: 0, seed: cfg.seed, replicas: BTreeSet::from([replica]), ..Default::default() };
    advance(&mut f, cfg.burn_in);
    for _ in 0..probes {
        f.start_probe();
        while f.probe_pending() {
            advance(&mut f, 1);
        }
        let (v, e) = f.take_probe().expect("odd n has a string");
        *rep.v_hist.entry(v as u64).or_default() += 1;
        *rep.e_hist.entry(e as u64).or_default() += 1;
        advance(&mut f, cfg.spacing);
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matching::{enumerate_all, enumerate_initial, sample_uniform};
    use proptest::prelude::*;

    fn pm(n: usize, pairs: &[(usize, usize)]) -> PartialMatching {
        PartialMatching::from_pairs(n, pairs).unwrap()
    }

    fn layer(n: usize, pairs: &[(usize, usize)]) -> PerfectMatching {
        PerfectMatching::from_pairs(n, pairs).unwrap()
    }

    #[test]
    fn initial_frontiers() {
        let mut rng = replica_rng(1, 0);
        let f = init_frontier(1, &mut rng);
        assert_eq!((f.sling_count(), f.string_row()), (0, Some(0)));
        let f = init_frontier(2, &mut rng);
        assert_eq!((f.sling_count(), f.string_row()), (1, None));
        assert_eq!(f.pairing().pairs(), vec![(0, 1)]);
        let f = init_frontier(3, &mut rng);
        assert_eq!(f.sling_count(), 1);
        assert!(f.string_row().is_some());
        assert_eq!(enumerate_initial(3).unwrap().len(), 3);
    }

    #[test]
    fn identity_layer_only_extends() {
        for n in 2..=6 {
            let mut rng = replica_rng(n as u64, 0);
            let mut f = init_frontier(n, &mut rng);
            let before = f.pairing();
            let ev = f.step(&PerfectMatching::identity(n));
            assert!(ev.loops.is_empty());
            assert_eq!(ev.absorbed, 0);
            assert!(!ev.is_reset);
            assert_eq!(f.pairing(), before);
        }
        let mut f = Frontier::new(&pm(1, &[]), Detail::full());
        let ev = f.step(&PerfectMatching::identity(1));
        assert!(ev.is_reset);
        assert_eq!(ev.string_growth, 1);
    }

    #[test]
    fn all_bend_layer_at_n2_closes_one_bb_loop() {
        let mut f = Frontier::new(&pm(2, &[(0, 1)]), Detail::full());
        let ev = f.step(&layer(2, &[(0, 1), (2, 3)]));
        assert!(ev.is_reset);
        assert_eq!(ev.loops.len(), 1);
        let l = &ev.loops[0];
        assert_eq!((l.closing_layer, l.leftmost_level, l.start_row, l.size), (1, 0, 0, 2));
        assert_eq!(l.word.as_ref().map(ToString::to_string).as_deref(), Some("BB"));
        assert_eq!(l.weak, Some(WeakShape::new(vec![1])));
        assert_eq!(f.sling_count(), 1);
    }

    #[test]
    fn n2_single_step_enumeration() {
        // From the reset state exactly one of the three layers closes a loop.
        let mut loops = 0;
        for l in enumerate_all(2).unwrap() {
            let mut f = Frontier::new(&pm(2, &[(0, 1)]), Detail::full());
            let ev = f.step(&l);
            loops += ev.loops.len();
            assert_eq!(ev.is_reset, !ev.loops.is_empty());
        }
        assert_eq!(loops, 1);
    }

    #[test]
    fn string_absorbs_slings() {
        // String at row 0, sling (1,2); the layer bends 0-1 on the left,
        // sends 2 across to row 0 and bends rows 1-2 on the right.
        let mut f = Frontier::new(&pm(3, &[(1, 2)]), Detail::full());
        let ev = f.step(&layer(3, &[(0, 1), (2, 3), (4, 5)]));
        assert_eq!(ev.absorbed, 1);
        assert!(ev.is_reset);
        assert_eq!((ev.string_growth, ev.string_across, ev.string_bends), (3, 1, 2));
        assert_eq!(f.string_row(), Some(0));
        assert_eq!(f.string_size(), Some(4));
    }

    #[test]
    fn tracker_parsing() {
        for s in ["loops", "transverse", "across", "bends", "resets", "shape:BB", "weak:1,2,1"] {
            assert_eq!(s.parse::<Tracker>().unwrap().to_string(), s);
        }
        assert!("shape:BX".parse::<Tracker>().is_err());
        assert!("weak:1,0,1".parse::<Tracker>().is_err());
        assert!("nothing".parse::<Tracker>().is_err());
        let json = serde_json::to_string(&Tracker::Shape("ABAB".parse().unwrap())).unwrap();
        assert_eq!(json, "\"shape:ABAB\"");
    }

    #[test]
    fn config_validation() {
        let ok = RunConfig::new(3, 10, 0, vec![Tracker::Loops, Tracker::Transverse]);
        assert!(ok.validate().is_ok());
        let c = RunConfig::new(4, 10, 0, vec![Tracker::Transverse]);
        assert!(matches!(c.validate(), Err(SimError::EvenN { .. })));
        let mut c = RunConfig::new(2, 10, 0, vec![Tracker::Shape(StrongShape::zigzag(3))]);
        c.shape_cap = 4;
        assert!(c.validate().is_err());
        let c = RunConfig::new(2, 10, 0, vec![Tracker::Shape("ABABBB".parse().unwrap())]);
        assert!(c.validate().is_err());
        let c = RunConfig::new(2, 0, 0, vec![]);
        assert!(c.validate().is_err());
        let c = RunConfig::new(2, 10, 0, vec![Tracker::Loops, Tracker::Loops]);
        assert!(c.validate().is_err());
        let json = r#"{"n":2,"t":5,"seed":3,"trackers":["loops","shape:BB"]}"#;
        let c: RunConfig = serde_json::from_str(json).unwrap();
        assert_eq!((c.shape_cap, c.replicas), (DEFAULT_SHAPE_CAP, 1));
    }

    #[test]
    fn runs_are_deterministic_and_mode_independent() {
        let c =
            RunConfig::new(3, 2000, 11, vec![Tracker::Loops, Tracker::Transverse, Tracker::Resets]).with_replicas(4);
        let a = run_with(&c, ExecMode::Sequential).unwrap();
        let b = run_with(&c, ExecMode::Parallel).unwrap();
        assert_eq!(a, b);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&run(&c).unwrap()).unwrap());
        assert_eq!(a.replicas.len(), 4);
        assert_eq!(a.tracker(&Tracker::Loops).unwrap().finals.len(), 4);
    }

    #[test]
    fn split_runs_merge_to_the_whole() {
        let whole = RunConfig::new(2, 500, 5, vec![Tracker::Loops]).with_replicas(3);
        let mut first = whole.clone().with_replicas(1);
        let mut rest = whole.clone().with_replicas(2);
        rest.first_replica = 1;
        first.first_replica = 0;
        let mut m = run(&first).unwrap();
        m.merge(&run(&rest).unwrap()).unwrap();
        assert_eq!(m, run(&whole).unwrap());
        assert!(m.clone().merge(&run(&first).unwrap()).is_err());
    }

    #[test]
    fn loop_totals_reconcile() {
        let c = RunConfig::new(
            4,
            20_000,
            2,
            vec![Tracker::Loops, Tracker::Shape("BB".parse().unwrap()), Tracker::Weak(WeakShape::new(vec![1]))],
        );
        let r = run(&c).unwrap();
        assert_eq!(r.loops as i128, r.tracker(&Tracker::Loops).unwrap().increments);
        let bb = r.tracker(&Tracker::Shape("BB".parse().unwrap())).unwrap().increments;
        let weak = r.tracker(&Tracker::Weak(WeakShape::new(vec![1]))).unwrap().increments;
        assert_eq!(bb, weak);
        assert_eq!(r.loop_span_violations, 0);
        let intervals: u64 = r.reset_intervals.iter().map(|(k, v)| k * v).sum();
        assert!(intervals <= 20_000);
    }

    #[test]
    fn words_are_valid_shapes() {
        let mut rng = replica_rng(9, 0);
        for n in 2..=6 {
            let mut f = init_frontier(n, &mut rng);
            for _ in 0..2000 {
                let ev = f.step(&sample_uniform(n, &mut rng));
                for l in ev.loops {
                    assert_eq!(l.word.is_some(), l.size <= DEFAULT_SHAPE_CAP as u64);
                    let Some(w) = l.word else { continue };
                    assert!(validate_strong(&w, n), "n={n} {w}");
                    assert_eq!(Some(crate::shapes::weak_of_strong(&w).unwrap()), l.weak);
                    assert_eq!(w.len() as u64, l.size);
                }
            }
        }
    }

    #[test]
    fn caps_drop_detail() {
        let mut c = RunConfig::new(2, 20_000, 4, vec![Tracker::Shape("BB".parse().unwrap()), Tracker::Loops]);
        c.shape_cap = 2;
        let r = run(&c).unwrap();
        let bb = r.tracker(&Tracker::Shape("BB".parse().unwrap())).unwrap().increments as u64;
        assert!(r.shape_overflow > 0);
        assert_eq!(bb + r.shape_overflow, r.loops);
    }

    #[test]
    fn local_laws_for_n1_are_trivial() {
        let r = sample_local_laws(&LocalLawConfig::new(1, 50, 3)).unwrap();
        assert_eq!(r.v_hist, BTreeMap::from([(1, 50)]));
        assert_eq!(r.e_hist, BTreeMap::from([(1, 50)]));
        assert!(sample_local_laws(&LocalLawConfig::new(2, 5, 3)).is_err());
    }

    #[test]
    fn local_law_values_are_in_range() {
        let r = sample_local_laws(&LocalLawConfig::new(5, 300, 8)).unwrap();
        assert_eq!(r.v_hist.values().sum::<u64>(), 300);
        assert!(r.v_hist.keys().all(|v| v % 2 == 1 && *v <= 5));
        assert!(r.e_hist.keys().all(|e| e % 2 == 1 && *e <= 5));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn merge_is_associative_and_commutative(seed in 0u64..1000, t in 1u64..200) {
            let base = RunConfig::new(3, t, seed, vec![Tracker::Loops, Tracker::Transverse]);
            let part = |i: u32| {
                let mut c = base.clone();
                c.first_replica = i;
                run(&c).unwrap()
            };
            let (a, b, c) = (part(0), part(1), part(2));
            let mut ab = a.clone();
            ab.merge(&b).unwrap();
            let mut ab_c = ab.clone();
            ab_c.merge(&c).unwrap();
            let mut bc = b.clone();
            bc.merge(&c).unwrap();
            let mut a_bc = a.clone();
            a_bc.merge(&bc).unwrap();
            prop_assert_eq!(&ab_c, &a_bc);
            let mut ba = b.clone();
            ba.merge(&a).unwrap();
            prop_assert_eq!(ab, ba);
        }

        #[test]
        fn resets_renew_the_frontier(n in 1usize..7, seed in 0u64..500) {
            let mut rng = replica_rng(seed, 0);
            let mut f = init_frontier(n, &mut rng);
            for _ in 0..200 {
                let ev = f.step(&sample_uniform(n, &mut rng));
                if ev.is_reset {
                    prop_assert_eq!(f.sling_count(), n / 2);
                }
                prop_assert!(ev.absorbed as usize <= n / 2);
            }
        }
    }
}
