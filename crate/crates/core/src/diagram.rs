//! Stored Brauer diagrams and their connected components.
//!
//! Levels are numbered `0..=t`, rows `0..n` top to bottom. Layer `u`
//! (`1..=t`) matches level `u-1` to level `u`; in a modified diagram the
//! initial partial matching on level 0 is treated as layer 0.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matching::{sample_initial_partial, sample_uniform, PartialMatching, PerfectMatching};

/// Diagrams longer than this must be requested with `allow_large`.
pub const MAX_STORED_LAYERS: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DiagramError {
    #[error("diagram size must be at least 1")]
    EmptySize,
    #[error("layer {layer} has size {found}, expected {expected}")]
    SizeMismatch { layer: usize, expected: usize, found: usize },
    #[error("{0} layers exceed the stored-diagram limit of {MAX_STORED_LAYERS}; use the streaming simulator")]
    TooLarge(usize),
}

impl DiagramError {
    pub fn is_capacity(&self) -> bool {
        matches!(self, DiagramError::TooLarge(_))
    }
}

/// A vertex `(level, row)`.
pub type Vertex = (usize, usize);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BrauerDiagram {
    n: usize,
    layers: Vec<PerfectMatching>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    initial: Option<PartialMatching>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ComponentKind {
    ClosedLoop,
    Sling,
    TransverseString,
}

/// Where an edge sits inside its layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EdgeKind {
    Across,
    /// Both endpoints on the layer's left level.
    LeftBend,
    /// Both endpoints on the layer's right level.
    RightBend,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub layer: usize,
    pub kind: EdgeKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Component {
    pub kind: ComponentKind,
    /// Vertices in exploration order. A loop's walk does not repeat its start.
    pub walk: Vec<Vertex>,
    /// `edges[i]` joins `walk[i]` and `walk[i+1]` (cyclically for loops).
    pub edges: Vec<Edge>,
    pub leftmost_level: usize,
}

impl Component {
    pub fn size(&self) -> usize {
        self.walk.len()
    }

    pub fn rightmost_level(&self) -> usize {
        self.walk.iter().map(|v| v.0).max().unwrap_or(0)
    }
}

/// Result of looking for the transverse string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransverseLookup {
    None,
    Unique(Component),
    Multiple(usize),
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Side {
    Left,
    Right,
}

impl BrauerDiagram {
    /// Assembles a diagram from `layers`; a modified diagram draws its
    /// initial matching from `rng`.
    pub fn build<R: Rng + ?Sized>(
        n: usize,
        layers: Vec<PerfectMatching>,
        modified: bool,
        rng: &mut R,
    ) -> Result<Self, DiagramError> {
        Self::build_with(n, layers, modified, rng, false)
    }

    pub fn build_with<R: Rng + ?Sized>(
        n: usize,
        layers: Vec<PerfectMatching>,
        modified: bool,
        rng: &mut R,
        allow_large: bool,
    ) -> Result<Self, DiagramError> {
        let initial = if modified && n >= 1 { Some(sample_initial_partial(n, rng)) } else { None };
        Self::from_parts_with(n, layers, initial, allow_large)
    }

    pub fn from_parts(
        n: usize,
        layers: Vec<PerfectMatching>,
        initial: Option<PartialMatching>,
    ) -> Result<Self, DiagramError> {
        Self::from_parts_with(n, layers, initial, false)
    }

    fn from_parts_with(
        n: usize,
        layers: Vec<PerfectMatching>,
        initial: Option<PartialMatching>,
        allow_large: bool,
    ) -> Result<Self, DiagramError> {
        if n == 0 {
            return Err(DiagramError::EmptySize);
        }
        if layers.len() > MAX_STORED_LAYERS && !allow_large {
            return Err(DiagramError::TooLarge(layers.len()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.size() != n {
                return Err(DiagramError::SizeMismatch { layer: i + 1, expected: n, found: l.size() });
            }
        }
        if let Some(init) = &initial {
            if init.size() != n {
                return Err(DiagramError::SizeMismatch { layer: 0, expected: n, found: init.size() });
            }
        }
        Ok(Self { n, layers, initial })
    }

    /// A diagram with `t` uniform layers. The initial matching, when present,
    /// is drawn before the layers so that the streaming simulator consumes
    /// the same random stream in the same order.
    pub fn random<R: Rng + ?Sized>(n: usize, t: usize, modified: bool, rng: &mut R) -> Result<Self, DiagramError> {
        if n == 0 {
            return Err(DiagramError::EmptySize);
        }
        if t > MAX_STORED_LAYERS {
            return Err(DiagramError::TooLarge(t));
        }
        let initial = modified.then(|| sample_initial_partial(n, rng));
        let layers = (0..t).map(|_| sample_uniform(n, rng)).collect();
        Self::from_parts(n, layers, initial)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn t(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[PerfectMatching] {
        &self.layers
    }

    pub fn initial(&self) -> Option<&PartialMatching> {
        self.initial.as_ref()
    }

    pub fn is_modified(&self) -> bool {
        self.initial.is_some()
    }

    /// The diagram made of the first `t` layers.
    pub fn prefix(&self, t: usize) -> Self {
        Self { n: self.n, layers: self.layers[..t].to_vec(), initial: self.initial.clone() }
    }

    /// Number of edges at a vertex.
    pub fn degree(&self, v: Vertex) -> usize {
        self.step(v, Side::Left).is_some() as usize + self.step(v, Side::Right).is_some() as usize
    }

    /// Leaves `v` through its edge on `side`; returns the neighbour, the side
    /// of the neighbour the edge arrives at, and the edge itself.
    fn step(&self, (level, row): Vertex, side: Side) -> Option<(Vertex, Side, Edge)> {
        let n = self.n;
        match side {
            Side::Left if level == 0 => {
                let p = self.initial.as_ref()?.partner(row)?;
                Some(((0, p), Side::Left, Edge { layer: 0, kind: EdgeKind::RightBend }))
            }
            Side::Left => {
                let layer = &self.layers[level - 1];
                let q = layer.partner(n + row);
                Some(if q < n {
                    ((level - 1, q), Side::Right, Edge { layer: level, kind: EdgeKind::Across })
                } else {
                    ((level, q - n), Side::Left, Edge { layer: level, kind: EdgeKind::RightBend })
                })
            }
            Side::Right if level == self.t() => None,
            Side::Right => {
                let layer = &self.layers[level];
                let q = layer.partner(row);
                Some(if q < n {
                    ((level, q), Side::Right, Edge { layer: level + 1, kind: EdgeKind::LeftBend })
                } else {
                    ((level + 1, q - n), Side::Left, Edge { layer: level + 1, kind: EdgeKind::Across })
                })
            }
        }
    }

    // Walks from `start`, leaving through `side`, until the path ends or
    // returns to `start`. Returns the walk, its edges and whether it closed.
    fn walk_from(&self, start: Vertex, side: Side, seen: &mut [bool]) -> (Vec<Vertex>, Vec<Edge>, bool) {
        let mut walk = vec![start];
        let mut edges = Vec::new();
        seen[self.index(start)] = true;
        let (mut v, mut out) = (start, side);
        while let Some((w, arrived, e)) = self.step(v, out) {
            edges.push(e);
            if w == start {
                return (walk, edges, true);
            }
            walk.push(w);
            seen[self.index(w)] = true;
            v = w;
            out = if arrived == Side::Left { Side::Right } else { Side::Left };
        }
        (walk, edges, false)
    }

    fn index(&self, (level, row): Vertex) -> usize {
        level * self.n + row
    }

    /// All connected components, ordered by their canonical start vertex.
    pub fn components(&self) -> Vec<Component> {
        let n = self.n;
        let t = self.t();
        let mut seen = vec![false; n * (t + 1)];
        let mut out = Vec::new();
        // Path components first: every path has an endpoint with a free side.
        for level in [0, t] {
            for row in 0..n {
                let v = (level, row);
                if seen[self.index(v)] {
                    continue;
                }
                let left = self.step(v, Side::Left).is_some();
                let right = self.step(v, Side::Right).is_some();
                if left && right {
                    continue;
                }
                let side = if left { Side::Left } else { Side::Right };
                let (walk, edges, closed) = self.walk_from(v, side, &mut seen);
                debug_assert!(!closed);
                out.push(self.classify_path(walk, edges, !left));
            }
        }
        // Everything left over lies on a cycle; the first unseen vertex in
        // (level, row) order is the topmost vertex of the leftmost level.
        for level in 0..=t {
            for row in 0..n {
                let v = (level, row);
                if seen[self.index(v)] {
                    continue;
                }
                let (walk, edges, closed) = self.walk_from(v, Side::Right, &mut seen);
                debug_assert!(closed);
                out.push(Component { kind: ComponentKind::ClosedLoop, walk, edges, leftmost_level: level });
            }
        }
        out.sort_by_key(|c| c.walk[0]);
        out
    }

    // `first_free_left` says whether the first walk vertex has no left edge.
    fn classify_path(&self, mut walk: Vec<Vertex>, mut edges: Vec<Edge>, first_free_left: bool) -> Component {
        let last = *walk.last().expect("non-empty walk");
        let kind = if walk.len() == 1 || first_free_left != self.step(last, Side::Left).is_none() {
            ComponentKind::TransverseString
        } else {
            ComponentKind::Sling
        };
        // Strings start at their left end, slings at their upper end.
        let reverse = match kind {
            ComponentKind::TransverseString => walk.len() > 1 && !first_free_left,
            _ => walk[0].1 > last.1,
        };
        if reverse {
            walk.reverse();
            edges.reverse();
        }
        let leftmost_level = walk.iter().map(|v| v.0).min().unwrap_or(0);
        Component { kind, walk, edges, leftmost_level }
    }

    /// The transverse strings, distinguishing none, one and several.
    pub fn transverse_string(&self) -> TransverseLookup {
        let mut strings: Vec<Component> =
            self.components().into_iter().filter(|c| c.kind == ComponentKind::TransverseString).collect();
        match strings.len() {
            0 => TransverseLookup::None,
            1 => TransverseLookup::Unique(strings.pop().expect("one string")),
            k => TransverseLookup::Multiple(k),
        }
    }
}

/// `|c ∩ X_level|`.
pub fn level_counts(c: &Component, level: usize) -> usize {
    c.walk.iter().filter(|v| v.0 == level).count()
}

/// Edge counts of `c` in `layer`: `(across, left bends, right bends)`.
///
/// Left bends sit on level `layer - 1`, right bends on level `layer`.
pub fn edge_profile(c: &Component, layer: usize) -> (usize, usize, usize) {
    c.edges.iter().filter(|e| e.layer == layer).fold((0, 0, 0), |(a, l, r), e| match e.kind {
        EdgeKind::Across => (a + 1, l, r),
        EdgeKind::LeftBend => (a, l + 1, r),
        EdgeKind::RightBend => (a, l, r + 1),
    })
}

/// Component listing used by the CLI and fixtures.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComponentReport {
    pub n: usize,
    pub t: usize,
    pub modified: bool,
    pub components: Vec<Component>,
}

impl From<&BrauerDiagram> for ComponentReport {
    fn from(d: &BrauerDiagram) -> Self {
        Self { n: d.n, t: d.t(), modified: d.is_modified(), components: d.components() }
    }
}
