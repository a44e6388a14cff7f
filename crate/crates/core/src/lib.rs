//! Random Brauer diagrams: sampling, component classification, loop shapes,
//! exact constants and distributions, a streaming sling-process simulator and
//! brute-force oracles for cross-checking all of them.
//!
//! All exact quantities are [`combinatorics::BigRat`] values; floats appear
//! only in estimators and at output boundaries.

pub mod acceptance;
pub mod combinatorics;
pub mod diagram;
pub mod matching;
pub mod oracle;
pub mod shapes;
pub mod simulate;
pub mod stats;
pub mod theory;

pub use combinatorics::BigRat;
pub use diagram::{BrauerDiagram, Component, ComponentKind};
pub use matching::{PartialMatching, PerfectMatching};
pub use shapes::{StrongShape, WeakShape};
