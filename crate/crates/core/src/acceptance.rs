//! The acceptance suite: twelve criteria, each a list of checks.
//!
//! Every tolerance is a constant below. The suite is deterministic given its
//! seed; [`run_suite`] reports criteria in order as they finish.

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use num_traits::One;
use rand::Rng;
use serde::Serialize;

use crate::combinatorics::{rat, to_f64, BigRat};
use crate::diagram::BrauerDiagram;
use crate::oracle::{self, Statistic};
use crate::shapes::{enumerate_strong, enumerate_weak, gamma, shape_of_loop, weak_of_strong, StrongShape, WeakShape};
use crate::simulate::{
    self, init_frontier_with, replica_rng, Detail, LocalLawConfig, RunConfig, StatsReport, Tracker, TrackerStats,
};
use crate::stats::{geometric_chi_square, tv_distance};
use crate::theory::{self, TwoSlingTable};
use crate::ComponentKind;

pub const SUITE_SEED: u64 = 20261014;

pub const MC_LAYERS: u64 = 1_000_000;
/// Half-width of the LLN acceptance bands, in regenerative standard errors.
pub const SE_MULTIPLIER: f64 = 3.0;
pub const EXACT_LOOP_BUDGET: Duration = Duration::from_secs(60);
pub const CLT_REPLICAS: u32 = 1000;
pub const CLT_LAYERS: u64 = 10_000;
pub const MAX_ABS_SKEWNESS: f64 = 0.05;
pub const MAX_ABS_EXCESS_KURTOSIS: f64 = 0.1;
pub const VARIANCE_REL_TOL: f64 = 0.05;
pub const LOCAL_LAW_PROBES: u64 = 100_000;
pub const MAX_TV: f64 = 0.01;
pub const SERIES_TOL: f64 = 1e-9;
/// Number of zigzag terms in the truncated shape-rate sum for `n = 2`.
pub const SHAPE_PARTIAL_TERMS: usize = 20;
/// Terms summed for the convergent `n = 3` series; the tail beyond is below
/// `SERIES_TOL`.
pub const SHAPE_SERIES_TERMS: usize = 80;
pub const CHI_SQUARE_LEVEL: f64 = 0.01;
pub const GAMMA_MAX_TOTAL: u32 = 6;
pub const GAMMA_MAX_N: usize = 8;
pub const EQUIVALENCE_CASES: u64 = 1000;
pub const EQUIVALENCE_MAX_N: usize = 4;
pub const EQUIVALENCE_MAX_T: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub label: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(label: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self { label: label.into(), passed, detail: detail.into() }
    }

    fn error(label: impl Into<String>, e: impl std::fmt::Display) -> Self {
        Self::new(label, false, format!("error: {e}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionResult {
    pub id: u8,
    pub name: &'static str,
    pub checks: Vec<Check>,
    pub seconds: f64,
}

impl CriterionResult {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// One line: status, id, name, then every check.
    pub fn line(&self) -> String {
        let parts: Vec<String> = self
            .checks
            .iter()
            .map(|c| format!("{}{}: {}", if c.passed { "" } else { "FAILED " }, c.label, c.detail))
            .collect();
        format!(
            "[{}] {:>2} {} ({:.1}s): {}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.seconds,
            parts.join("; ")
        )
    }
}

pub const NAMES: [&str; 12] = [
    "exact loop-count law",
    "loop-rate LLN",
    "loop-count CLT",
    "transverse density",
    "transverse CLT variance",
    "local laws",
    "A/B rates",
    "shape rates",
    "gamma correctness",
    "renewal structure",
    "two-sling table",
    "streaming/stored equivalence",
];

/// The single-replica runs of `MC_LAYERS` layers shared by several
/// criteria, each simulated on first use.
#[derive(Debug)]
pub struct Runs {
    seed: u64,
    t: u64,
    cells: [OnceLock<StatsReport>; 3],
}

fn bb() -> StrongShape {
    StrongShape::zigzag(1)
}

impl Runs {
    pub fn new(seed: u64, t: u64) -> Self {
        Self { seed, t, cells: Default::default() }
    }

    pub fn get(&self, n: usize) -> &StatsReport {
        use Tracker::*;
        let (i, trackers) = match n {
            2 => (0, vec![Loops, Shape(bb()), Resets]),
            3 => (1, vec![Loops, Transverse, Across, Bends, Resets]),
            5 => (2, vec![Loops, Transverse, Resets]),
            _ => panic!("shared runs cover n = 2, 3, 5"),
        };
        self.cells[i].get_or_init(|| {
            simulate::run(&RunConfig::new(n, self.t, self.seed, trackers)).expect("shared run configs are valid")
        })
    }
}

fn within_se(label: String, s: Option<&TrackerStats>, target: &BigRat) -> Check {
    let Some(s) = s else {
        return Check::new(label, false, "tracker missing");
    };
    let (est, se, tgt) = (s.estimate(), s.std_error(), to_f64(target));
    let z = (est - tgt) / se;
    Check::new(label, z.abs() <= SE_MULTIPLIER, format!("{est:.6} vs {target} ({tgt:.6}), se {se:.2e}, z {z:+.2}"))
}

fn exact_eq<T: PartialEq + std::fmt::Debug>(label: impl Into<String>, a: &T, b: &T) -> Check {
    let ok = a == b;
    Check::new(label, ok, if ok { "exact".to_string() } else { format!("{a:?} != {b:?}") })
}

fn c1() -> Vec<Check> {
    let start = Instant::now();
    let mut checks = Vec::new();
    for (n, tmax) in [(2, 5), (3, 3)] {
        let pgf = theory::loop_increment_pgf(n).expect("n >= 1");
        let ok = (1..=tmax).all(|t| {
            oracle::exact_by_enumeration(n, t, &Statistic::LoopCount).is_ok_and(|law| law == pgf.power(t).to_pmf())
        });
        checks.push(Check::new(format!("n={n} t=1..{tmax}"), ok, if ok { "exact" } else { "mismatch" }));
    }
    let took = start.elapsed();
    checks.push(Check::new(
        "runtime",
        took < EXACT_LOOP_BUDGET,
        format!("{:.2}s < {}s", took.as_secs_f64(), EXACT_LOOP_BUDGET.as_secs()),
    ));
    checks
}

fn c2(runs: &Runs) -> Vec<Check> {
    [5, 2, 3]
        .into_iter()
        .map(|n| within_se(format!("n={n}"), runs.get(n).tracker(&Tracker::Loops), &theory::loop_rate(n).unwrap()))
        .collect()
}

fn c3(seed: u64) -> Vec<Check> {
    let n = 4;
    let cfg = RunConfig::new(n, CLT_LAYERS, seed, vec![Tracker::Loops]).with_replicas(CLT_REPLICAS);
    let rep = match simulate::run(&cfg) {
        Ok(r) => r,
        Err(e) => return vec![Check::error("run", e)],
    };
    let mu = to_f64(&theory::loop_rate(n).unwrap());
    let sigma = to_f64(&theory::loop_rate_variance(n).unwrap()).sqrt();
    let t = CLT_LAYERS as f64;
    let z: Vec<f64> = rep
        .tracker(&Tracker::Loops)
        .unwrap()
        .finals
        .iter()
        .map(|&c| (c as f64 - mu * t) / (sigma * t.sqrt()))
        .collect();
    let (mean, var, skew, kurt) = float_moments(&z);
    vec![
        Check::new("standardized", true, format!("mean {mean:+.4}, variance {var:.4} over {} replicas", z.len())),
        Check::new("skewness", skew.abs() <= MAX_ABS_SKEWNESS, format!("{skew:+.4}, bound {MAX_ABS_SKEWNESS}")),
        Check::new(
            "excess kurtosis",
            kurt.abs() <= MAX_ABS_EXCESS_KURTOSIS,
            format!("{kurt:+.4}, bound {MAX_ABS_EXCESS_KURTOSIS}"),
        ),
    ]
}

// Population moments: mean, variance, skewness, excess kurtosis.
fn float_moments(x: &[f64]) -> (f64, f64, f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let m = |k: i32| x.iter().map(|v| (v - mean).powi(k)).sum::<f64>() / n;
    let (m2, m3, m4) = (m(2), m(3), m(4));
    (mean, m2, m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
}

fn c4(runs: &Runs) -> Vec<Check> {
    [3, 5]
        .into_iter()
        .map(|n| {
            let (_, per_level) = theory::transverse_density(n).unwrap();
            within_se(format!("n={n}"), runs.get(n).tracker(&Tracker::Transverse), &per_level)
        })
        .collect()
}

fn c5(seed: u64) -> Vec<Check> {
    let n = 3;
    let cfg = RunConfig::new(n, CLT_LAYERS, seed, vec![Tracker::Transverse]).with_replicas(CLT_REPLICAS);
    let rep = match simulate::run(&cfg) {
        Ok(r) => r,
        Err(e) => return vec![Check::error("run", e)],
    };
    let target = theory::transverse_clt_variance(n).unwrap();
    let mu = to_f64(&theory::transverse_density(n).unwrap().1);
    let t = CLT_LAYERS as f64;
    let z: Vec<f64> =
        rep.tracker(&Tracker::Transverse).unwrap().finals.iter().map(|&s| (s as f64 - mu * t) / t.sqrt()).collect();
    let (_, var, _, _) = float_moments(&z);
    let nz = z.len() as f64;
    let var = var * nz / (nz - 1.0);
    let rel = (var - to_f64(&target)) / to_f64(&target);
    vec![Check::new(
        "variance",
        rel.abs() <= VARIANCE_REL_TOL,
        format!("{var:.4} vs {target} ({:.4}), relative {rel:+.4}, bound {VARIANCE_REL_TOL}", to_f64(&target)),
    )]
}

fn c6(seed: u64) -> Vec<Check> {
    let mut checks = Vec::new();
    for n in [3, 5] {
        let cfg = LocalLawConfig::new(n, LOCAL_LAW_PROBES, seed);
        let rep = match simulate::sample_local_laws(&cfg) {
            Ok(r) => r,
            Err(e) => {
                checks.push(Check::error(format!("n={n}"), e));
                continue;
            }
        };
        let v = theory::level_occupancy_dist(n).unwrap();
        let e = theory::layer_crossing_dist(n).unwrap();
        for (name, hist, law) in [("V", &rep.v_hist, &v), ("E", &rep.e_hist, &e)] {
            let tv = tv_distance(hist, law.support());
            let count: u64 = hist.values().sum();
            checks.push(Check::new(format!("n={n} {name}"), tv <= MAX_TV, format!("TV {tv:.4} over {count} probes")));
        }
    }
    match oracle::local_laws(3) {
        Ok(l) => {
            checks.push(exact_eq("oracle V n=3", &l.v, &theory::level_occupancy_dist(3).unwrap()));
            checks.push(exact_eq("oracle E n=3", &l.e, &theory::layer_crossing_dist(3).unwrap()));
        }
        Err(e) => checks.push(Check::error("oracle n=3", e)),
    }
    checks
}

fn c7(runs: &Runs) -> Vec<Check> {
    let (a, b) = theory::across_bend_rates(3).unwrap();
    let mut checks = vec![
        within_se("A n=3".into(), runs.get(3).tracker(&Tracker::Across), &a),
        within_se("B n=3".into(), runs.get(3).tracker(&Tracker::Bends), &b),
    ];
    let ok = (1..=11)
        .step_by(2)
        .all(|n| theory::layer_crossing_dist(n).unwrap().mean() == theory::across_bend_rates(n).unwrap().0);
    checks.push(Check::new("mean E = A-rate, odd n <= 11", ok, if ok { "exact" } else { "mismatch" }));
    checks
}

fn c8(runs: &Runs) -> Vec<Check> {
    let mut checks = vec![within_se("BB n=2".into(), runs.get(2).tracker(&Tracker::Shape(bb())), &rat(1, 9))];
    // For n <= 3 the zigzag is the only strong shape of each size.
    let only_zigzags = [2, 3]
        .into_iter()
        .all(|n| enumerate_strong(n, 16).unwrap().into_iter().all(|w| w == StrongShape::zigzag(w.len() / 2)));
    checks.push(Check::new("only zigzags for n <= 3", only_zigzags, "sizes <= 16"));
    let mu = |n: usize, ell: usize| theory::shape_rate(n, &StrongShape::zigzag(ell)).unwrap().mu;
    let partial: BigRat = (1..=SHAPE_PARTIAL_TERMS).map(|ell| mu(2, ell)).sum();
    let gap = to_f64(&(rat(1, 3) - &partial));
    checks.push(Check::new(
        format!("sum over l <= {SHAPE_PARTIAL_TERMS}, n=2"),
        gap.abs() <= SERIES_TOL,
        format!("1/3 - partial = {gap:.3e}, bound {SERIES_TOL:e}"),
    ));
    let series: BigRat = (1..=SHAPE_SERIES_TERMS).map(|ell| mu(3, ell) * rat(2 * ell as i64, 1)).sum();
    let gap = to_f64(&(rat(2, 3) - &series));
    checks.push(Check::new(
        "sum of 2l mu, n=3",
        gap.abs() <= SERIES_TOL,
        format!("2/3 - series = {gap:.3e} after {SHAPE_SERIES_TERMS} terms"),
    ));
    checks
}

fn c9() -> Vec<Check> {
    let max_len = 2 * GAMMA_MAX_TOTAL as usize;
    let mut bad = Vec::new();
    let mut shapes = 0;
    for n in 2..=GAMMA_MAX_N {
        let words = enumerate_strong(n, max_len).unwrap();
        let mut counts: std::collections::BTreeMap<Vec<u32>, u64> = Default::default();
        for w in &words {
            let a = weak_of_strong(w).unwrap();
            *counts.entry(a.a().to_vec()).or_default() += 1;
        }
        let weak = enumerate_weak(n, GAMMA_MAX_TOTAL);
        if weak.len() != counts.len() {
            bad.push(format!("n={n}: {} weak shapes, {} seen", weak.len(), counts.len()));
        }
        for a in weak {
            shapes += 1;
            let brute = counts.get(a.a()).copied().unwrap_or(0);
            if gamma(&a) != brute.into() {
                bad.push(format!("n={n} {a}: {} vs {brute}", gamma(&a)));
            }
        }
    }
    let ok = bad.is_empty();
    vec![Check::new(
        format!("n <= {GAMMA_MAX_N}, total <= {GAMMA_MAX_TOTAL}"),
        ok,
        if ok { format!("{shapes} weak shapes exact") } else { bad.join(", ") },
    )]
}

fn c10(runs: &Runs) -> Vec<Check> {
    let mut checks = Vec::new();
    for n in [2, 3, 5] {
        let rep = runs.get(n);
        let p0 = theory::reset_probability(n).unwrap();
        checks.push(within_se(format!("p0 n={n}"), rep.tracker(&Tracker::Resets), &p0));
        let pv = geometric_chi_square(&rep.reset_intervals, to_f64(&p0));
        checks.push(Check::new(format!("geometric n={n}"), pv > CHI_SQUARE_LEVEL, format!("p-value {pv:.3}")));
        checks.push(Check::new(
            format!("no spanning loop n={n}"),
            rep.loop_span_violations == 0,
            format!("{} violations over {} loops", rep.loop_span_violations, rep.loops),
        ));
    }
    checks
}

fn c11() -> Vec<Check> {
    let (rows, mirror) = match oracle::two_sling_law(5) {
        Ok(x) => x,
        Err(e) => return vec![Check::error("enumeration", e)],
    };
    let table = theory::two_sling_table(5).unwrap();
    let mut checks: Vec<Check> =
        (0..8).map(|i| exact_eq(format!("row {}", TwoSlingTable::LABELS[i]), &rows[i], &table.rows[i])).collect();
    checks.push(exact_eq("mirror rows", &mirror.to_vec(), &table.rows[1..4].to_vec()));
    let sum: BigRat = rows.iter().zip(TwoSlingTable::MULTIPLICITY).map(|(r, m)| r * rat(m as i64, 1)).sum();
    checks.push(exact_eq("weighted sum", &sum, &BigRat::one()));
    checks
}

type LoopKey = (u64, u64, usize, u64, String, String);

fn stored_loops(d: &BrauerDiagram) -> Option<Vec<LoopKey>> {
    let mut out = Vec::new();
    for c in d.components().into_iter().filter(|c| c.kind == ComponentKind::ClosedLoop) {
        let w = shape_of_loop(&c).ok()?;
        let a = weak_of_strong(&w).ok()?;
        out.push((
            c.rightmost_level() as u64 + 1,
            c.leftmost_level as u64,
            c.walk[0].1,
            c.size() as u64,
            w.to_string(),
            a.to_string(),
        ));
    }
    out.sort();
    Some(out)
}

fn c12(seed: u64) -> Vec<Check> {
    let detail = Detail {
        shape_cap: Some(EQUIVALENCE_MAX_N * (EQUIVALENCE_MAX_T + 1)),
        stretch_cap: Some(EQUIVALENCE_MAX_T + 1),
    };
    let mut rng = replica_rng(seed, 0);
    let mut loops = 0;
    let mut mismatched = Vec::new();
    for case in 0..EQUIVALENCE_CASES {
        let n = rng.random_range(1..=EQUIVALENCE_MAX_N);
        let t = rng.random_range(0..=EQUIVALENCE_MAX_T);
        let d = BrauerDiagram::random(n, t, true, &mut replica_rng(case, 1)).expect("small diagram");
        let mut f = init_frontier_with(n, &mut replica_rng(case, 1), detail);
        let mut streamed = Vec::new();
        for layer in d.layers() {
            for l in f.step(layer).loops {
                let w = l.word.map(|w| w.to_string()).unwrap_or_default();
                let a = l.weak.map(|a: WeakShape| a.to_string()).unwrap_or_default();
                streamed.push((l.closing_layer, l.leftmost_level, l.start_row, l.size, w, a));
            }
        }
        streamed.sort();
        let stored = stored_loops(&d);
        loops += streamed.len();
        if stored.as_ref() != Some(&streamed) {
            mismatched.push(case);
        }
    }
    let ok = mismatched.is_empty();
    vec![Check::new(
        format!("{EQUIVALENCE_CASES} diagrams"),
        ok,
        if ok { format!("{loops} loops identical") } else { format!("cases {mismatched:?} differ") },
    )]
}

/// Runs one criterion. The Monte Carlo criteria 2, 4, 7, 8 and 10 read the
/// shared runs.
pub fn run_criterion(id: u8, seed: u64, runs: &Runs) -> CriterionResult {
    let start = Instant::now();
    let checks = match id {
        1 => c1(),
        2 => c2(runs),
        3 => c3(seed),
        4 => c4(runs),
        5 => c5(seed),
        6 => c6(seed),
        7 => c7(runs),
        8 => c8(runs),
        9 => c9(),
        10 => c10(runs),
        11 => c11(),
        12 => c12(seed),
        _ => vec![Check::new("id", false, format!("no criterion {id}"))],
    };
    let name = NAMES.get(id as usize - 1).copied().unwrap_or("unknown");
    CriterionResult { id, name, checks, seconds: start.elapsed().as_secs_f64() }
}

/// Runs all twelve criteria, calling `report` after each.
pub fn run_suite(seed: u64, mut report: impl FnMut(&CriterionResult)) -> Vec<CriterionResult> {
    let runs = Runs::new(seed, MC_LAYERS);
    let mut out = Vec::with_capacity(12);
    for id in 1..=12 {
        let r = run_criterion(id, seed, &runs);
        report(&r);
        out.push(r);
    }
    out
}
