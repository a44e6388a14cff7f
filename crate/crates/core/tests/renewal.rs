//! Resets are renewals: intervals are geometric and the frontier after a
//! reset forgets what came before.

use std::collections::BTreeMap;

use brauer_core::combinatorics::to_f64;
use brauer_core::matching::{enumerate_initial, sample_uniform};
use brauer_core::simulate::{init_frontier_with, replica_rng, Detail};
use brauer_core::stats::{chi_square_p_value, geometric_chi_square};
use brauer_core::theory::reset_probability;
use brauer_core::PartialMatching;

const LAYERS: usize = 200_000;

// Pairing before and after every reset layer, and the reset intervals.
fn resets(n: usize, seed: u64) -> (Vec<(PartialMatching, PartialMatching)>, BTreeMap<u64, u64>) {
    let mut rng = replica_rng(seed, 0);
    let mut f = init_frontier_with(n, &mut rng, Detail::NONE);
    let mut pairs = Vec::new();
    let mut intervals = BTreeMap::new();
    let mut last = 0u64;
    for t in 1..=LAYERS as u64 {
        let before = f.pairing();
        let layer = sample_uniform(n, &mut rng);
        if f.step(&layer).is_reset {
            pairs.push((before, f.pairing()));
            *intervals.entry(t - last).or_default() += 1;
            last = t;
        }
    }
    (pairs, intervals)
}

#[test]
fn intervals_are_geometric() {
    for n in 1..=6 {
        let (_, intervals) = resets(n, 11 + n as u64);
        let p0 = to_f64(&reset_probability(n).unwrap());
        let pv = geometric_chi_square(&intervals, p0);
        assert!(pv > 1e-3, "n={n} p={pv}");
    }
}

#[test]
fn post_reset_frontier_is_uniform() {
    for n in 2..=5 {
        let states = enumerate_initial(n).unwrap();
        let (pairs, _) = resets(n, 40 + n as u64);
        let mut counts: BTreeMap<&PartialMatching, u64> = BTreeMap::new();
        for (_, after) in &pairs {
            *counts.entry(after).or_default() += 1;
        }
        let observed: Vec<u64> = states.iter().map(|s| counts.get(s).copied().unwrap_or(0)).collect();
        assert_eq!(observed.iter().sum::<u64>(), pairs.len() as u64);
        if states.len() > 1 {
            let e = pairs.len() as f64 / states.len() as f64;
            let pv = chi_square_p_value(&observed, &vec![e; states.len()], states.len() - 1);
            assert!(pv > 1e-3, "n={n} p={pv}");
        }
    }
}

#[test]
fn post_reset_frontier_ignores_the_past() {
    // Contingency table of (pairing before, pairing after) at resets.
    for n in [3, 4, 5] {
        let states = enumerate_initial(n).unwrap();
        let idx = |s: &PartialMatching| states.iter().position(|x| x == s).unwrap();
        let k = states.len();
        let (pairs, _) = resets(n, 70 + n as u64);
        let mut table = vec![vec![0u64; k]; k];
        for (b, a) in &pairs {
            table[idx(b)][idx(a)] += 1;
        }
        let total = pairs.len() as f64;
        let rows: Vec<f64> = table.iter().map(|r| r.iter().sum::<u64>() as f64).collect();
        let cols: Vec<f64> = (0..k).map(|j| table.iter().map(|r| r[j]).sum::<u64>() as f64).collect();
        let mut observed = Vec::new();
        let mut expected = Vec::new();
        for i in 0..k {
            for j in 0..k {
                observed.push(table[i][j]);
                expected.push(rows[i] * cols[j] / total);
            }
        }
        let pv = chi_square_p_value(&observed, &expected, (k - 1) * (k - 1));
        assert!(pv > 1e-3, "n={n} p={pv}");
    }
}
