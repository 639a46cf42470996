//! Empirical privacy-loss checks on tiny neighbouring databases.

use std::collections::BTreeMap;

use marginalpriv::mechanisms::laplace_release;
use marginalpriv::rng::derive_rng;
use marginalpriv::sparse_vector::{sv_init, MarginalQuery, SvConfig};
use marginalpriv::{group_privacy, Database, PrivacyParams};

/// Counts of each outcome label over `trials` runs.
fn histogram(trials: u64, mut outcome: impl FnMut(u64) -> u64) -> BTreeMap<u64, u64> {
    let mut h = BTreeMap::new();
    for t in 0..trials {
        *h.entry(outcome(t)).or_insert(0) += 1;
    }
    h
}

/// Largest `P_a(bin) / P_b(bin)` over bins with at least `min_count` hits on both sides.
fn max_ratio(a: &BTreeMap<u64, u64>, b: &BTreeMap<u64, u64>, min_count: u64) -> f64 {
    a.iter()
        .filter_map(|(k, &ca)| b.get(k).map(|&cb| (ca, cb)))
        .filter(|&(ca, cb)| ca >= min_count && cb >= min_count)
        .map(|(ca, cb)| ca as f64 / cb as f64)
        .fold(0.0, f64::max)
}

#[test]
fn sparse_vector_flag_pattern_respects_epsilon() {
    // Two rows; the neighbour replaces the second row.
    let d = Database::from_rows(&[vec![1, 1, 1], vec![-1, 1, -1]]).unwrap();
    let d_prime = Database::from_rows(&[vec![1, 1, 1], vec![1, 1, 1]]).unwrap();
    let config = SvConfig { c: 2, k: 3, epsilon: 1.0, delta: 1e-6, alpha: 1.0, beta: 0.1 };
    let trials = 200_000;
    let pattern = |db: &Database, label: &str, t: u64| {
        let mut sv = sv_init(config, db, derive_rng(11, label, t)).unwrap();
        (0..3).fold(0u64, |bits, j| {
            let a = sv.answer(&MarginalQuery { column: j, offset: 0.0, scale: 1.0 }).unwrap();
            bits | (u64::from(a != 0.0) << j)
        })
    };
    let h = histogram(trials, |t| pattern(&d, "sv-a", t));
    let h_prime = histogram(trials, |t| pattern(&d_prime, "sv-b", t));
    let worst = max_ratio(&h, &h_prime, 2000).max(max_ratio(&h_prime, &h, 2000));
    // 2000 hits per bin keeps the sampling error of a ratio near 5%
    assert!(worst <= config.epsilon.exp() * 1.15, "flag-pattern ratio {worst}");
    assert!(worst > 1.05, "neighbours should be distinguishable at all, ratio {worst}");
}

#[test]
fn laplace_needs_group_privacy_for_two_changed_rows() {
    let eps = 1.0;
    let d = Database::filled(4, 1, 1).unwrap();
    let d_two = Database::from_rows(&[vec![1], vec![1], vec![-1], vec![-1]]).unwrap();
    let trials = 1_000_000;
    let bin = |db: &Database, label: &str, t: u64| {
        let y = laplace_release(db, eps, &mut derive_rng(12, label, t)).unwrap().values()[0];
        ((y + 1.0) / 0.125).floor() as u64
    };
    let h = histogram(trials, |t| bin(&d, "lap-a", t));
    let h_two = histogram(trials, |t| bin(&d_two, "lap-b", t));
    let worst = max_ratio(&h, &h_two, 1000).max(max_ratio(&h_two, &h, 1000));
    let group = group_privacy(PrivacyParams::pure(eps).unwrap(), 2).unwrap();
    assert_eq!(group.epsilon_k, 2.0 * eps);
    assert_eq!(group.delta_k, 0.0);
    assert!(worst <= group.epsilon_k.exp() * 1.1, "ratio {worst} above e^(2 eps)");
    assert!(worst > eps.exp() * 1.2, "ratio {worst} should exceed the single-row bound");
}
