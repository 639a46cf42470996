//! Lower-bound arguments run as experiments.
//!
//! The tracing attack builds a fingerprinting codebook `D*` for `n_k = ⌊n/k⌋`
//! users, embeds `k` stacked copies of it in an `n`-row database padded with a
//! fixed row, hands the result to a release oracle and traces the answers.
//! Changing one user of `D*` changes `k` rows of the embedding, so a private
//! oracle pays the group-privacy price `(kε, δ_k)` for each user; the report
//! puts the measured accusation rates next to the bound `e^{ε_k}δ + δ_k`.
//!
//! The packing experiment builds the database of `n` copies of a uniform
//! hypercube point `x` and correlates the release with `x`, against a second
//! database built from an independent `x′`.
//!
//! Both harnesses run trials in parallel; trial `t` draws from the stream
//! `derive_seed(master, label, t)`, so results do not depend on scheduling.

use log::warn;
use rayon::prelude::*;
use serde::Serialize;

use crate::database::{Database, Dataset};
use crate::error::{ensure_dims, Error, Result};
use crate::fingerprinting::{fpc_generate, fpc_min_length};
use crate::marginals::{l1_error, linf_error, MarginalVector};
use crate::mechanisms::ReleaseOracle;
use crate::numeric::{binomial_se, compensated_sum};
use crate::params::group_privacy;
use crate::rng::{derive_seed, rng_from_seed};

pub const TRACING_TRIAL_LABEL: &str = "tracing-trial";
pub const PACKING_TRIAL_LABEL: &str = "packing-trial";

/// Monte Carlo standard errors an excluded user's accusation rate may exceed
/// `δ` by before the report flags a violation.
pub const VIOLATION_STANDARD_ERRORS: f64 = 5.0;

fn validate_signs(row: &[i8]) -> Result<()> {
    match row.iter().find(|s| **s != 1 && **s != -1) {
        Some(s) => Err(Error::param(format!("padding entries must be -1 or +1, got {s}"))),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KCopyConfig {
    pub k: usize,
    pub n: usize,
    /// Row used to fill the `n − k·n_k` leftover rows; all +1 when `None`.
    pub padding: Option<Vec<i8>>,
}

impl KCopyConfig {
    pub fn new(n: usize, k: usize) -> Result<Self> {
        let config = KCopyConfig { k, n, padding: None };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k > self.n {
            return Err(Error::param(format!("need 1 <= k <= n, got k = {} and n = {}", self.k, self.n)));
        }
        if let Some(p) = &self.padding {
            validate_signs(p)?;
        }
        Ok(())
    }

    pub fn n_k(&self) -> usize {
        self.n / self.k
    }

    /// `k ≤ n/200`, the regime in which the distortion is at most `d/100`.
    pub fn in_proof_regime(&self) -> bool {
        self.k * 200 <= self.n
    }

    pub fn padding_row(&self, d: usize) -> Result<Vec<i8>> {
        match &self.padding {
            Some(p) => {
                ensure_dims(d, p.len())?;
                Ok(p.clone())
            }
            None => Ok(vec![1; d]),
        }
    }
}

/// `⌊ln(1/(12nδ)) − 1⌋`; may be ≤ 0 when `δ` is large.
pub fn default_group_size(n: usize, delta: f64) -> i64 {
    ((1.0 / (12.0 * n as f64 * delta)).ln() - 1.0).floor() as i64
}

/// The `n`-row k-copy embedding of a base dataset, without materialising it.
pub struct KCopyView<'a> {
    base: &'a dyn Dataset,
    k: usize,
    n: usize,
    padding: Vec<i8>,
    marginals: MarginalVector,
}

impl<'a> KCopyView<'a> {
    pub fn new(base: &'a dyn Dataset, config: &KCopyConfig) -> Result<Self> {
        config.validate()?;
        ensure_dims(config.n_k(), base.rows())?;
        let d = base.dims();
        let padding = config.padding_row(d)?;
        let (n, k, n_k) = (config.n, config.k, config.n_k());
        let leftover = (n - k * n_k) as f64;
        // Marginals from exact integer counts: the base marginals are
        // (2c − n_k)/n_k with c recovered by rounding.
        let values = base
            .marginals()
            .values()
            .iter()
            .zip(&padding)
            .map(|(m, &pad)| {
                let c = ((m + 1.0) * n_k as f64 / 2.0).round();
                let plus = k as f64 * c + if pad > 0 { leftover } else { 0.0 };
                (2.0 * plus - n as f64) / n as f64
            })
            .collect();
        Ok(KCopyView { base, k, n, padding, marginals: MarginalVector::new(values)? })
    }

    pub fn copies(&self) -> usize {
        self.k
    }
}

impl Dataset for KCopyView<'_> {
    fn rows(&self) -> usize {
        self.n
    }

    fn dims(&self) -> usize {
        self.base.dims()
    }

    fn sign(&self, row: usize, col: usize) -> i8 {
        let n_k = self.base.rows();
        if row < self.k * n_k {
            self.base.sign(row % n_k, col)
        } else {
            self.padding[col]
        }
    }

    fn marginals(&self) -> &MarginalVector {
        &self.marginals
    }
}

/// Materialises the k-copy embedding of `d_star` as an `n`-row database.
pub fn k_copy_embed(d_star: &Database, config: &KCopyConfig) -> Result<Database> {
    let view = KCopyView::new(d_star, config)?;
    Database::from_fn(view.rows(), view.dims(), |i, j| view.sign(i, j) > 0)
}

/// `n` identical rows `x`.
pub struct RepeatedRowView {
    row: Vec<i8>,
    n: usize,
    marginals: MarginalVector,
}

impl RepeatedRowView {
    pub fn new(row: Vec<i8>, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::param("need at least one row"));
        }
        validate_signs(&row)?;
        let marginals = MarginalVector::new(row.iter().map(|&s| f64::from(s)).collect())?;
        Ok(RepeatedRowView { row, n, marginals })
    }
}

impl Dataset for RepeatedRowView {
    fn rows(&self) -> usize {
        self.n
    }

    fn dims(&self) -> usize {
        self.row.len()
    }

    fn sign(&self, _row: usize, col: usize) -> i8 {
        self.row[col]
    }

    fn marginals(&self) -> &MarginalVector {
        &self.marginals
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TracingAttackConfig {
    /// Rows of the database handed to the oracle.
    pub n: usize,
    /// Soundness of the fingerprinting code.
    pub delta: f64,
    pub k: usize,
    /// Code length; `fpc_min_length(n_k, δ)` when `None`.
    pub d: Option<usize>,
    pub trials: u64,
    /// User whose row is replaced by the padding row before release.
    pub excluded_user: Option<usize>,
    pub padding: Option<Vec<i8>>,
}

impl TracingAttackConfig {
    pub fn new(n: usize, delta: f64, k: usize, trials: u64) -> Self {
        TracingAttackConfig { n, delta, k, d: None, trials, excluded_user: Some(0), padding: None }
    }

    fn embedding(&self) -> KCopyConfig {
        KCopyConfig { k: self.k, n: self.n, padding: self.padding.clone() }
    }

    /// `(n_k, d)` after validation.
    pub fn resolve(&self) -> Result<(usize, usize)> {
        let embedding = self.embedding();
        embedding.validate()?;
        let n_k = embedding.n_k();
        let min = fpc_min_length(n_k, self.delta)?;
        let d = self.d.unwrap_or(min);
        if d < min {
            return Err(Error::param(format!("code length {d} is below the minimum {min} for {n_k} users")));
        }
        if let Some(u) = self.excluded_user {
            if u >= n_k {
                return Err(Error::param(format!("excluded user {u} out of range for {n_k} users")));
            }
        }
        Ok((n_k, d))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TracingTrial {
    pub trial: u64,
    pub seed: u64,
    pub accused: Vec<usize>,
    pub excluded_accused: Option<bool>,
    pub l1_error: f64,
    pub linf_error: f64,
    /// `‖answers − D̄*‖₁ ≤ d/8`.
    pub accurate: bool,
}

/// Constants of the reduction, printed next to the measured rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TracingBounds {
    /// `1/(12 n_k)`: some user is accused at least this often when the
    /// oracle is accurate.
    pub per_user_accusation_floor: f64,
    /// `9/100`: trace-nonempty floor.
    pub trace_nonempty_floor: f64,
    /// Markov bound on `P[‖M(D) − D̄‖₁ > d/9]` as stated.
    pub markov_stated: f64,
    /// The same bound computed directly: `(d/10)/(d/9)`.
    pub markov_direct: f64,
    /// `e^{ε_k}δ + δ_k` when the oracle reports its privacy.
    pub group_privacy_bound: Option<f64>,
    pub epsilon_k: Option<f64>,
    pub delta_k: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackReport {
    pub oracle: String,
    pub config: TracingAttackConfig,
    pub master_seed: u64,
    pub n_k: usize,
    pub d: usize,
    pub in_proof_regime: bool,
    pub trace_nonempty_rate: f64,
    pub accuracy_rate: f64,
    pub per_user_accusation_rates: Vec<f64>,
    pub excluded_accusation_rate: Option<f64>,
    pub excluded_rate_standard_error: Option<f64>,
    pub bounds: TracingBounds,
    /// Excluded-user rate above `δ + 5·SE`.
    pub violation: bool,
    #[serde(skip)]
    pub trials: Vec<TracingTrial>,
}

fn tracing_bounds(oracle: &dyn ReleaseOracle, config: &TracingAttackConfig, n_k: usize) -> Result<TracingBounds> {
    let group = match oracle.privacy() {
        Some(p) => Some(group_privacy(p, u32::try_from(config.k).map_err(|_| Error::param("k too large"))?)?),
        None => None,
    };
    Ok(TracingBounds {
        per_user_accusation_floor: 1.0 / (12.0 * n_k as f64),
        trace_nonempty_floor: 9.0 / 100.0,
        markov_stated: 9.0 / 10.0,
        markov_direct: (1.0 / 10.0) / (1.0 / 9.0),
        group_privacy_bound: group.map(|g| g.epsilon_k.exp() * config.delta + g.delta_k),
        epsilon_k: group.map(|g| g.epsilon_k),
        delta_k: group.map(|g| g.delta_k),
    })
}

fn run_tracing_trial(
    oracle: &dyn ReleaseOracle,
    config: &TracingAttackConfig,
    n_k: usize,
    d: usize,
    master_seed: u64,
    trial: u64,
) -> Result<TracingTrial> {
    let seed = derive_seed(master_seed, TRACING_TRIAL_LABEL, trial);
    let mut rng = rng_from_seed(seed);
    let embedding = config.embedding();
    let code = fpc_generate(n_k, config.delta, d, &mut rng)?;
    let d_star = match config.excluded_user {
        Some(u) => code.without_user(u, &embedding.padding_row(d)?)?,
        None => code.codebook().clone(),
    };
    let view = KCopyView::new(&d_star, &embedding)?;
    let answers = oracle.release(&view, &mut rng)?;
    ensure_dims(d, answers.len())?;
    let trace = code.trace(answers.values())?;
    let truth = d_star.marginals().values();
    let l1 = l1_error(answers.values(), truth)?;
    Ok(TracingTrial {
        trial,
        seed,
        excluded_accused: config.excluded_user.map(|u| trace.accuses(u)),
        l1_error: l1,
        linf_error: linf_error(answers.values(), truth)?,
        accurate: l1 <= d as f64 / 8.0,
        accused: trace.accused,
    })
}

pub fn tracing_attack(oracle: &dyn ReleaseOracle, config: &TracingAttackConfig, master_seed: u64) -> Result<AttackReport> {
    let (n_k, d) = config.resolve()?;
    let embedding = config.embedding();
    if !embedding.in_proof_regime() {
        warn!("k = {} exceeds n/200 = {}; the distortion bound d/100 no longer applies", config.k, config.n / 200);
    }
    let trials: Vec<TracingTrial> = (0..config.trials)
        .into_par_iter()
        .map(|t| run_tracing_trial(oracle, config, n_k, d, master_seed, t))
        .collect::<Result<_>>()?;

    let count = trials.len().max(1) as f64;
    let rate = |hits: usize| if trials.is_empty() { 0.0 } else { hits as f64 / count };
    let mut per_user = vec![0usize; n_k];
    for t in &trials {
        for &u in &t.accused {
            per_user[u] += 1;
        }
    }
    let excluded_rate = config
        .excluded_user
        .map(|_| rate(trials.iter().filter(|t| t.excluded_accused == Some(true)).count()));
    let se = excluded_rate.map(|_| binomial_se(config.delta, config.trials.max(1)));
    let violation = match (excluded_rate, se) {
        (Some(r), Some(se)) if !trials.is_empty() => r > config.delta + VIOLATION_STANDARD_ERRORS * se,
        _ => false,
    };
    Ok(AttackReport {
        oracle: oracle.label(),
        config: config.clone(),
        master_seed,
        n_k,
        d,
        in_proof_regime: embedding.in_proof_regime(),
        trace_nonempty_rate: rate(trials.iter().filter(|t| !t.accused.is_empty()).count()),
        accuracy_rate: rate(trials.iter().filter(|t| t.accurate).count()),
        per_user_accusation_rates: per_user.into_iter().map(rate).collect(),
        excluded_accusation_rate: excluded_rate,
        excluded_rate_standard_error: se,
        bounds: tracing_bounds(oracle, config, n_k)?,
        violation,
        trials,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PackingExperimentConfig {
    pub d: usize,
    /// Rows of each database.
    pub n: usize,
    pub trials: u64,
    /// Deviation parameter; `√d/20` when `None`.
    pub lambda: Option<f64>,
}

impl PackingExperimentConfig {
    pub fn lambda(&self) -> f64 {
        self.lambda.unwrap_or((self.d as f64).sqrt() / 20.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PackingReport {
    pub oracle: String,
    pub config: PackingExperimentConfig,
    pub master_seed: u64,
    /// `⟨M(D), x⟩` per trial.
    pub z: Vec<f64>,
    /// `⟨M(D′), x⟩` per trial.
    pub z_prime: Vec<f64>,
    /// `‖M(D′)‖₂` per trial.
    pub z_prime_norm: Vec<f64>,
    /// Empirical `P[Z ≤ d/20]`.
    pub z_at_most_cut: f64,
    /// Empirical `P[Z′ > d/20]`.
    pub z_prime_above_cut: f64,
    /// Empirical `P[Z′ > λ‖M(D′)‖₂]`.
    pub z_prime_above_lambda: f64,
    /// `e^{−λ²/2}`.
    pub hoeffding_bound: f64,
    /// `e^{−d/800}`.
    pub cut_bound: f64,
}

fn dot(a: &[f64], x: &[i8]) -> f64 {
    compensated_sum(a.iter().zip(x).map(|(v, &s)| v * f64::from(s)))
}

pub fn packing_experiment(
    oracle: &dyn ReleaseOracle,
    config: &PackingExperimentConfig,
    master_seed: u64,
) -> Result<PackingReport> {
    if config.d == 0 || config.n == 0 {
        return Err(Error::param("packing experiment needs d >= 1 and n >= 1"));
    }
    let lambda = config.lambda();
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::param(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    let d = config.d;
    let samples: Vec<(f64, f64, f64)> = (0..config.trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_from_seed(derive_seed(master_seed, PACKING_TRIAL_LABEL, t));
            let mut point = || -> Vec<i8> { (0..d).map(|_| if rand::Rng::random::<bool>(&mut rng) { 1 } else { -1 }).collect() };
            let x = point();
            let x_prime = point();
            let db = RepeatedRowView::new(x.clone(), config.n)?;
            let db_prime = RepeatedRowView::new(x_prime, config.n)?;
            let y = oracle.release(&db, &mut rng)?;
            let y_prime = oracle.release(&db_prime, &mut rng)?;
            ensure_dims(d, y.len())?;
            ensure_dims(d, y_prime.len())?;
            let norm = compensated_sum(y_prime.values().iter().map(|v| v * v)).sqrt();
            Ok((dot(y.values(), &x), dot(y_prime.values(), &x), norm))
        })
        .collect::<Result<_>>()?;

    let cut = d as f64 / 20.0;
    let rate = |hits: usize| if samples.is_empty() { 0.0 } else { hits as f64 / samples.len() as f64 };
    Ok(PackingReport {
        oracle: oracle.label(),
        config: config.clone(),
        master_seed,
        z_at_most_cut: rate(samples.iter().filter(|s| s.0 <= cut).count()),
        z_prime_above_cut: rate(samples.iter().filter(|s| s.1 > cut).count()),
        z_prime_above_lambda: rate(samples.iter().filter(|s| s.1 > lambda * s.2).count()),
        hoeffding_bound: (-lambda * lambda / 2.0).exp(),
        cut_bound: (-(d as f64) / 800.0).exp(),
        z: samples.iter().map(|s| s.0).collect(),
        z_prime: samples.iter().map(|s| s.1).collect(),
        z_prime_norm: samples.iter().map(|s| s.2).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanisms::Mechanism;
    use crate::rng::rng_from_seed;

    #[test]
    fn default_group_size_examples() {
        assert_eq!(default_group_size(1000, 2f64.powi(-20)), 3);
        assert!(default_group_size(1000, 0.01) <= 0);
    }

    #[test]
    fn embed_k_one_is_identity() {
        let d = Database::uniform(6, 3, &mut rng_from_seed(1)).unwrap();
        let e = k_copy_embed(&d, &KCopyConfig::new(6, 1).unwrap()).unwrap();
        assert_eq!(e, d);
    }

    #[test]
    fn embed_layout_n10_k3() {
        let cfg = KCopyConfig::new(10, 3).unwrap();
        assert_eq!(cfg.n_k(), 3);
        let d = Database::from_rows(&[vec![1, -1], vec![-1, -1], vec![-1, 1]]).unwrap();
        let e = k_copy_embed(&d, &cfg).unwrap();
        assert_eq!(e.rows(), 10);
        for i in 0..9 {
            assert_eq!(e.row_signs(i), d.row_signs(i % 3));
        }
        assert_eq!(e.row_signs(9), vec![1, 1]);
    }

    #[test]
    fn embed_validation() {
        let d = Database::filled(3, 2, 1).unwrap();
        assert!(k_copy_embed(&d, &KCopyConfig::new(10, 2).unwrap()).is_err());
        assert!(KCopyConfig::new(10, 0).is_err());
        assert!(KCopyConfig::new(10, 11).is_err());
        let bad = KCopyConfig { k: 3, n: 10, padding: Some(vec![1]) };
        assert!(k_copy_embed(&d, &bad).is_err());
        let bad = KCopyConfig { k: 3, n: 10, padding: Some(vec![1, 0]) };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn view_marginals_match_materialised() {
        let mut rng = rng_from_seed(2);
        for (n, k) in [(10, 3), (100, 7), (1000, 5), (13, 13)] {
            let cfg = KCopyConfig { k, n, padding: Some(vec![1, -1, 1, -1, 1]) };
            let d = Database::uniform(cfg.n_k(), 5, &mut rng).unwrap();
            let view = KCopyView::new(&d, &cfg).unwrap();
            let e = k_copy_embed(&d, &cfg).unwrap();
            assert_eq!(view.marginals(), e.marginals());
        }
    }

    #[test]
    fn repeated_row_view() {
        let v = RepeatedRowView::new(vec![1, -1, -1], 7).unwrap();
        assert_eq!(v.rows(), 7);
        assert_eq!(v.marginals().values(), &[1.0, -1.0, -1.0]);
        assert!(RepeatedRowView::new(vec![1, 2], 3).is_err());
        assert!(RepeatedRowView::new(vec![1], 0).is_err());
    }

    #[test]
    fn attack_validation() {
        let mut cfg = TracingAttackConfig::new(100, 0.05, 10, 1);
        cfg.d = Some(5);
        assert!(tracing_attack(&Mechanism::Exact, &cfg, 0).is_err());
        let mut cfg = TracingAttackConfig::new(100, 0.05, 10, 1);
        cfg.excluded_user = Some(10);
        assert!(tracing_attack(&Mechanism::Exact, &cfg, 0).is_err());
    }

    #[test]
    fn exact_oracle_is_traced_and_constant_is_not() {
        let cfg = TracingAttackConfig::new(200, 0.05, 20, 200);
        let exact = tracing_attack(&Mechanism::Exact, &cfg, 3).unwrap();
        assert_eq!(exact.n_k, 10);
        assert!(exact.trace_nonempty_rate >= 0.99);
        assert_eq!(exact.accuracy_rate, 1.0);
        assert!(exact.trials.iter().all(|t| t.accused.iter().all(|&u| u < exact.n_k)));

        let constant = tracing_attack(&Mechanism::Constant { value: 0.0 }, &cfg, 3).unwrap();
        assert_eq!(constant.trace_nonempty_rate, 0.0);
        assert_eq!(constant.accuracy_rate, 0.0);
        assert!(!constant.violation);
    }

    #[test]
    fn attack_is_deterministic_and_empty_when_no_trials() {
        let cfg = TracingAttackConfig::new(100, 0.05, 10, 20);
        let a = tracing_attack(&Mechanism::Laplace { epsilon: 1.0 }, &cfg, 9).unwrap();
        let b = tracing_attack(&Mechanism::Laplace { epsilon: 1.0 }, &cfg, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.trials, b.trials);
        assert!(a.bounds.group_privacy_bound.is_some());
        let empty = tracing_attack(&Mechanism::Exact, &TracingAttackConfig::new(100, 0.05, 10, 0), 9).unwrap();
        assert!(empty.trials.is_empty());
        assert_eq!(empty.trace_nonempty_rate, 0.0);
    }

    #[test]
    fn reported_constants() {
        let cfg = TracingAttackConfig::new(100, 0.05, 10, 0);
        let r = tracing_attack(&Mechanism::Laplace { epsilon: 1.0 }, &cfg, 0).unwrap();
        assert_eq!(r.bounds.per_user_accusation_floor, 1.0 / 120.0);
        assert!((r.bounds.markov_direct - 0.9).abs() < 1e-15);
        // Laplace is pure: δ_k = 0 and the bound is e^{10}·δ
        assert!((r.bounds.group_privacy_bound.unwrap() - 10f64.exp() * 0.05).abs() < 1e-9);
    }

    #[test]
    fn packing_exact_oracle() {
        let cfg = PackingExperimentConfig { d: 64, n: 5, trials: 50, lambda: None };
        let r = packing_experiment(&Mechanism::Exact, &cfg, 1).unwrap();
        assert!(r.z.iter().all(|&z| z == 64.0));
        assert_eq!(r.z_at_most_cut, 0.0);
        assert!((r.cut_bound - (-64.0f64 / 800.0).exp()).abs() < 1e-15);
        assert!((r.hoeffding_bound - r.cut_bound).abs() < 1e-15);
    }
}
