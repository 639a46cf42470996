//! Adaptive sparse-vector engine for linear queries.
//!
//! The engine answers up to `k` adaptively chosen linear queries
//! `q(D) = (1/n) Σ_i q(row_i)` with `q(row) ∈ [−1, 1]`. Queries whose
//! magnitude is below the threshold `T = 3α/4` are answered with 0; queries
//! whose noisy magnitude clears a noisy threshold are "flagged" and answered
//! with fresh Laplace noise. After `c` flags every further answer is 0; the
//! engine never halts early.
//!
//! Construction: `c` rounds of AboveThreshold (threshold noise
//! `Lap(2Δ/ε₀)`, per-query noise `Lap(4Δ/ε₀)`, threshold redrawn after each
//! flag) for the test half, and Laplace answers `Lap(Δ/ε₁)` for the answer
//! half. Each half gets `(ε/2, δ/2)`; the per-round budgets `ε₀`, `ε₁` are
//! the larger of the basic split `ε/(2c)` and the exact advanced-composition
//! solution over `c` rounds with slack `δ/2`. `Δ = 2/n` is the sensitivity of
//! any `[−1, 1]`-valued linear query.

use log::warn;
use serde::Serialize;

use crate::database::Dataset;
use crate::error::{Error, Result};
use crate::numeric::{clamp_unit, compensated_sum};
use crate::rng::{laplace, DetRng};

/// Leading constant of the sample-size gate
/// `n ≥ C·√(c·ln(1/δ))·ln(k/β)/(αε)`, calibrated by Monte Carlo
/// (see the crate README).
pub const SV_SAMPLE_CONSTANT: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SvConfig {
    /// Maximum number of flagged (above-threshold) queries.
    pub c: usize,
    /// Total number of queries.
    pub k: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl SvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.c == 0 || self.c > self.k {
            return Err(Error::param(format!("need 1 <= c <= k, got c={} k={}", self.c, self.k)));
        }
        for (name, v) in [("epsilon", self.epsilon), ("alpha", self.alpha), ("beta", self.beta)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::param(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        Ok(())
    }

    /// Rows needed by the sample-size gate, with [`SV_SAMPLE_CONSTANT`].
    pub fn required_rows(&self) -> f64 {
        SV_SAMPLE_CONSTANT * (self.c as f64 * (1.0 / self.delta).ln()).sqrt() * (self.k as f64 / self.beta).ln()
            / (self.alpha * self.epsilon)
    }

    pub fn threshold(&self) -> f64 {
        0.75 * self.alpha
    }
}

/// Per-round ε₀ such that `rounds` ε₀-DP steps compose to `(total, slack)`-DP:
/// the larger of `total/rounds` and the root of
/// `√(2·rounds·ln(1/slack))·x + rounds·x·(eˣ − 1) = total`.
pub fn per_round_epsilon(total: f64, slack: f64, rounds: usize) -> f64 {
    let r = rounds as f64;
    let basic = total / r;
    if rounds == 1 || !(slack > 0.0 && slack < 1.0) {
        return basic;
    }
    let lead = (2.0 * r * (1.0 / slack).ln()).sqrt();
    let composed = |x: f64| lead * x + r * x * x.exp_m1();
    let (mut lo, mut hi) = (0.0, total);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if composed(mid) > total {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    basic.max(lo)
}

/// Noise scales derived from a config and the database size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SvNoise {
    pub sensitivity: f64,
    pub round_epsilon_test: f64,
    pub round_epsilon_answer: f64,
    pub threshold_scale: f64,
    pub test_scale: f64,
    pub answer_scale: f64,
}

impl SvNoise {
    pub fn calibrate(config: &SvConfig, n: usize) -> Result<Self> {
        config.validate()?;
        if n == 0 {
            return Err(Error::param("database must have at least one row"));
        }
        let sensitivity = 2.0 / n as f64;
        let half_eps = config.epsilon / 2.0;
        let half_delta = config.delta / 2.0;
        let eps_test = per_round_epsilon(half_eps, half_delta, config.c);
        let eps_answer = per_round_epsilon(half_eps, half_delta, config.c);
        Ok(SvNoise {
            sensitivity,
            round_epsilon_test: eps_test,
            round_epsilon_answer: eps_answer,
            threshold_scale: 2.0 * sensitivity / eps_test,
            test_scale: 4.0 * sensitivity / eps_test,
            answer_scale: sensitivity / eps_answer,
        })
    }
}

/// A linear query: an average over rows of a `[−1, 1]`-valued row function.
pub trait LinearQuery {
    fn row_value(&self, data: &dyn Dataset, row: usize) -> f64;

    /// `q(D)`; override when a closed form in the marginals exists.
    fn evaluate(&self, data: &dyn Dataset) -> f64 {
        let n = data.rows();
        compensated_sum((0..n).map(|i| self.row_value(data, i))) / n as f64
    }
}

/// `q(x) = scale·(x_column − offset)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginalQuery {
    pub column: usize,
    pub offset: f64,
    pub scale: f64,
}

impl LinearQuery for MarginalQuery {
    fn row_value(&self, data: &dyn Dataset, row: usize) -> f64 {
        self.scale * (f64::from(data.sign(row, self.column)) - self.offset)
    }

    fn evaluate(&self, data: &dyn Dataset) -> f64 {
        self.scale * (data.marginals().values()[self.column] - self.offset)
    }
}

/// The same value for every row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantQuery(pub f64);

impl LinearQuery for ConstantQuery {
    fn row_value(&self, _: &dyn Dataset, _: usize) -> f64 {
        self.0
    }

    fn evaluate(&self, _: &dyn Dataset) -> f64 {
        self.0
    }
}

/// Row function given as a closure.
pub struct FnQuery<F>(pub F);

impl<F: Fn(&dyn Dataset, usize) -> f64> LinearQuery for FnQuery<F> {
    fn row_value(&self, data: &dyn Dataset, row: usize) -> f64 {
        (self.0)(data, row)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SvEntry {
    pub index: usize,
    pub flagged: bool,
    pub answer: f64,
}

/// Outcome of the sample-size check performed at init.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampleGate {
    pub rows: usize,
    pub required_rows: f64,
}

impl SampleGate {
    pub fn satisfied(&self) -> bool {
        self.rows as f64 >= self.required_rows
    }
}

/// Single-owner engine state; queries must be answered in order.
pub struct SparseVector<'a> {
    data: &'a dyn Dataset,
    config: SvConfig,
    noise: SvNoise,
    rng: DetRng,
    noisy_threshold: f64,
    flags_remaining: usize,
    transcript: Vec<SvEntry>,
    gate: SampleGate,
}

pub fn sv_init<'a>(config: SvConfig, data: &'a dyn Dataset, mut rng: DetRng) -> Result<SparseVector<'a>> {
    let noise = SvNoise::calibrate(&config, data.rows())?;
    let gate = SampleGate { rows: data.rows(), required_rows: config.required_rows() };
    if !gate.satisfied() {
        warn!(
            "sparse vector: n = {} is below the accuracy gate of {:.1} rows; answers may miss the alpha target",
            gate.rows, gate.required_rows
        );
    }
    let noisy_threshold = config.threshold() + laplace(&mut rng, noise.threshold_scale);
    Ok(SparseVector {
        data,
        config,
        noise,
        rng,
        noisy_threshold,
        flags_remaining: config.c,
        transcript: Vec::with_capacity(config.k),
        gate,
    })
}

pub fn sv_answer(state: &mut SparseVector<'_>, query: &dyn LinearQuery) -> Result<f64> {
    state.answer(query)
}

impl<'a> SparseVector<'a> {
    pub fn answer(&mut self, query: &dyn LinearQuery) -> Result<f64> {
        let index = self.transcript.len();
        if index >= self.config.k {
            return Err(Error::Sequence(format!("query budget k = {} exhausted", self.config.k)));
        }
        let mut entry = SvEntry { index, flagged: false, answer: 0.0 };
        if self.flags_remaining > 0 {
            let value = query.evaluate(self.data);
            let test = value.abs() + laplace(&mut self.rng, self.noise.test_scale);
            if test > self.noisy_threshold {
                entry.flagged = true;
                entry.answer = clamp_unit(value + laplace(&mut self.rng, self.noise.answer_scale));
                self.flags_remaining -= 1;
                if self.flags_remaining > 0 {
                    self.noisy_threshold = self.config.threshold() + laplace(&mut self.rng, self.noise.threshold_scale);
                }
            }
        }
        self.transcript.push(entry);
        Ok(entry.answer)
    }

    pub fn transcript(&self) -> &[SvEntry] {
        &self.transcript
    }

    pub fn flags_used(&self) -> usize {
        self.config.c - self.flags_remaining
    }

    pub fn noisy_threshold(&self) -> f64 {
        self.noisy_threshold
    }

    pub fn noise(&self) -> &SvNoise {
        &self.noise
    }

    pub fn config(&self) -> &SvConfig {
        &self.config
    }

    pub fn gate(&self) -> SampleGate {
        self.gate
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::database::Database;
    use crate::rng::rng_from_seed;

    fn config() -> SvConfig {
        SvConfig { c: 3, k: 50, epsilon: 1.0, delta: 1e-6, alpha: 0.2, beta: 0.05 }
    }

    #[test]
    fn config_validation() {
        assert!(config().validate().is_ok());
        assert!(SvConfig { c: 0, ..config() }.validate().is_err());
        assert!(SvConfig { c: 51, ..config() }.validate().is_err());
        assert!(SvConfig { delta: 0.0, ..config() }.validate().is_err());
        assert!(SvConfig { alpha: -1.0, ..config() }.validate().is_err());
        let db = Database::filled(10, 1, 1).unwrap();
        assert!(sv_init(SvConfig { beta: 0.0, ..config() }, &db, rng_from_seed(0)).is_err());
    }

    #[test]
    fn init_is_deterministic_and_consumes_no_queries() {
        let db = Database::filled(100, 1, 1).unwrap();
        let a = sv_init(config(), &db, rng_from_seed(9)).unwrap();
        let b = sv_init(config(), &db, rng_from_seed(9)).unwrap();
        assert_eq!(a.noisy_threshold(), b.noisy_threshold());
        assert!(a.transcript().is_empty());
        assert_eq!(a.flags_used(), 0);
    }

    #[test]
    fn sample_gate_accepts_and_warns() {
        let cfg = config();
        let need = cfg.required_rows();
        let expected = SV_SAMPLE_CONSTANT * (3.0 * (1e6f64).ln()).sqrt() * (50.0 / 0.05f64).ln() / 0.2;
        assert!((need - expected).abs() < 1e-9);
        let small = Database::filled(need.floor() as usize, 1, 1).unwrap();
        let big = Database::filled(need.ceil() as usize, 1, 1).unwrap();
        assert!(!sv_init(cfg, &small, rng_from_seed(0)).unwrap().gate().satisfied());
        assert!(sv_init(cfg, &big, rng_from_seed(0)).unwrap().gate().satisfied());
    }

    #[test]
    fn per_round_epsilon_composes_back() {
        for &(total, slack, rounds) in &[(0.5, 5e-7, 5usize), (0.25, 2.5e-7, 200), (2.0, 1e-3, 30), (0.1, 0.01, 1)] {
            let x = per_round_epsilon(total, slack, rounds);
            let r = rounds as f64;
            let advanced = (2.0 * r * (1.0 / slack).ln()).sqrt() * x + r * x * x.exp_m1();
            assert!(x >= total / r);
            assert!(r * x <= total * (1.0 + 1e-12) || advanced <= total * (1.0 + 1e-12));
        }
        // many rounds: advanced composition beats the basic split
        assert!(per_round_epsilon(0.25, 2.5e-7, 200) > 0.25 / 200.0);
    }

    #[test]
    fn noise_scales_follow_sensitivity() {
        let cfg = config();
        let noise = SvNoise::calibrate(&cfg, 1000).unwrap();
        assert_eq!(noise.sensitivity, 0.002);
        assert!((noise.test_scale - 2.0 * noise.threshold_scale).abs() < 1e-18);
        let eps0 = per_round_epsilon(0.5, 5e-7, 3);
        assert!((noise.threshold_scale - 0.004 / eps0).abs() < 1e-15);
        assert!((noise.answer_scale - 0.002 / eps0).abs() < 1e-15);
    }

    #[test]
    fn zero_stream_answers_zero_and_budget_is_enforced() {
        let cfg = SvConfig { c: 2, k: 40, epsilon: 1.0, delta: 1e-6, alpha: 0.2, beta: 0.05 };
        let db = Database::filled(200_000, 1, 1).unwrap();
        let mut sv = sv_init(cfg, &db, rng_from_seed(1)).unwrap();
        for _ in 0..40 {
            assert_eq!(sv_answer(&mut sv, &ConstantQuery(0.0)).unwrap(), 0.0);
        }
        assert_eq!(sv.flags_used(), 0);
        assert!(matches!(sv.answer(&ConstantQuery(0.0)), Err(Error::Sequence(_))));
    }

    #[test]
    fn after_c_flags_everything_is_zero() {
        let cfg = SvConfig { c: 2, k: 10, epsilon: 1.0, delta: 1e-6, alpha: 0.2, beta: 0.05 };
        let db = Database::filled(200_000, 1, 1).unwrap();
        let mut sv = sv_init(cfg, &db, rng_from_seed(2)).unwrap();
        let answers: Vec<f64> = (0..10).map(|_| sv.answer(&ConstantQuery(0.9)).unwrap()).collect();
        assert!((answers[0] - 0.9).abs() < 0.2 && (answers[1] - 0.9).abs() < 0.2);
        assert!(answers[2..].iter().all(|&a| a == 0.0));
        assert_eq!(sv.flags_used(), 2);
        assert_eq!(sv.transcript().iter().filter(|e| e.flagged).count(), 2);
    }

    #[test]
    fn generic_and_closed_form_evaluation_agree() {
        let db = Database::from_fn(37, 3, |i, j| (i * 7 + j) % 5 < 2).unwrap();
        let q = MarginalQuery { column: 1, offset: 0.3, scale: 0.5 };
        let generic = FnQuery(|data: &dyn Dataset, row| q.row_value(data, row));
        assert!((generic.evaluate(&db) - q.evaluate(&db)).abs() < 1e-14);
    }

    #[test]
    fn single_large_query_flagged_and_accurate() {
        // c = 1, |q(D)| = 1; n at the gate
        let cfg = SvConfig { c: 1, k: 1, epsilon: 1.0, delta: 1e-6, alpha: 0.2, beta: 0.05 };
        let n = cfg.required_rows().ceil() as usize;
        let db = Database::filled(n, 1, 1).unwrap();
        let q = MarginalQuery { column: 0, offset: 0.0, scale: 1.0 };
        let trials = 10_000;
        let ok = (0..trials)
            .filter(|&t| {
                let mut sv = sv_init(cfg, &db, rng_from_seed(t)).unwrap();
                let a = sv.answer(&q).unwrap();
                sv.transcript()[0].flagged && (a - 1.0).abs() <= cfg.alpha
            })
            .count();
        assert!(ok as f64 / trials as f64 >= 1.0 - cfg.beta, "{ok}");
    }

    #[test]
    fn answers_stay_in_range() {
        let cfg = SvConfig { c: 5, k: 100, epsilon: 0.1, delta: 1e-3, alpha: 0.5, beta: 0.1 };
        let db = Database::from_fn(3, 2, |i, j| (i + j) % 2 == 0).unwrap();
        let mut sv = sv_init(cfg, &db, rng_from_seed(3)).unwrap();
        for t in 0..100 {
            let a = sv.answer(&ConstantQuery(if t % 2 == 0 { 1.0 } else { -1.0 })).unwrap();
            assert!((-1.0..=1.0).contains(&a));
        }
    }
}
