//! Worst-case-error release under approximate DP: Gaussian noise on every
//! marginal, then a sparse-vector pass that finds and repairs the few
//! coordinates whose noise came out large.
//!
//! Stage 1 computes `ã = clamp(D̄ + z)`, `z_j ~ N(0, σ²)`. Stage 2 asks the
//! sparse-vector engine the queries `q_j(x) = (x_j − ã_j)/2`, whose true
//! values are `(D̄_j − ã_j)/2`, and outputs `a = clamp(ã + 2â)`. Each stage
//! spends `(ε/2, δ/2)`.
//!
//! Defaults, all overridable:
//!
//! | quantity | default |
//! |---|---|
//! | σ | `5√(d·ln(1/δ))/(εn)` |
//! | α | `8σ√(ln ln d)` |
//! | flag budget c | `max(1, ⌈2d/ln⁸d⌉)` |
//! | SV α | `α/2` |
//! | SV β | `max(e^{−ln⁴d}, 2^{−63})` |
//!
//! With these constants `2d/ln⁸d < 1` for every `d` below roughly `10^{11}`,
//! so at realistic sizes `c` sits at its floor of 1; experiments override σ,
//! α and c instead.

use rand::{Rng, SeedableRng};
use serde::Serialize;

use crate::database::Dataset;
use crate::error::{Error, Result};
use crate::marginals::MarginalVector;
use crate::mechanisms::{gaussian_sigma, GaussianCalibration};
use crate::numeric::clamp_unit;
use crate::params::PrivacyParams;
use crate::rng::{gaussian, DetRng};
use crate::sparse_vector::{sv_init, MarginalQuery, SampleGate, SvConfig};

/// Smallest sparse-vector failure probability used, keeping `ln(k/β)` finite.
pub const SV_BETA_FLOOR: f64 = 1.0 / 9_223_372_036_854_775_808.0; // 2^-63

pub fn default_flag_budget(d: usize) -> usize {
    let ln_d = (d as f64).ln();
    let c = (2.0 * d as f64 / ln_d.powi(8)).ceil();
    if c.is_finite() {
        (c as usize).clamp(1, d.max(1))
    } else {
        1
    }
}

pub fn default_sv_beta(d: usize) -> f64 {
    (-(d as f64).ln().powi(4)).exp().max(SV_BETA_FLOOR)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaussSvConfig {
    pub epsilon: f64,
    pub delta: f64,
    pub calibration: GaussianCalibration,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sv_c: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sv_alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sv_beta: Option<f64>,
}

impl GaussSvConfig {
    pub fn new(epsilon: f64, delta: f64) -> Self {
        GaussSvConfig {
            epsilon,
            delta,
            calibration: GaussianCalibration::Baseline,
            sigma: None,
            alpha: None,
            sv_c: None,
            sv_alpha: None,
            sv_beta: None,
        }
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = Some(sigma);
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = Some(alpha);
        self
    }

    pub fn with_flag_budget(mut self, c: usize) -> Self {
        self.sv_c = Some(c);
        self
    }

    pub fn with_sv_alpha(mut self, alpha: f64) -> Self {
        self.sv_alpha = Some(alpha);
        self
    }

    pub fn with_sv_beta(mut self, beta: f64) -> Self {
        self.sv_beta = Some(beta);
        self
    }

    pub fn with_calibration(mut self, calibration: GaussianCalibration) -> Self {
        self.calibration = calibration;
        self
    }

    /// Fills in every derived constant for an `n × d` database.
    pub fn resolve(&self, n: usize, d: usize) -> Result<GaussSvParams> {
        if d < 3 {
            return Err(Error::param(format!("gauss-sv needs d >= 3 so that ln ln d > 0, got d = {d}")));
        }
        let total = PrivacyParams::new(self.epsilon, self.delta)?;
        if !(self.epsilon > 0.0 && self.delta > 0.0) {
            return Err(Error::param("gauss-sv needs epsilon > 0 and delta > 0"));
        }
        let stage = total.halved();
        let sigma = match self.sigma {
            Some(s) if s >= 0.0 && s.is_finite() => s,
            Some(s) => return Err(Error::param(format!("sigma override must be finite and >= 0, got {s}"))),
            None => match self.calibration {
                GaussianCalibration::Baseline => gaussian_sigma(n, d, self.epsilon, self.delta, self.calibration)?,
                GaussianCalibration::Analytic => gaussian_sigma(n, d, stage.epsilon(), stage.delta(), self.calibration)?,
            },
        };
        let alpha = self.alpha.unwrap_or(8.0 * sigma * (d as f64).ln().ln().sqrt());
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::param(format!(
                "alpha must be finite and > 0 (got {alpha}); override alpha when sigma is 0"
            )));
        }
        let sv = SvConfig {
            c: self.sv_c.unwrap_or_else(|| default_flag_budget(d)),
            k: d,
            epsilon: stage.epsilon(),
            delta: stage.delta(),
            alpha: self.sv_alpha.unwrap_or(alpha / 2.0),
            beta: self.sv_beta.unwrap_or_else(|| default_sv_beta(d)),
        };
        sv.validate()?;
        Ok(GaussSvParams { n, d, sigma, alpha, gaussian_stage: stage, sv })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaussSvParams {
    pub n: usize,
    pub d: usize,
    pub sigma: f64,
    pub alpha: f64,
    pub gaussian_stage: PrivacyParams,
    pub sv: SvConfig,
}

impl GaussSvParams {
    /// Threshold on `|z_j|` above which coordinate `j` counts as bad:
    /// `|q_j(D)| > α_SV/2` is `|z_j| > α_SV`, i.e. `α/2` at the defaults.
    pub fn bad_noise_threshold(&self) -> f64 {
        self.sv.alpha
    }

    /// `e^{−α²/(8σ²)}`, the per-coordinate bad probability bound.
    pub fn bad_probability_bound(&self) -> f64 {
        (-(self.alpha * self.alpha) / (8.0 * self.sigma * self.sigma)).exp()
    }
}

/// Everything the release computed, for checking the error chain.
#[derive(Debug, Clone)]
pub struct GaussSvTrace {
    pub params: GaussSvParams,
    /// Raw Gaussian noise `z`.
    pub noise: Vec<f64>,
    /// Stage-1 answers `ã = clamp(D̄ + z)`.
    pub noisy: Vec<f64>,
    /// True query values `q_j(D) = (D̄_j − ã_j)/2`.
    pub query_values: Vec<f64>,
    /// Sparse-vector answers `â_j`.
    pub sv_answers: Vec<f64>,
    pub output: MarginalVector,
    pub flags_used: usize,
    pub gate: SampleGate,
}

pub fn gauss_sv_release_traced<R: Rng + ?Sized>(
    data: &dyn Dataset,
    config: &GaussSvConfig,
    rng: &mut R,
) -> Result<GaussSvTrace> {
    let params = config.resolve(data.rows(), data.dims())?;
    let truth = data.marginals().values();
    let noise: Vec<f64> = truth.iter().map(|_| gaussian(rng, params.sigma)).collect();
    let noisy: Vec<f64> = truth.iter().zip(&noise).map(|(m, z)| clamp_unit(m + z)).collect();

    let mut sv = sv_init(params.sv, data, DetRng::seed_from_u64(rng.random()))?;
    let mut sv_answers = Vec::with_capacity(params.d);
    let mut query_values = Vec::with_capacity(params.d);
    for (j, &a) in noisy.iter().enumerate() {
        let q = MarginalQuery { column: j, offset: a, scale: 0.5 };
        query_values.push(crate::sparse_vector::LinearQuery::evaluate(&q, data));
        sv_answers.push(sv.answer(&q)?);
    }
    let output = MarginalVector::clamped(noisy.iter().zip(&sv_answers).map(|(a, h)| a + 2.0 * h).collect())?;
    Ok(GaussSvTrace {
        params,
        flags_used: sv.flags_used(),
        gate: sv.gate(),
        noise,
        noisy,
        query_values,
        sv_answers,
        output,
    })
}

pub fn gauss_sv_release<R: Rng + ?Sized>(data: &dyn Dataset, config: &GaussSvConfig, rng: &mut R) -> Result<MarginalVector> {
    gauss_sv_release_traced(data, config, rng).map(|t| t.output)
}

/// `|{j : |z_j| > threshold}|`.
pub fn bad_coordinate_census(z: &[f64], threshold: f64) -> usize {
    z.iter().filter(|v| v.abs() > threshold).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::database::Database;
    use crate::rng::rng_from_seed;

    #[test]
    fn rejects_small_d_and_bad_budgets() {
        let db = Database::filled(10, 2, 1).unwrap();
        let err = gauss_sv_release(&db, &GaussSvConfig::new(1.0, 1e-6), &mut rng_from_seed(0)).unwrap_err();
        assert!(matches!(err, Error::Parameter(_)));
        assert!(GaussSvConfig::new(1.0, 0.0).resolve(100, 10).is_err());
        assert!(GaussSvConfig::new(0.0, 1e-3).resolve(100, 10).is_err());
        assert!(GaussSvConfig::new(1.0, 1e-3).with_sigma(-1.0).resolve(100, 10).is_err());
        assert!(GaussSvConfig::new(1.0, 1e-3).with_sigma(0.0).resolve(100, 10).is_err());
    }

    #[test]
    fn derived_constants() {
        let (n, d, eps, delta) = (5000usize, 1000usize, 1.0, 1e-6);
        let p = GaussSvConfig::new(eps, delta).resolve(n, d).unwrap();
        let sigma = 5.0 * (d as f64 * (1.0 / delta).ln()).sqrt() / (eps * n as f64);
        assert!((p.sigma - sigma).abs() < 1e-15);
        assert!((p.alpha - 8.0 * sigma * (d as f64).ln().ln().sqrt()).abs() < 1e-15);
        assert_eq!(p.sv.k, d);
        assert_eq!(p.sv.c, 1); // 2d/ln^8 d ≈ 0.0076
        assert!((p.sv.alpha - p.alpha / 2.0).abs() < 1e-18);
        assert_eq!(p.sv.beta, ((-(1000f64).ln().powi(4)).exp()).max(SV_BETA_FLOOR));
        // bad-coordinate bound e^{-α²/8σ²} = 1/ln^8 d
        assert!((p.bad_probability_bound() - 1.0 / (d as f64).ln().powi(8)).abs() < 1e-15);
    }

    #[test]
    fn budget_splits_evenly() {
        let p = GaussSvConfig::new(0.8, 2e-6).resolve(1000, 50).unwrap();
        assert_eq!(p.gaussian_stage.epsilon() + p.sv.epsilon, 0.8);
        assert_eq!(p.gaussian_stage.delta() + p.sv.delta, 2e-6);
        assert_eq!(p.gaussian_stage.epsilon(), p.sv.epsilon);
    }

    #[test]
    fn flag_budget_floor_and_beta_floor() {
        assert_eq!(default_flag_budget(3), 3);
        assert_eq!(default_flag_budget(10_000), 1);
        assert_eq!(default_flag_budget(100_000_000), 1);
        assert_eq!(default_sv_beta(1_000_000), SV_BETA_FLOOR);
        assert!(default_sv_beta(3) > SV_BETA_FLOOR);
    }

    #[test]
    fn zero_noise_pipeline_is_identity() {
        let db = Database::from_fn(4000, 8, |i, j| (i * (j + 1)) % 3 == 0).unwrap();
        let cfg = GaussSvConfig::new(1.0, 1e-6).with_sigma(0.0).with_alpha(0.5);
        let t = gauss_sv_release_traced(&db, &cfg, &mut rng_from_seed(4)).unwrap();
        assert_eq!(t.noisy, db.marginals().values());
        assert!(t.query_values.iter().all(|&q| q == 0.0));
        assert!(t.sv_answers.iter().all(|&a| a == 0.0));
        assert_eq!(t.output.values(), db.marginals().values());
    }

    #[test]
    fn query_values_are_minus_half_noise_inside_the_cube() {
        let db = Database::from_fn(1000, 50, |i, j| (i + j) % 2 == 0).unwrap();
        let cfg = GaussSvConfig::new(1.0, 1e-6).with_sigma(0.05).with_alpha(0.3);
        let t = gauss_sv_release_traced(&db, &cfg, &mut rng_from_seed(5)).unwrap();
        for (q, z) in t.query_values.iter().zip(&t.noise) {
            assert!((q + z / 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let db = Database::uniform(500, 20, &mut rng_from_seed(1)).unwrap();
        let cfg = GaussSvConfig::new(2.0, 1e-5);
        let a = gauss_sv_release(&db, &cfg, &mut rng_from_seed(77)).unwrap();
        let b = gauss_sv_release(&db, &cfg, &mut rng_from_seed(77)).unwrap();
        assert_eq!(a, b);
        assert!(a.values().iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn census_examples() {
        assert_eq!(bad_coordinate_census(&[0.0; 10], 0.5), 0);
        assert_eq!(bad_coordinate_census(&[3.0, 0.0, 0.0], 2.0), 1);
        assert_eq!(bad_coordinate_census(&[-3.0, 2.0, 2.0001], 2.0), 2);
    }
}
