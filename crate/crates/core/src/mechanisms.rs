//! Noise-addition releases of one-way marginals.
//!
//! Changing one row moves each marginal by at most `Δ = 2/n`, so all noise
//! scales below are expressed through that per-coordinate sensitivity. Every
//! release clamps its output to `[-1, 1]^d`; error metrics are taken on the
//! clamped vector.
//!
//! The L∞-exponential mechanism adds noise `Y` with density proportional to
//! `exp(−(ε/Δ)‖y‖∞)`. It is sampled by drawing a radius
//! `R ~ Gamma(d + 1, Δ/ε)` as a sum of `d + 1` standard exponentials and then
//! `Y` uniformly from the cube `[−R, R]^d`, for `2d + 1` uniforms in total.
//! The induced `‖Y‖∞` is `Gamma(d, Δ/ε)` with mean `dΔ/ε`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::database::Dataset;
use crate::error::{ensure_dims, Error, Result};
use crate::gauss_sv::{gauss_sv_release, GaussSvConfig};
use crate::marginals::MarginalVector;
use crate::params::PrivacyParams;
use crate::rng::{gaussian, laplace, standard_exponential, DetRng};

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon.is_finite() {
        Ok(())
    } else {
        Err(Error::param(format!("epsilon must be finite and > 0, got {epsilon}")))
    }
}

fn check_delta_positive(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(Error::param(format!("delta must lie in (0, 1) for this mechanism, got {delta}")))
    }
}

/// Per-coordinate sensitivity of the marginals of an `n`-row database.
pub fn marginal_sensitivity(n: usize) -> f64 {
    2.0 / n as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum GaussianCalibration {
    /// `σ = 5√(d·ln(1/δ))/(εn)`.
    #[default]
    Baseline,
    /// `σ = 2√(2·ln(1.25/δ))·√d/(nε)`: the classical analytic calibration
    /// with L2 sensitivity `2√d/n`.
    Analytic,
}

/// Noise scales of the baseline mechanisms for one database shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseScale {
    /// Per-coordinate sensitivity `Δ`.
    pub sensitivity: f64,
    /// Laplace scale `b = dΔ/ε`.
    pub laplace_scale: f64,
    /// Gaussian standard deviation, when a δ was supplied.
    pub gaussian_sigma: Option<f64>,
}

impl NoiseScale {
    pub fn calibrate(
        n: usize,
        d: usize,
        epsilon: f64,
        delta: Option<f64>,
        calibration: GaussianCalibration,
    ) -> Result<Self> {
        Ok(NoiseScale {
            sensitivity: marginal_sensitivity(n),
            laplace_scale: laplace_scale(n, d, epsilon)?,
            gaussian_sigma: delta.map(|delta| gaussian_sigma(n, d, epsilon, delta, calibration)).transpose()?,
        })
    }
}

/// `b = 2d/(nε)`: the L1 sensitivity of the whole marginal vector over ε.
pub fn laplace_scale(n: usize, d: usize, epsilon: f64) -> Result<f64> {
    check_epsilon(epsilon)?;
    Ok(d as f64 * marginal_sensitivity(n) / epsilon)
}

pub fn gaussian_sigma(n: usize, d: usize, epsilon: f64, delta: f64, calibration: GaussianCalibration) -> Result<f64> {
    check_epsilon(epsilon)?;
    check_delta_positive(delta)?;
    let (n, d) = (n as f64, d as f64);
    Ok(match calibration {
        GaussianCalibration::Baseline => 5.0 * (d * (1.0 / delta).ln()).sqrt() / (epsilon * n),
        GaussianCalibration::Analytic => 2.0 * (2.0 * (1.25 / delta).ln()).sqrt() * d.sqrt() / (n * epsilon),
    })
}

fn add_noise_and_clamp(data: &dyn Dataset, mut noise: impl FnMut() -> f64) -> Result<MarginalVector> {
    let out = data.marginals().values().iter().map(|&m| m + noise()).collect();
    MarginalVector::clamped(out)
}

/// `(ε, 0)`-DP release with i.i.d. Laplace noise of scale `2d/(nε)`.
pub fn laplace_release<R: Rng + ?Sized>(data: &dyn Dataset, epsilon: f64, rng: &mut R) -> Result<MarginalVector> {
    let b = laplace_scale(data.rows(), data.dims(), epsilon)?;
    add_noise_and_clamp(data, || laplace(rng, b))
}

/// `(ε, δ)`-DP release with i.i.d. Gaussian noise.
pub fn gaussian_release<R: Rng + ?Sized>(
    data: &dyn Dataset,
    epsilon: f64,
    delta: f64,
    calibration: GaussianCalibration,
    rng: &mut R,
) -> Result<MarginalVector> {
    let sigma = gaussian_sigma(data.rows(), data.dims(), epsilon, delta, calibration)?;
    add_noise_and_clamp(data, || gaussian(rng, sigma))
}

/// One draw of L∞-exponential noise.
#[derive(Debug, Clone, PartialEq)]
pub struct LinfNoiseSample {
    pub radius: f64,
    pub offsets: Vec<f64>,
}

impl LinfNoiseSample {
    pub fn norm(&self) -> f64 {
        self.offsets.iter().fold(0.0, |m, y| m.max(y.abs()))
    }
}

pub fn linf_sample<R: Rng + ?Sized>(d: usize, epsilon: f64, sensitivity: f64, rng: &mut R) -> Result<LinfNoiseSample> {
    check_epsilon(epsilon)?;
    if !(sensitivity > 0.0 && sensitivity.is_finite()) {
        return Err(Error::param(format!("sensitivity must be finite and > 0, got {sensitivity}")));
    }
    if d == 0 {
        return Err(Error::param("dimension must be >= 1"));
    }
    let scale = sensitivity / epsilon;
    let radius = scale * (0..=d).map(|_| standard_exponential(rng)).sum::<f64>();
    let offsets = (0..d).map(|_| radius * (2.0 * rng.random::<f64>() - 1.0)).collect();
    Ok(LinfNoiseSample { radius, offsets })
}

/// `(ε, 0)`-DP release `clamp(D̄ + Y)` with L∞-exponential noise at `Δ = 2/n`.
pub fn linf_release<R: Rng + ?Sized>(data: &dyn Dataset, epsilon: f64, rng: &mut R) -> Result<MarginalVector> {
    let noise = linf_sample(data.dims(), epsilon, marginal_sensitivity(data.rows()), rng)?;
    let out = data.marginals().values().iter().zip(&noise.offsets).map(|(m, y)| m + y).collect();
    MarginalVector::clamped(out)
}

fn linf_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, y| m.max(y.abs()))
}

/// `ln(pdf(point)/pdf(other)) = (ε/Δ)(‖other‖∞ − ‖point‖∞)`.
pub fn linf_log_density_ratio(point: &[f64], other: &[f64], epsilon: f64, sensitivity: f64) -> Result<f64> {
    ensure_dims(point.len(), other.len())?;
    check_epsilon(epsilon)?;
    if sensitivity.is_nan() || sensitivity <= 0.0 {
        return Err(Error::param("sensitivity must be > 0"));
    }
    if point.iter().chain(other).any(|v| !v.is_finite()) {
        return Err(Error::param("density ratio needs finite points"));
    }
    Ok(epsilon / sensitivity * (linf_norm(other) - linf_norm(point)))
}

/// Exact density ratio `pdf(point)/pdf(other)` of the L∞-exponential noise.
/// When `‖point − other‖∞ ≤ Δ` the triangle inequality caps it at `e^ε`.
pub fn linf_density_ratio(point: &[f64], other: &[f64], epsilon: f64, sensitivity: f64) -> Result<f64> {
    linf_log_density_ratio(point, other, epsilon, sensitivity).map(f64::exp)
}

/// Chernoff bound on `P[‖Y‖∞ ≥ α]` from the Gamma(d, Δ/ε) moment generating
/// function: `(εα/(Δd))^d · e^{d − αε/Δ}` when `α > dΔ/ε`, else 1.
pub fn linf_tail_bound(d: usize, epsilon: f64, sensitivity: f64, alpha: f64) -> f64 {
    let ratio = epsilon * alpha / (sensitivity * d as f64);
    if ratio <= 1.0 {
        return 1.0;
    }
    let d = d as f64;
    (d * ratio.ln() + d - alpha * epsilon / sensitivity).exp().min(1.0)
}

/// Exact `P[‖Y‖∞ ≥ α]` via the Poisson form of the integer-shape Gamma tail,
/// `e^{−x} Σ_{k<d} x^k/k!` with `x = αε/Δ`, summed in log space.
pub fn linf_tail_exact(d: usize, epsilon: f64, sensitivity: f64, alpha: f64) -> f64 {
    let x = alpha * epsilon / sensitivity;
    if x <= 0.0 {
        return 1.0;
    }
    let lx = x.ln();
    let mut log_term = -x; // k = 0
    let mut acc = crate::numeric::CompensatedSum::new();
    for k in 0..d {
        if k > 0 {
            log_term += lx - (k as f64).ln();
        }
        acc.add(log_term.exp());
    }
    acc.value().min(1.0)
}

/// A marginal-release oracle: the mechanisms above plus the two reference
/// oracles (exact answers and a data-independent constant) used by attacks.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Mechanism {
    /// Returns the true marginals; not private.
    Exact,
    /// Returns `value` in every coordinate, ignoring the data.
    Constant { value: f64 },
    Laplace { epsilon: f64 },
    Gaussian { epsilon: f64, delta: f64, calibration: GaussianCalibration },
    Linf { epsilon: f64 },
    GaussSv { config: GaussSvConfig },
}

impl Mechanism {
    pub fn name(&self) -> &'static str {
        match self {
            Mechanism::Exact => "exact",
            Mechanism::Constant { .. } => "constant",
            Mechanism::Laplace { .. } => "laplace",
            Mechanism::Gaussian { .. } => "gaussian",
            Mechanism::Linf { .. } => "linf",
            Mechanism::GaussSv { .. } => "gauss-sv",
        }
    }

    /// Privacy guarantee, `None` for the non-private reference oracles.
    pub fn privacy(&self) -> Option<PrivacyParams> {
        match *self {
            Mechanism::Exact => None,
            Mechanism::Constant { .. } => PrivacyParams::pure(0.0).ok(),
            Mechanism::Laplace { epsilon } | Mechanism::Linf { epsilon } => PrivacyParams::pure(epsilon).ok(),
            Mechanism::Gaussian { epsilon, delta, .. } => PrivacyParams::new(epsilon, delta).ok(),
            Mechanism::GaussSv { ref config } => PrivacyParams::new(config.epsilon, config.delta).ok(),
        }
    }

    pub fn release(&self, data: &dyn Dataset, rng: &mut DetRng) -> Result<MarginalVector> {
        match *self {
            Mechanism::Exact => Ok(data.marginals().clone()),
            Mechanism::Constant { value } => MarginalVector::new(vec![value; data.dims()]),
            Mechanism::Laplace { epsilon } => laplace_release(data, epsilon, rng),
            Mechanism::Gaussian { epsilon, delta, calibration } => gaussian_release(data, epsilon, delta, calibration, rng),
            Mechanism::Linf { epsilon } => linf_release(data, epsilon, rng),
            Mechanism::GaussSv { ref config } => gauss_sv_release(data, config, rng),
        }
    }
}

/// Anything that releases marginals from a dataset and a seeded stream.
pub trait ReleaseOracle: Sync {
    fn release(&self, data: &dyn Dataset, rng: &mut DetRng) -> Result<MarginalVector>;

    fn privacy(&self) -> Option<PrivacyParams> {
        None
    }

    fn label(&self) -> String;
}

impl ReleaseOracle for Mechanism {
    fn release(&self, data: &dyn Dataset, rng: &mut DetRng) -> Result<MarginalVector> {
        Mechanism::release(self, data, rng)
    }

    fn privacy(&self) -> Option<PrivacyParams> {
        Mechanism::privacy(self)
    }

    fn label(&self) -> String {
        self.name().to_string()
    }
}

/// Wraps a closure as a [`ReleaseOracle`].
pub struct FnOracle<F> {
    pub label: String,
    pub f: F,
}

impl<F> ReleaseOracle for FnOracle<F>
where
    F: Fn(&dyn Dataset, &mut DetRng) -> Result<MarginalVector> + Sync,
{
    fn release(&self, data: &dyn Dataset, rng: &mut DetRng) -> Result<MarginalVector> {
        (self.f)(data, rng)
    }

    fn label(&self) -> String {
        self.label.clone()
    }
}
