//! Closed-form sample-complexity bounds for releasing `d` one-way marginals.
//!
//! Every formula is reported with unit constant. Where an explicit constant
//! is known it is exposed separately so callers can opt into it; all logs are
//! natural.

use serde::Serialize;

use crate::error::{Error, Result};

/// Constant in `n ≥ 40·√(d·ln(1/δ)·ln ln d)/(αε)` for the Gaussian + sparse-vector release.
pub const GAUSS_SV_CONSTANT: f64 = 40.0;
/// Constant in `n ≥ 4d/(εα)` for the L∞-exponential release.
pub const LINF_PURE_CONSTANT: f64 = 4.0;
/// Denominator in the packing bound `n > d/(800ε) − ln(20)/ε`.
pub const PACKING_CONSTANT: f64 = 800.0;

fn check_common(d: u64, alpha: f64, epsilon: f64) -> Result<()> {
    if d == 0 {
        return Err(Error::param("d must be >= 1"));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::param(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::param(format!("epsilon must be finite and > 0, got {epsilon}")));
    }
    Ok(())
}

fn log_inv_delta(delta: Option<f64>) -> Result<f64> {
    match delta {
        Some(delta) if delta > 0.0 && delta < 1.0 => Ok((1.0 / delta).ln()),
        Some(0.0) => Err(Error::domain("log(1/delta) is undefined at delta = 0")),
        Some(delta) => Err(Error::param(format!("delta must lie in [0, 1), got {delta}"))),
        None => Err(Error::domain("this bound requires delta > 0")),
    }
}

/// `√(d·ln(1/δ))/(εα)`: Laplace average-error upper bound (approximate DP)
/// and, with the same formula, the matching lower bound.
pub fn sqrt_d_log_delta(d: u64, alpha: f64, epsilon: f64, delta: Option<f64>) -> Result<f64> {
    check_common(d, alpha, epsilon)?;
    Ok((d as f64 * log_inv_delta(delta)?).sqrt() / (epsilon * alpha))
}

/// `d/(εα)`: pure-DP Laplace upper bound.
pub fn d_over_eps_alpha(d: u64, alpha: f64, epsilon: f64) -> Result<f64> {
    check_common(d, alpha, epsilon)?;
    Ok(d as f64 / (epsilon * alpha))
}

/// `√(d·ln(1/δ)·ln ln d)/(εα)`: worst-case-error approximate-DP upper bound.
/// Needs `d ≥ 3` so that `ln ln d > 0`.
pub fn gauss_sv_upper(d: u64, alpha: f64, epsilon: f64, delta: Option<f64>) -> Result<f64> {
    check_common(d, alpha, epsilon)?;
    if d < 3 {
        return Err(Error::domain("ln ln d is nonpositive for d < 3"));
    }
    let lld = (d as f64).ln().ln();
    Ok((d as f64 * log_inv_delta(delta)? * lld).sqrt() / (epsilon * alpha))
}

/// `d/ε`: pure-DP packing lower bound.
pub fn packing_lower(d: u64, epsilon: f64) -> Result<f64> {
    check_common(d, 1.0, epsilon)?;
    Ok(d as f64 / epsilon)
}

/// The packing argument's explicit form `d/(800ε) − ln(20)/ε`.
pub fn packing_lower_explicit(d: u64, epsilon: f64) -> Result<f64> {
    check_common(d, 1.0, epsilon)?;
    Ok(d as f64 / (PACKING_CONSTANT * epsilon) - 20f64.ln() / epsilon)
}

/// All bound formulas for one parameter point. δ-dependent entries are
/// `None` when δ is absent or zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundSet {
    pub d: u64,
    pub alpha: f64,
    pub epsilon: f64,
    pub delta: Option<f64>,
    /// Laplace, average error, approximate DP.
    pub laplace_approx_upper: Option<f64>,
    /// Laplace, average error, pure DP.
    pub laplace_pure_upper: f64,
    /// Fingerprinting lower bound, approximate DP.
    pub approx_lower: Option<f64>,
    /// Gaussian + sparse vector, worst-case error.
    pub gauss_sv_upper: Option<f64>,
    /// Packing lower bound, pure DP.
    pub pure_lower: f64,
}

impl BoundSet {
    /// The smaller of the two Laplace upper bounds.
    pub fn laplace_upper(&self) -> f64 {
        self.laplace_approx_upper
            .map_or(self.laplace_pure_upper, |a| a.min(self.laplace_pure_upper))
    }

    /// The Gaussian + sparse-vector bound with its explicit constant applied.
    pub fn gauss_sv_upper_explicit(&self) -> Option<f64> {
        self.gauss_sv_upper.map(|v| v * GAUSS_SV_CONSTANT)
    }

    /// `4d/(εα)`, the sample size at which the L∞ release meets its accuracy guarantee.
    pub fn linf_pure_upper_explicit(&self) -> f64 {
        LINF_PURE_CONSTANT * self.laplace_pure_upper
    }
}

pub fn sample_complexity_bounds(d: u64, alpha: f64, epsilon: f64, delta: Option<f64>) -> Result<BoundSet> {
    check_common(d, alpha, epsilon)?;
    if let Some(delta) = delta {
        if !(0.0..1.0).contains(&delta) {
            return Err(Error::param(format!("delta must lie in [0, 1), got {delta}")));
        }
    }
    let delta = delta.filter(|&x| x > 0.0);
    let approx = delta.map(|_| sqrt_d_log_delta(d, alpha, epsilon, delta)).transpose()?;
    let gsv = if delta.is_some() && d >= 3 {
        Some(gauss_sv_upper(d, alpha, epsilon, delta)?)
    } else {
        None
    };
    Ok(BoundSet {
        d,
        alpha,
        epsilon,
        delta,
        laplace_approx_upper: approx,
        laplace_pure_upper: d_over_eps_alpha(d, alpha, epsilon)?,
        approx_lower: approx,
        gauss_sv_upper: gsv,
        pure_lower: packing_lower(d, epsilon)?,
    })
}
