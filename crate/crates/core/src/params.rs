//! Privacy and accuracy parameters, and group-privacy degradation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `(ε, δ)`; `δ = 0` is pure differential privacy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyParams {
    epsilon: f64,
    delta: f64,
}

impl PrivacyParams {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(Error::param(format!("epsilon must be finite and >= 0, got {epsilon}")));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(Error::param(format!("delta must lie in [0, 1), got {delta}")));
        }
        Ok(PrivacyParams { epsilon, delta })
    }

    pub fn pure(epsilon: f64) -> Result<Self> {
        Self::new(epsilon, 0.0)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn is_pure(&self) -> bool {
        self.delta == 0.0
    }

    /// Even split of both parameters, used for two-stage compositions.
    pub fn halved(&self) -> PrivacyParams {
        PrivacyParams { epsilon: self.epsilon / 2.0, delta: self.delta / 2.0 }
    }
}

/// `(α, β)`: target error and failure probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyParams {
    alpha: f64,
    beta: f64,
}

impl AccuracyParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::param(format!("alpha must lie in (0, 1], got {alpha}")));
        }
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::param(format!("beta must lie in (0, 1), got {beta}")));
        }
        Ok(AccuracyParams { alpha, beta })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupPrivacyParams {
    pub k: u32,
    pub epsilon_k: f64,
    pub delta_k: f64,
}

/// Guarantee for databases differing in up to `k` rows:
/// `(kε, ((e^{kε} − 1)/(e^ε − 1))·δ)`. At `ε = 0` the multiplier takes its
/// limit `k`.
pub fn group_privacy(params: PrivacyParams, k: u32) -> Result<GroupPrivacyParams> {
    if k == 0 {
        return Err(Error::param("group size k must be >= 1"));
    }
    let (eps, delta) = (params.epsilon(), params.delta());
    if k == 1 {
        return Ok(GroupPrivacyParams { k, epsilon_k: eps, delta_k: delta });
    }
    let kf = f64::from(k);
    let multiplier = if eps == 0.0 {
        kf
    } else {
        // expm1 keeps the ratio accurate for small ε
        (kf * eps).exp_m1() / eps.exp_m1()
    };
    Ok(GroupPrivacyParams { k, epsilon_k: kf * eps, delta_k: multiplier * delta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn validation() {
        assert!(PrivacyParams::new(-0.1, 0.0).is_err());
        assert!(PrivacyParams::new(1.0, 1.0).is_err());
        assert!(PrivacyParams::new(f64::INFINITY, 0.0).is_err());
        assert!(PrivacyParams::new(0.0, 0.0).is_ok());
        assert!(AccuracyParams::new(0.0, 0.5).is_err());
        assert!(AccuracyParams::new(1.0, 0.5).is_ok());
        assert!(AccuracyParams::new(0.5, 1.0).is_err());
    }

    #[test]
    fn k_one_is_bit_exact_identity() {
        let p = PrivacyParams::new(0.731, 1.3e-7).unwrap();
        let g = group_privacy(p, 1).unwrap();
        assert_eq!(g.epsilon_k.to_bits(), p.epsilon().to_bits());
        assert_eq!(g.delta_k.to_bits(), p.delta().to_bits());
    }

    #[test]
    fn k_two_at_unit_epsilon_multiplies_delta_by_e_plus_one() {
        let g = group_privacy(PrivacyParams::new(1.0, 1e-6).unwrap(), 2).unwrap();
        assert_eq!(g.epsilon_k, 2.0);
        let expected = (std::f64::consts::E + 1.0) * 1e-6;
        assert!((g.delta_k - expected).abs() < 1e-18);
    }

    #[test]
    fn zero_epsilon_uses_limit_multiplier() {
        let g = group_privacy(PrivacyParams::new(0.0, 0.01).unwrap(), 5).unwrap();
        assert_eq!((g.epsilon_k, g.delta_k), (0.0, 0.05));
        let g = group_privacy(PrivacyParams::new(0.0, 0.0).unwrap(), 5).unwrap();
        assert_eq!((g.epsilon_k, g.delta_k), (0.0, 0.0));
    }

    #[test]
    fn zero_k_rejected() {
        assert!(group_privacy(PrivacyParams::pure(1.0).unwrap(), 0).is_err());
    }

    proptest! {
        #[test]
        fn pure_stays_pure(eps in 0.0f64..5.0, k in 1u32..50) {
            let g = group_privacy(PrivacyParams::pure(eps).unwrap(), k).unwrap();
            prop_assert_eq!(g.delta_k, 0.0);
            prop_assert!((g.epsilon_k - f64::from(k) * eps).abs() < 1e-12);
        }

        #[test]
        fn monotone_in_k(eps in 0.0f64..3.0, delta in 0.0f64..0.5, k in 1u32..40) {
            let p = PrivacyParams::new(eps, delta).unwrap();
            let a = group_privacy(p, k).unwrap();
            let b = group_privacy(p, k + 1).unwrap();
            prop_assert!(b.epsilon_k >= a.epsilon_k);
            prop_assert!(b.delta_k >= a.delta_k);
        }
    }
}
