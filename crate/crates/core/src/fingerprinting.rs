//! Tardos-style L1 fingerprinting code.
//!
//! Column `j` of the codebook is drawn i.i.d. with `P[+1] = p_j`, where the
//! biases follow the arcsine density `∝ 1/√(p(1−p))` restricted to
//! `[t, 1−t]`, `t = 1/(300n)`. Tracing scores answers `a` against each row,
//!
//! ```text
//! S_i = Σ_j a_j · ((D_ij + 1)/2 − p_j) / √(p_j(1 − p_j)),
//! ```
//!
//! and accuses every user with `S_i > Z`. For answers independent of row `i`
//! the summands are mean-zero with variance `a_j² ≤ 1`, so
//! `Z = κ·z_{1−δ}·√d` bounds false accusations by roughly `δ`; `κ` and the
//! length constant `C` in `d = C·n²·⌈ln(1/δ)⌉` are fixed by Monte Carlo at
//! `n = 10`, `δ = 0.05` (see the README).
//!
//! A code is saved as a binary codebook plus a key=value sidecar:
//!
//! ```text
//! format=marginalpriv-fpc-v1
//! users=10
//! length=1800
//! soundness=0.05
//! cutoff=0.0003333333333333333
//! threshold=76.76375214266051
//! biases=0.52,0.0141,...
//! ```
//!
//! Floats are written in shortest round-trip form, so a reloaded code traces
//! bit-identically.

use std::f64::consts::FRAC_PI_2;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::Serialize;

use crate::database::{Database, DatabaseFormat};
use crate::error::{ensure_dims, Error, Result};
use crate::numeric::{normal_upper_quantile, CompensatedSum};

/// `C` in the code length `C·n²·⌈ln(1/δ)⌉`.
pub const FPC_LENGTH_CONSTANT: usize = 6;

/// `κ` in the tracing threshold `κ·z_{1−δ}·√d`.
pub const FPC_THRESHOLD_MULTIPLIER: f64 = 1.1;

const SIDECAR_FORMAT: &str = "marginalpriv-fpc-v1";

fn check_code_params(n: usize, delta: f64) -> Result<()> {
    if n < 2 {
        return Err(Error::param(format!("a fingerprinting code needs at least 2 users, got {n}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::param(format!("soundness delta must lie in (0, 1), got {delta}")));
    }
    Ok(())
}

/// Shortest supported code length for `n` users at soundness `δ`.
pub fn fpc_min_length(n: usize, delta: f64) -> Result<usize> {
    check_code_params(n, delta)?;
    let log_factor = (1.0 / delta).ln().ceil() as usize;
    FPC_LENGTH_CONSTANT
        .checked_mul(n)
        .and_then(|v| v.checked_mul(n))
        .and_then(|v| v.checked_mul(log_factor.max(1)))
        .ok_or_else(|| Error::param(format!("code length overflows for n = {n}")))
}

/// Bias cutoff `t = 1/(300n)`.
pub fn bias_cutoff(n: usize) -> f64 {
    1.0 / (300.0 * n as f64)
}

/// `κ·z_{1−δ}·√d` with the calibrated multiplier.
pub fn tracing_threshold(d: usize, delta: f64) -> f64 {
    FPC_THRESHOLD_MULTIPLIER * normal_upper_quantile(delta) * (d as f64).sqrt()
}

/// Draws `d` biases from the arcsine density on `[t, 1−t]` via `p = sin²(r)`.
pub fn draw_biases<R: Rng + ?Sized>(d: usize, cutoff: f64, rng: &mut R) -> Vec<f64> {
    let lo = cutoff.sqrt().asin();
    let hi = FRAC_PI_2 - lo;
    (0..d)
        .map(|_| {
            let r = lo + (hi - lo) * rng.random::<f64>();
            r.sin().powi(2).clamp(cutoff, 1.0 - cutoff)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FingerprintingCode {
    codebook: Database,
    biases: Vec<f64>,
    soundness: f64,
    cutoff: f64,
    threshold: f64,
    // Score contributions of a +1 / −1 entry per column.
    weight_plus: Vec<f64>,
    weight_minus: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceResult {
    pub accused: Vec<usize>,
    pub scores: Vec<f64>,
}

impl TraceResult {
    pub fn is_empty(&self) -> bool {
        self.accused.is_empty()
    }

    pub fn accuses(&self, user: usize) -> bool {
        self.accused.binary_search(&user).is_ok()
    }
}

pub fn fpc_generate<R: Rng + ?Sized>(n: usize, delta: f64, d: usize, rng: &mut R) -> Result<FingerprintingCode> {
    let min = fpc_min_length(n, delta)?;
    if d < min {
        return Err(Error::param(format!("code length {d} is below the minimum {min} for n = {n}, delta = {delta}")));
    }
    let cutoff = bias_cutoff(n);
    let biases = draw_biases(d, cutoff, rng);
    let codebook = Database::with_column_biases(n, &biases, rng)?;
    FingerprintingCode::from_parts(codebook, biases, delta, cutoff, tracing_threshold(d, delta))
}

pub fn fpc_trace(code: &FingerprintingCode, answers: &[f64]) -> Result<TraceResult> {
    code.trace(answers)
}

impl FingerprintingCode {
    pub fn from_parts(codebook: Database, biases: Vec<f64>, soundness: f64, cutoff: f64, threshold: f64) -> Result<Self> {
        check_code_params(codebook.rows(), soundness)?;
        ensure_dims(codebook.dims(), biases.len())?;
        if !(cutoff > 0.0 && cutoff < 0.5) {
            return Err(Error::param(format!("bias cutoff must lie in (0, 1/2), got {cutoff}")));
        }
        if let Some(p) = biases.iter().find(|p| !(cutoff..=1.0 - cutoff).contains(*p)) {
            return Err(Error::param(format!("bias {p} outside [{cutoff}, {}]", 1.0 - cutoff)));
        }
        if !threshold.is_finite() {
            return Err(Error::param("tracing threshold must be finite"));
        }
        let weight_plus = biases.iter().map(|p| ((1.0 - p) / p).sqrt()).collect();
        let weight_minus = biases.iter().map(|p| -(p / (1.0 - p)).sqrt()).collect();
        Ok(FingerprintingCode { codebook, biases, soundness, cutoff, threshold, weight_plus, weight_minus })
    }

    /// Same code with a different accusation threshold.
    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn users(&self) -> usize {
        self.codebook.rows()
    }

    pub fn length(&self) -> usize {
        self.codebook.dims()
    }

    pub fn codebook(&self) -> &Database {
        &self.codebook
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    pub fn soundness(&self) -> f64 {
        self.soundness
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Normalised score entry `g_ij`.
    pub fn score_weight(&self, user: usize, col: usize) -> f64 {
        if self.codebook.sign(user, col) > 0 {
            self.weight_plus[col]
        } else {
            self.weight_minus[col]
        }
    }

    /// `S_i` for one user.
    pub fn score(&self, user: usize, answers: &[f64]) -> f64 {
        answers
            .iter()
            .enumerate()
            .map(|(j, a)| a * self.score_weight(user, j))
            .collect::<CompensatedSum>()
            .value()
    }

    pub fn trace(&self, answers: &[f64]) -> Result<TraceResult> {
        ensure_dims(self.length(), answers.len())?;
        if let Some(a) = answers.iter().find(|a| !(-1.0..=1.0).contains(*a)) {
            return Err(Error::param(format!("answers must lie in [-1, 1], got {a}")));
        }
        let scores: Vec<f64> = (0..self.users()).map(|i| self.score(i, answers)).collect();
        let accused = scores.iter().enumerate().filter(|(_, s)| **s > self.threshold).map(|(i, _)| i).collect();
        Ok(TraceResult { accused, scores })
    }

    /// Codebook with `user`'s row replaced by `fixed_row`.
    pub fn without_user(&self, user: usize, fixed_row: &[i8]) -> Result<Database> {
        self.codebook.with_row_replaced(user, fixed_row)
    }

    pub fn write_sidecar<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "format={SIDECAR_FORMAT}")?;
        writeln!(w, "users={}", self.users())?;
        writeln!(w, "length={}", self.length())?;
        writeln!(w, "soundness={}", self.soundness)?;
        writeln!(w, "cutoff={}", self.cutoff)?;
        writeln!(w, "threshold={}", self.threshold)?;
        let biases: Vec<String> = self.biases.iter().map(f64::to_string).collect();
        writeln!(w, "biases={}", biases.join(","))?;
        Ok(())
    }

    pub fn save(&self, codebook_path: impl AsRef<Path>, sidecar_path: impl AsRef<Path>) -> Result<()> {
        self.codebook.save(codebook_path, DatabaseFormat::Binary)?;
        let mut buf = Vec::new();
        self.write_sidecar(&mut buf)?;
        fs::write(sidecar_path, buf)?;
        Ok(())
    }

    pub fn load(codebook_path: impl AsRef<Path>, sidecar_path: impl AsRef<Path>) -> Result<Self> {
        let sidecar = Sidecar::parse(&fs::read_to_string(sidecar_path)?)?;
        let codebook = Database::load_expecting(codebook_path, sidecar.users, sidecar.length)?;
        Self::from_parts(codebook, sidecar.biases, sidecar.soundness, sidecar.cutoff, sidecar.threshold)
    }
}

struct Sidecar {
    users: usize,
    length: usize,
    soundness: f64,
    cutoff: f64,
    threshold: f64,
    biases: Vec<f64>,
}

impl Sidecar {
    fn parse(text: &str) -> Result<Self> {
        let mut fields = std::collections::HashMap::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::format(format!("sidecar line without '=': {line}")))?;
            if fields.insert(key.trim(), value.trim()).is_some() {
                return Err(Error::format(format!("duplicate sidecar key {key}")));
            }
        }
        let get = |key: &str| fields.get(key).copied().ok_or_else(|| Error::format(format!("sidecar is missing {key}")));
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::format(format!("sidecar {key} is not a number: {v}")))
        }
        if get("format")? != SIDECAR_FORMAT {
            return Err(Error::format(format!("unknown sidecar format {}", get("format")?)));
        }
        let length: usize = num("length", get("length")?)?;
        let raw = get("biases")?;
        let biases = if raw.is_empty() {
            Vec::new()
        } else {
            raw.split(',').map(|b| num("biases", b.trim())).collect::<Result<Vec<f64>>>()?
        };
        ensure_dims(length, biases.len())?;
        Ok(Sidecar {
            users: num("users", get("users")?)?,
            length,
            soundness: num("soundness", get("soundness")?)?,
            cutoff: num("cutoff", get("cutoff")?)?,
            threshold: num("threshold", get("threshold")?)?,
            biases,
        })
    }
}
