//! Bit costs of the universal integer code and of reals, vectors and
//! sequence differences built on it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Normalizing constant of the universal integer code.
pub const C0: f64 = 2.865;

pub const DEFAULT_DELTA: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncodingConfig {
    /// Precision to which reals are transmitted.
    pub delta: f64,
    pub c0: f64,
}

impl Default for EncodingConfig {
    fn default() -> Self {
        EncodingConfig {
            delta: DEFAULT_DELTA,
            c0: C0,
        }
    }
}

impl EncodingConfig {
    pub fn with_delta(delta: f64) -> Self {
        EncodingConfig {
            delta,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::InvalidConfig(format!("delta must be positive, got {}", self.delta)));
        }
        if !(self.c0 >= 1.0) {
            return Err(Error::InvalidConfig(format!("c0 must be at least 1, got {}", self.c0)));
        }
        Ok(())
    }

    fn precision_bits(&self) -> f64 {
        (1.0 / self.delta).log2()
    }
}

/// `log2 n + log2 log2 n + ...`, summing terms while they stay positive.
pub fn log_star(n: u64) -> f64 {
    log_star_f64(n as f64)
}

/// [`log_star`] for a non-negative integer held in an `f64`.
fn log_star_f64(n: f64) -> f64 {
    let mut sum = 0.0;
    let mut term = n.log2();
    while term > 0.0 {
        sum += term;
        term = term.log2();
    }
    sum
}

pub fn cost_uint(n: u64, cfg: &EncodingConfig) -> f64 {
    cfg.c0.log2() + log_star(n)
}

/// Adds one sign bit to the unsigned cost of `|n|`.
pub fn cost_int(n: i64, cfg: &EncodingConfig) -> f64 {
    cost_uint(n.unsigned_abs(), cfg) + 1.0
}

/// Integer part, `log2(1/delta)` bits of fraction, and a sign bit.
pub fn cost_real(x: f64, cfg: &EncodingConfig) -> f64 {
    if !x.is_finite() {
        return f64::INFINITY;
    }
    cfg.c0.log2() + log_star_f64(x.abs().floor()) + cfg.precision_bits() + 1.0
}

pub fn cost_vector(v: &[f64], cfg: &EncodingConfig) -> f64 {
    v.iter().map(|x| cost_real(*x, cfg)).sum()
}

/// Cost of sending `a` to a receiver who already knows `b`.
pub fn cost_seq_diff(a: &[f64], b: &[f64], cfg: &EncodingConfig) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape(a.len(), b.len()));
    }
    Ok(a.iter().zip(b).map(|(x, y)| cost_real(x - y, cfg)).sum())
}
