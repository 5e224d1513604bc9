//! Decibel loudness of a signal and of a perturbation relative to a signal.

use serde::{Deserialize, Serialize};

use crate::error::DbError;

/// Which absolute loudness functional a relative measurement uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DbMetric {
    /// `max_i 20 log10 |x_i|`
    Max,
    /// `20 log10 (mean_i |x_i|)`
    Mean,
}

impl DbMetric {
    pub fn name(self) -> &'static str {
        match self {
            DbMetric::Max => "max",
            DbMetric::Mean => "mean",
        }
    }

    pub fn apply(self, x: &[f64]) -> Result<f64, DbError> {
        match self {
            DbMetric::Max => db_max(x),
            DbMetric::Mean => db_mean(x),
        }
    }
}

fn to_db(amplitude: f64) -> Result<f64, DbError> {
    if amplitude > 0.0 {
        Ok(20.0 * libm::log10(amplitude))
    } else {
        Err(DbError::NegativeInfinity)
    }
}

/// Peak loudness `20 log10 max_i |x_i|`.
pub fn db_max(x: &[f64]) -> Result<f64, DbError> {
    if x.is_empty() {
        return Err(DbError::Empty);
    }
    to_db(x.iter().fold(0.0_f64, |m, &s| m.max(s.abs())))
}

/// Mean-amplitude loudness `20 log10 (1/d sum_i |x_i|)`.
pub fn db_mean(x: &[f64]) -> Result<f64, DbError> {
    if x.is_empty() {
        return Err(DbError::Empty);
    }
    let sum: f64 = x.iter().map(|s| s.abs()).sum();
    to_db(sum / x.len() as f64)
}

/// Loudness of `v` relative to `x`: `dB(v) - dB(x)` under `metric`.
/// Negative values mean the perturbation is quieter than the signal.
pub fn relative_db(v: &[f64], x: &[f64], metric: DbMetric) -> Result<f64, DbError> {
    Ok(metric.apply(v)? - metric.apply(x)?)
}
