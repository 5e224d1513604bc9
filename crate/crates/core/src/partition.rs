//! Vocal/background split of a clip by cumulative energy.

use core::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum PartitionError {
    #[error("signal has no energy")]
    NoEnergy,
    #[error("energy fraction {0} must lie strictly between 0 and 1")]
    BadFraction(f64),
}

/// Contiguous range `[start, end]` (1-based, inclusive) holding the bulk of a
/// signal's energy. Samples outside it are treated as background.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnergyPartition {
    pub start: usize,
    pub end: usize,
}

impl EnergyPartition {
    /// The vocal segment as a 0-based slice range.
    pub fn vocal(&self) -> Range<usize> {
        self.start - 1..self.end
    }

    pub fn vocal_len(&self) -> usize {
        self.end + 1 - self.start
    }

    /// Copies the background samples (everything outside the vocal range).
    pub fn background<T: Copy>(&self, x: &[T]) -> alloc::vec::Vec<T> {
        let vocal = self.vocal();
        x[..vocal.start]
            .iter()
            .chain(&x[vocal.end..])
            .copied()
            .collect()
    }
}

/// Relative slack on the percentile comparisons so that thresholds such as
/// `0.025 * total` are not missed by one ulp of `(1 - 0.95) / 2`.
const THRESHOLD_SLACK: f64 = 1e-12;

/// Symmetric-percentile partition: `start` is the first (1-based) sample at
/// which cumulative energy reaches `(1 - fraction) / 2` of the total, `end` the
/// first at which it reaches `1 - (1 - fraction) / 2`.
pub fn energy_partition(x: &[f64], fraction: f64) -> Result<EnergyPartition, PartitionError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(PartitionError::BadFraction(fraction));
    }
    let total: f64 = x.iter().map(|s| s * s).sum();
    if !(total > 0.0) {
        return Err(PartitionError::NoEnergy);
    }
    let tail = (1.0 - fraction) / 2.0;
    let lower = total * tail - total * THRESHOLD_SLACK;
    let upper = total * (1.0 - tail) - total * THRESHOLD_SLACK;

    let mut cumulative = 0.0;
    let mut start = None;
    let mut end = x.len();
    for (i, s) in x.iter().enumerate() {
        cumulative += s * s;
        if start.is_none() && cumulative >= lower {
            start = Some(i + 1);
        }
        if cumulative >= upper {
            end = i + 1;
            break;
        }
    }
    let start = start.unwrap_or(end).min(end);
    Ok(EnergyPartition { start, end })
}

/// [`energy_partition`] with the default 95 % energy fraction.
pub fn vocal_partition(x: &[f64]) -> Result<EnergyPartition, PartitionError> {
    energy_partition(x, 0.95)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use crate::WAVEFORM_LEN as D;

    #[test]
    fn impulse_has_degenerate_range() {
        let mut x = vec![0.0; D];
        x[7999] = 0.3; // position 8000
        assert_eq!(vocal_partition(&x).unwrap(), EnergyPartition { start: 8000, end: 8000 });
    }

    #[test]
    fn constant_signal_trims_two_and_a_half_percent() {
        let x = vec![0.25; D];
        assert_eq!(vocal_partition(&x).unwrap(), EnergyPartition { start: 400, end: 15600 });
    }

    #[test]
    fn uniform_block() {
        let mut x = vec![0.0; D];
        for s in &mut x[4000..8000] {
            *s = -0.5;
        }
        let p = vocal_partition(&x).unwrap();
        assert_eq!(p, EnergyPartition { start: 4100, end: 7900 });
        assert_eq!(p.vocal(), 4099..7900);
        assert_eq!(p.background(&x).len(), D - p.vocal_len());
    }

    #[test]
    fn errors() {
        assert_eq!(vocal_partition(&[0.0; 8]), Err(PartitionError::NoEnergy));
        assert_eq!(energy_partition(&[1.0], 1.0), Err(PartitionError::BadFraction(1.0)));
        assert!(energy_partition(&[1.0], 0.0).is_err());
    }
}
