//! Per-part loudness audit of a perturbation over a labelled set.
//!
//! Each clean clip is split into a vocal segment (the contiguous range
//! holding 95 % of its energy) and background (the rest). The perturbation is
//! restricted to each part and compared against the same part of the clip,
//! under both the peak and the mean dB metric. `silence` clips carry no
//! speech, so the whole clip is background.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::audio::{ClassLabel, Waveform};
use crate::loudness::{relative_db, DbMetric};
use crate::partition::{energy_partition, EnergyPartition, PartitionError};

pub const DEFAULT_ENERGY_FRACTION: f64 = 0.95;

/// Outcome of one relative-dB measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "db", rename_all = "snake_case")]
pub enum DbEntry {
    Value(f64),
    /// The perturbation (or the clip) is all zeros on this part.
    Silent,
    /// The part does not exist for this clip.
    Absent,
}

impl DbEntry {
    pub fn value(self) -> Option<f64> {
        match self {
            DbEntry::Value(v) => Some(v),
            _ => None,
        }
    }

    fn measure(v: &[f64], x: &[f64], metric: DbMetric) -> Self {
        if v.is_empty() || x.is_empty() {
            return DbEntry::Absent;
        }
        match relative_db(v, x, metric) {
            Ok(db) => DbEntry::Value(db),
            Err(_) => DbEntry::Silent,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Part {
    Vocal,
    Background,
}

impl Part {
    pub fn name(self) -> &'static str {
        match self {
            Part::Vocal => "vocal",
            Part::Background => "background",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistortionRecord {
    pub index: usize,
    pub label: Option<ClassLabel>,
    pub partition: Option<EnergyPartition>,
    pub vocal_db_max: DbEntry,
    pub vocal_db_mean: DbEntry,
    pub background_db_max: DbEntry,
    pub background_db_mean: DbEntry,
}

impl DistortionRecord {
    pub fn entry(&self, part: Part, metric: DbMetric) -> DbEntry {
        match (part, metric) {
            (Part::Vocal, DbMetric::Max) => self.vocal_db_max,
            (Part::Vocal, DbMetric::Mean) => self.vocal_db_mean,
            (Part::Background, DbMetric::Max) => self.background_db_max,
            (Part::Background, DbMetric::Mean) => self.background_db_mean,
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = (Part, DbMetric, DbEntry)> + '_ {
        [Part::Vocal, Part::Background].into_iter().flat_map(move |part| {
            [DbMetric::Max, DbMetric::Mean]
                .into_iter()
                .map(move |metric| (part, metric, self.entry(part, metric)))
        })
    }
}

/// Mean relative dB per (part, metric), over entries that carry a value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PartSummary {
    pub vocal_db_max: Option<f64>,
    pub vocal_db_mean: Option<f64>,
    pub background_db_max: Option<f64>,
    pub background_db_mean: Option<f64>,
    pub samples: usize,
}

impl PartSummary {
    fn from_records<'a>(records: impl Iterator<Item = &'a DistortionRecord> + Clone) -> Self {
        let mean = |part, metric| {
            let (sum, n) = records
                .clone()
                .filter_map(|r| r.entry(part, metric).value())
                .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
            (n > 0).then(|| sum / n as f64)
        };
        Self {
            vocal_db_max: mean(Part::Vocal, DbMetric::Max),
            vocal_db_mean: mean(Part::Vocal, DbMetric::Mean),
            background_db_max: mean(Part::Background, DbMetric::Max),
            background_db_mean: mean(Part::Background, DbMetric::Mean),
            samples: records.count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDistortion {
    pub label: Option<ClassLabel>,
    pub summary: PartSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistortionReport {
    pub records: Vec<DistortionRecord>,
    pub per_class: Vec<ClassDistortion>,
    pub overall: PartSummary,
    /// Clips with no energy at all; no partition exists for them.
    pub skipped_no_energy: usize,
    /// Count of measurements that hit the all-zero sentinel.
    pub sentinel_entries: usize,
    pub valid_entries: usize,
    /// Whether `x + v` was clipped before measuring. The raw perturbation is
    /// always measured, so this is `false`.
    pub perturbation_clipped: bool,
    pub energy_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum DistortionError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("perturbation has {got} samples, clips have {expected}")]
    LengthMismatch { expected: usize, got: usize },
}

pub fn distortion_report(v: &[f64], dataset: &[Waveform]) -> Result<DistortionReport, DistortionError> {
    distortion_report_with(v, dataset, DEFAULT_ENERGY_FRACTION)
}

pub fn distortion_report_with(
    v: &[f64],
    dataset: &[Waveform],
    fraction: f64,
) -> Result<DistortionReport, DistortionError> {
    if dataset.is_empty() {
        return Err(DistortionError::EmptyDataset);
    }
    let mut records = Vec::with_capacity(dataset.len());
    let mut skipped = 0;
    for (index, clip) in dataset.iter().enumerate() {
        let x = clip.samples();
        if x.len() != v.len() {
            return Err(DistortionError::LengthMismatch {
                expected: x.len(),
                got: v.len(),
            });
        }
        let partition = match energy_partition(x, fraction) {
            Ok(p) => p,
            Err(PartitionError::NoEnergy) => {
                skipped += 1;
                continue;
            }
            Err(PartitionError::BadFraction(_)) => {
                // fraction is validated by the first clip; fall through as a skip
                skipped += 1;
                continue;
            }
        };
        let record = if clip.label() == Some(ClassLabel::Silence) {
            DistortionRecord {
                index,
                label: clip.label(),
                partition: Some(partition),
                vocal_db_max: DbEntry::Absent,
                vocal_db_mean: DbEntry::Absent,
                background_db_max: DbEntry::measure(v, x, DbMetric::Max),
                background_db_mean: DbEntry::measure(v, x, DbMetric::Mean),
            }
        } else {
            let vocal = partition.vocal();
            let (vv, xv) = (&v[vocal.clone()], &x[vocal]);
            let (vb, xb) = (partition.background(v), partition.background(x));
            DistortionRecord {
                index,
                label: clip.label(),
                partition: Some(partition),
                vocal_db_max: DbEntry::measure(vv, xv, DbMetric::Max),
                vocal_db_mean: DbEntry::measure(vv, xv, DbMetric::Mean),
                background_db_max: DbEntry::measure(&vb, &xb, DbMetric::Max),
                background_db_mean: DbEntry::measure(&vb, &xb, DbMetric::Mean),
            }
        };
        records.push(record);
    }

    let mut sentinel_entries = 0;
    let mut valid_entries = 0;
    for (_, _, e) in records.iter().flat_map(|r| r.entries()) {
        match e {
            DbEntry::Value(_) => valid_entries += 1,
            DbEntry::Silent => sentinel_entries += 1,
            DbEntry::Absent => {}
        }
    }

    let mut by_class: BTreeMap<Option<ClassLabel>, Vec<&DistortionRecord>> = BTreeMap::new();
    for r in &records {
        by_class.entry(r.label).or_default().push(r);
    }
    let per_class = by_class
        .into_iter()
        .map(|(label, rs)| ClassDistortion {
            label,
            summary: PartSummary::from_records(rs.into_iter()),
        })
        .collect();

    Ok(DistortionReport {
        overall: PartSummary::from_records(records.iter()),
        per_class,
        records,
        skipped_no_energy: skipped,
        sentinel_entries,
        valid_entries,
        perturbation_clipped: false,
        energy_fraction: fraction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::WAVEFORM_LEN as D;
    use alloc::vec;
    use approx::assert_abs_diff_eq;

    /// Speech-like clip: loud block in the middle, quiet alternating background.
    fn clip(background: f64, vocal: f64, label: ClassLabel) -> Waveform {
        let x: Vec<f64> = (0..D)
            .map(|i| {
                let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                if (6000..10000).contains(&i) {
                    sign * vocal
                } else {
                    sign * background
                }
            })
            .collect();
        Waveform::new(x, Some(label)).unwrap()
    }

    #[test]
    fn zero_perturbation_has_only_sentinels() {
        let data = [clip(0.001, 1.0, ClassLabel::Yes), clip(0.01, 0.5, ClassLabel::Silence)];
        let r = distortion_report(&vec![0.0; D], &data).unwrap();
        assert_eq!(r.valid_entries, 0);
        assert_eq!(r.sentinel_entries, 4 + 2);
        assert_eq!(r.overall.vocal_db_max, None);
    }

    #[test]
    fn quiet_uniform_perturbation_on_loud_vocal() {
        let data = [clip(0.001, 1.0, ClassLabel::Yes)];
        let r = distortion_report(&vec![0.001; D], &data).unwrap();
        let rec = &r.records[0];
        assert_abs_diff_eq!(rec.vocal_db_max.value().unwrap(), -60.0, epsilon = 1e-9);
        assert_abs_diff_eq!(rec.vocal_db_mean.value().unwrap(), -60.0, epsilon = 1e-9);
    }

    #[test]
    fn perturbation_as_loud_as_background() {
        // background holds ~11 % of the energy, so both 2.5 % tails fall in it
        let data = [clip(0.001, 0.005, ClassLabel::Yes)];
        let r = distortion_report(&vec![0.001; D], &data).unwrap();
        let rec = &r.records[0];
        let p = rec.partition.unwrap();
        assert!(p.start > 1 && p.start <= 6000 && p.end >= 10000);
        assert_abs_diff_eq!(rec.background_db_max.value().unwrap(), 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(rec.background_db_mean.value().unwrap(), 0.0, epsilon = 1e-9);
        assert!(rec.background_db_max.value().unwrap() > -32.0);
    }

    #[test]
    fn silence_reports_background_only() {
        let data = [clip(0.01, 0.01, ClassLabel::Silence)];
        let r = distortion_report(&vec![0.001; D], &data).unwrap();
        let rec = &r.records[0];
        assert_eq!(rec.vocal_db_max, DbEntry::Absent);
        assert_eq!(rec.vocal_db_mean, DbEntry::Absent);
        assert_abs_diff_eq!(rec.background_db_max.value().unwrap(), -20.0, epsilon = 1e-9);
    }

    #[test]
    fn empty_clip_is_skipped_and_counted() {
        let data = [Waveform::zeros(Some(ClassLabel::No)), clip(0.001, 1.0, ClassLabel::No)];
        let r = distortion_report(&vec![0.001; D], &data).unwrap();
        assert_eq!(r.skipped_no_energy, 1);
        assert_eq!(r.records.len(), 1);
        assert_eq!(r.records[0].index, 1);
        assert!(distortion_report(&vec![0.0; D], &[]).is_err());
    }
}
