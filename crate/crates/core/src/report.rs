//! Per-class fooling and transferability tables.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::attack::{fooled_if_eligible, AttackConfig, AttackError, Classifier, FoolCount};
use crate::audio::{ClassLabel, Waveform};
use crate::loudness::{relative_db, DbMetric};
use crate::par;

/// Fooling counts of one model on both splits.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCells {
    pub train: FoolCount,
    pub valid: FoolCount,
}

impl SplitCells {
    fn merge(self, other: SplitCells) -> SplitCells {
        SplitCells {
            train: self.train.merge(other.train),
            valid: self.valid.merge(other.valid),
        }
    }
}

/// One table row. `class` is `None` for the total row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub class: Option<ClassLabel>,
    pub model_a: SplitCells,
    pub model_b: Option<SplitCells>,
    /// Mean relative loudness (max metric) of the perturbation over the
    /// row's validation clips; `None` when undefined.
    pub mean_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub level: u8,
    pub classes: Vec<ClassLabel>,
    pub trials: usize,
    pub config: AttackConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoolingReport {
    pub meta: ReportMeta,
    pub rows: Vec<ReportRow>,
    pub total: ReportRow,
}

impl FoolingReport {
    pub fn row(&self, class: ClassLabel) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.class == Some(class))
    }
}

fn counts<C: Classifier + ?Sized>(model: &C, xs: &[&Waveform], v: &[f64]) -> FoolCount {
    par::map(xs, |x| fooled_if_eligible(model, x, v))
        .into_iter()
        .flatten()
        .fold(FoolCount::default(), |c, fooled| FoolCount {
            fooled: c.fooled + usize::from(fooled),
            eligible: c.eligible + 1,
        })
}

/// Mean of `relative_db(v, x, Max)` over the clips, skipping silent clips.
/// `None` if `v` is silent or no clip has a defined value.
fn mean_relative_db(v: &[f64], xs: &[&Waveform]) -> Option<f64> {
    let values: Vec<f64> = xs
        .iter()
        .filter_map(|x| relative_db(v, x.samples(), DbMetric::Max).ok())
        .collect();
    if values.is_empty() {
        return None;
    }
    Some(values.iter().sum::<f64>() / values.len() as f64)
}

fn cells<C: Classifier + ?Sized>(model: &C, train: &[&Waveform], valid: &[&Waveform], v: &[f64]) -> SplitCells {
    SplitCells {
        train: counts(model, train, v),
        valid: counts(model, valid, v),
    }
}

/// Evaluates `v` on model A and, if given, model B, per class of
/// `meta.classes` and pooled. Model B is only queried for predictions.
pub fn evaluate_perturbation<A, B>(
    v: &[f64],
    model_a: &A,
    model_b: Option<&B>,
    train: &[Waveform],
    valid: &[Waveform],
    meta: ReportMeta,
) -> Result<FoolingReport, AttackError>
where
    A: Classifier + ?Sized,
    B: Classifier + ?Sized,
{
    if let Some(x) = train.iter().chain(valid).find(|x| x.samples().len() != v.len()) {
        return Err(AttackError::LengthMismatch {
            expected: x.samples().len(),
            got: v.len(),
        });
    }
    let mut rows = Vec::with_capacity(meta.classes.len());
    for &class in &meta.classes {
        let tr: Vec<&Waveform> = train.iter().filter(|x| x.label() == Some(class)).collect();
        let va: Vec<&Waveform> = valid.iter().filter(|x| x.label() == Some(class)).collect();
        rows.push(ReportRow {
            class: Some(class),
            model_a: cells(model_a, &tr, &va, v),
            model_b: model_b.map(|b| cells(b, &tr, &va, v)),
            mean_db: mean_relative_db(v, &va),
        });
    }
    let total_a = rows.iter().fold(SplitCells::default(), |acc, r| acc.merge(r.model_a));
    let total_b = model_b.map(|_| {
        rows.iter()
            .filter_map(|r| r.model_b)
            .fold(SplitCells::default(), SplitCells::merge)
    });
    let valid_in: Vec<&Waveform> = valid
        .iter()
        .filter(|x| x.label().is_some_and(|l| meta.classes.contains(&l)))
        .collect();
    let total = ReportRow {
        class: None,
        model_a: total_a,
        model_b: total_b,
        mean_db: mean_relative_db(v, &valid_in),
    };
    Ok(FoolingReport { meta, rows, total })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::toy::Affine;
    use alloc::vec;

    fn clip(value: f64, label: ClassLabel) -> Waveform {
        let mut s = vec![0.0; 4];
        s[0] = value;
        Waveform::new(s, Some(label)).unwrap()
    }

    fn pert(first: f64) -> Vec<f64> {
        let mut v = vec![0.0; crate::WAVEFORM_LEN];
        v[0] = first;
        v
    }

    fn meta() -> ReportMeta {
        ReportMeta {
            level: 3,
            classes: vec![ClassLabel::Silence, ClassLabel::Unknown],
            trials: 1,
            config: AttackConfig::default(),
        }
    }

    // Class 0 when x[0] < 0, class 1 otherwise.
    fn model() -> Affine {
        Affine {
            w: vec![vec![-1.0, 0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0, 0.0]],
            b: vec![0.0, 0.0],
        }
    }

    #[test]
    fn zero_perturbation_fools_nothing() {
        let train = vec![clip(-0.5, ClassLabel::Silence), clip(0.5, ClassLabel::Unknown)];
        let valid = train.clone();
        let r = evaluate_perturbation::<_, Affine>(&pert(0.0), &model(), None, &train, &valid, meta()).unwrap();
        for row in r.rows.iter().chain([&r.total]) {
            assert_eq!(row.model_a.train.ratio(), Some(0.0));
            assert_eq!(row.model_a.valid.ratio(), Some(0.0));
            assert_eq!(row.mean_db, None);
            assert!(row.model_b.is_none());
        }
    }

    #[test]
    fn total_is_pooled() {
        let train = vec![
            clip(-0.1, ClassLabel::Silence),
            clip(-0.9, ClassLabel::Silence),
            clip(-0.9, ClassLabel::Silence),
            clip(0.9, ClassLabel::Unknown),
        ];
        let v = pert(0.3);
        let m = model();
        let r = evaluate_perturbation(&v, &m, Some(&m), &train, &train, meta()).unwrap();
        assert_eq!(r.rows[0].model_a.train, FoolCount { fooled: 1, eligible: 3 });
        assert_eq!(r.rows[1].model_a.train, FoolCount { fooled: 0, eligible: 1 });
        assert_eq!(r.total.model_a.train.ratio(), Some(0.25));
        assert_eq!(r.total.model_b.unwrap().valid, r.total.model_a.valid);
    }

    #[test]
    fn undefined_cells_stay_undefined() {
        let train = vec![clip(0.5, ClassLabel::Silence)];
        let r = evaluate_perturbation::<_, Affine>(&pert(0.1), &model(), None, &train, &[], meta()).unwrap();
        assert_eq!(r.rows[0].model_a.train.ratio(), None);
        assert_eq!(r.rows[0].model_a.valid.ratio(), None);
        assert_eq!(r.rows[1].model_a.train.ratio(), None);
    }

    #[test]
    fn mean_db_over_validation() {
        let valid = vec![clip(-0.5, ClassLabel::Silence), clip(0.05, ClassLabel::Unknown)];
        let v = pert(0.05);
        let r = evaluate_perturbation::<_, Affine>(&v, &model(), None, &[], &valid, meta()).unwrap();
        assert!((r.rows[0].mean_db.unwrap() + 20.0).abs() < 1e-9);
        assert!(r.rows[1].mean_db.unwrap().abs() < 1e-9);
        assert!((r.total.mean_db.unwrap() + 10.0).abs() < 1e-9);
    }

    #[test]
    fn length_mismatch() {
        let train = vec![clip(0.5, ClassLabel::Silence)];
        assert!(matches!(
            evaluate_perturbation::<_, Affine>(&[0.0; 3], &model(), None, &train, &[], meta()),
            Err(AttackError::LengthMismatch { expected: crate::WAVEFORM_LEN, got: 3 })
        ));
    }
}
