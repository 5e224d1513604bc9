//! Individual and universal adversarial perturbations.
//!
//! - [`deepfool`]: minimal untargeted perturbation by iterated linearization.
//! - [`project`]: Euclidean projection onto the l2 or l-inf ball of radius xi.
//! - [`raw_fooling_rate`] / [`fooling_ratio`]: prediction-change rates.
//! - [`uap_hc`]: hill-climbing universal perturbation.
//! - [`run_level_experiment`]: multi-trial driver for the three universality
//!   levels.
//!
//! Models are evaluated on `clip(x + v)` everywhere except inside Deepfool,
//! which treats the classifier as a function on all of R^d.

mod deepfool;
mod level;
mod uap;

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use deepfool::{deepfool, DeepfoolOutcome, DEGENERATE_GRADIENT_NORM};
pub use level::{run_level_experiment, trial_seed, LevelOutcome, TrialRecord, UniversalityLevel};
pub use uap::{uap_hc, CandidateStatus, HillClimbEntry, UapOutcome};

use crate::audio::{add_clipped, ClassLabel, Waveform};
use crate::model::argmax;
use crate::par;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AttackError {
    #[error("sample set is empty")]
    EmptySet,
    #[error("fooling ratio undefined: no sample is originally classified correctly")]
    Undefined,
    #[error("all boundary gradients vanish (norm below {DEGENERATE_GRADIENT_NORM:e})")]
    DegenerateGradient,
    #[error("invalid attack configuration: {0}")]
    Config(&'static str),
    #[error("perturbation has {got} samples, inputs have {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid universality level: {0}")]
    Level(&'static str),
    #[error("class {label} needs {needed} samples but only {available} are available")]
    InsufficientSamples {
        label: ClassLabel,
        needed: usize,
        available: usize,
    },
}

/// A classifier that can be queried for logits. Only predictions are needed
/// for evaluation; attacks additionally need [`Differentiable`].
pub trait Classifier: Sync {
    fn num_classes(&self) -> usize;

    fn logits(&self, x: &[f64]) -> Vec<f64>;

    /// Argmax of the logits, lowest index on ties.
    fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.logits(x))
    }

    /// Output index of `label`, if the classifier knows it.
    fn class_index(&self, label: ClassLabel) -> Option<usize> {
        let i = label.index();
        (i < self.num_classes()).then_some(i)
    }
}

/// First-order model of the decision boundaries around a point.
#[derive(Debug, Clone, PartialEq)]
pub struct Linearization {
    pub logits: Vec<f64>,
    /// `gradients[j] = grad f_j - grad f_reference`; the reference entry is
    /// empty. `None` when the point is no longer classified as the reference.
    pub gradients: Option<Vec<Vec<f64>>>,
}

pub trait Differentiable: Classifier {
    /// Gradient of logit `class` with respect to the input.
    fn logit_gradient(&self, x: &[f64], class: usize) -> Vec<f64>;

    /// Logits at `x` and, while `x` is still classified as `reference`, the
    /// gradients of every logit difference `f_j - f_reference`.
    fn linearize(&self, x: &[f64], reference: usize) -> Linearization {
        let logits = self.logits(x);
        if argmax(&logits) != reference {
            return Linearization {
                logits,
                gradients: None,
            };
        }
        let base = self.logit_gradient(x, reference);
        let gradients = (0..logits.len())
            .map(|j| {
                if j == reference {
                    Vec::new()
                } else {
                    self.logit_gradient(x, j)
                        .iter()
                        .zip(&base)
                        .map(|(a, b)| a - b)
                        .collect()
                }
            })
            .collect();
        Linearization {
            logits,
            gradients: Some(gradients),
        }
    }
}

/// Order of the norm bounding a perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Norm {
    #[serde(rename = "2")]
    L2,
    #[serde(rename = "inf")]
    LInf,
}

impl Norm {
    pub fn of(self, v: &[f64]) -> f64 {
        match self {
            Norm::L2 => l2_norm(v),
            Norm::LInf => v.iter().fold(0.0_f64, |m, x| m.max(x.abs())),
        }
    }
}

impl fmt::Display for Norm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Norm::L2 => "2",
            Norm::LInf => "inf",
        })
    }
}

impl FromStr for Norm {
    type Err = AttackError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "2" | "l2" => Ok(Norm::L2),
            "inf" | "linf" | "infinity" => Ok(Norm::LInf),
            _ => Err(AttackError::Config("p must be 2 or inf")),
        }
    }
}

pub fn l2_norm(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum())
}

/// Attack hyperparameters. Defaults: overshoot 0.1, 100 Deepfool iterations,
/// l2 budget 0.1, stop once the fooling rate reaches 0.9, at most 5 passes,
/// 5 trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub overshoot: f64,
    pub deepfool_max_iters: usize,
    pub xi: f64,
    pub p: Norm,
    pub alpha: f64,
    pub max_passes: usize,
    pub trials: usize,
    pub rng_seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            overshoot: 0.1,
            deepfool_max_iters: 100,
            xi: 0.1,
            p: Norm::L2,
            alpha: 0.1,
            max_passes: 5,
            trials: 5,
            rng_seed: 0,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<(), AttackError> {
        if !(self.overshoot > 0.0) {
            return Err(AttackError::Config("overshoot must be positive"));
        }
        if !(self.xi > 0.0) {
            return Err(AttackError::Config("xi must be positive"));
        }
        // alpha = 1 is accepted as the degenerate "no work" setting
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(AttackError::Config("alpha must lie in (0, 1]"));
        }
        if self.deepfool_max_iters == 0 {
            return Err(AttackError::Config("max-iters must be at least 1"));
        }
        if self.trials == 0 {
            return Err(AttackError::Config("trials must be at least 1"));
        }
        Ok(())
    }

    /// Target raw fooling rate `1 - alpha`.
    pub fn target_rate(&self) -> f64 {
        1.0 - self.alpha
    }
}

/// Additive waveform perturbation with its norm budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub values: Vec<f64>,
    pub p: Norm,
    pub xi: f64,
}

impl Perturbation {
    pub fn zeros(len: usize, p: Norm, xi: f64) -> Self {
        Self {
            values: alloc::vec![0.0; len],
            p,
            xi,
        }
    }

    pub fn norm(&self) -> f64 {
        self.p.of(&self.values)
    }

    pub fn projected(&self) -> Self {
        Self {
            values: project(&self.values, self.p, self.xi),
            ..self.clone()
        }
    }
}

/// Euclidean projection onto `{w : ||w||_p <= xi}` for `p` in {2, inf}.
///
/// For `p = 2` the vector is scaled radially; the scale is nudged down by a
/// few ulps when rounding would leave the result outside the ball, so the
/// output always satisfies the bound and projecting again is the identity.
pub fn project(v: &[f64], p: Norm, xi: f64) -> Vec<f64> {
    match p {
        Norm::LInf => v.iter().map(|x| x.clamp(-xi, xi)).collect(),
        Norm::L2 => {
            let n = l2_norm(v);
            if n <= xi {
                return v.to_vec();
            }
            let mut scale = xi / n;
            loop {
                let out: Vec<f64> = v.iter().map(|x| x * scale).collect();
                if l2_norm(&out) <= xi {
                    return out;
                }
                scale *= 1.0 - 4.0 * f64::EPSILON;
            }
        }
    }
}

fn check_len(xs: &[Waveform], v: &[f64]) -> Result<(), AttackError> {
    match xs.first() {
        None => Err(AttackError::EmptySet),
        Some(x) if x.samples().len() != v.len() => Err(AttackError::LengthMismatch {
            expected: x.samples().len(),
            got: v.len(),
        }),
        Some(_) => Ok(()),
    }
}

/// Predicted class of every clip, unperturbed.
pub fn clean_predictions<C: Classifier + ?Sized>(model: &C, xs: &[Waveform]) -> Vec<usize> {
    par::map(xs, |x| model.predict(x.samples()))
}

/// Predicted class of every `clip(x + v)`.
pub fn perturbed_predictions<C: Classifier + ?Sized>(model: &C, xs: &[Waveform], v: &[f64]) -> Vec<usize> {
    par::map(xs, |x| model.predict(&add_clipped(x.samples(), v)))
}

/// Fraction of all samples whose prediction changes under `v`.
pub fn raw_fooling_rate<C: Classifier + ?Sized>(model: &C, xs: &[Waveform], v: &[f64]) -> Result<f64, AttackError> {
    check_len(xs, v)?;
    let clean = clean_predictions(model, xs);
    let perturbed = perturbed_predictions(model, xs, v);
    let changed = clean.iter().zip(&perturbed).filter(|(a, b)| a != b).count();
    Ok(changed as f64 / xs.len() as f64)
}

/// Numerator and denominator of a fooling ratio: `eligible` samples were
/// originally classified correctly, `fooled` of those change prediction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "FoolCountRepr", from = "FoolCountRepr")]
pub struct FoolCount {
    pub fooled: usize,
    pub eligible: usize,
}

#[derive(Serialize, Deserialize)]
struct FoolCountRepr {
    fooled: usize,
    eligible: usize,
    fr: Option<f64>,
}

impl From<FoolCount> for FoolCountRepr {
    fn from(c: FoolCount) -> Self {
        Self {
            fooled: c.fooled,
            eligible: c.eligible,
            fr: c.ratio(),
        }
    }
}

impl From<FoolCountRepr> for FoolCount {
    fn from(r: FoolCountRepr) -> Self {
        Self {
            fooled: r.fooled,
            eligible: r.eligible,
        }
    }
}

impl FoolCount {
    /// `None` when no sample was eligible.
    pub fn ratio(&self) -> Option<f64> {
        (self.eligible > 0).then(|| self.fooled as f64 / self.eligible as f64)
    }

    pub fn merge(self, other: FoolCount) -> FoolCount {
        FoolCount {
            fooled: self.fooled + other.fooled,
            eligible: self.eligible + other.eligible,
        }
    }
}

/// Per-sample outcome used by the fooling-ratio computations: `None` if the
/// clip is unlabeled, misclassified or its label is unknown to the model,
/// otherwise whether `v` changed the prediction.
pub fn fooled_if_eligible<C: Classifier + ?Sized>(model: &C, x: &Waveform, v: &[f64]) -> Option<bool> {
    let truth = x.label().and_then(|l| model.class_index(l))?;
    let clean = model.predict(x.samples());
    if clean != truth {
        return None;
    }
    Some(model.predict(&add_clipped(x.samples(), v)) != clean)
}

pub fn fooling_count<C: Classifier + ?Sized>(model: &C, xs: &[Waveform], v: &[f64]) -> FoolCount {
    par::map(xs, |x| fooled_if_eligible(model, x, v))
        .into_iter()
        .flatten()
        .fold(FoolCount::default(), |c, fooled| FoolCount {
            fooled: c.fooled + usize::from(fooled),
            eligible: c.eligible + 1,
        })
}

/// Fraction of originally correctly classified samples whose prediction
/// changes under `v`.
pub fn fooling_ratio<C: Classifier + ?Sized>(model: &C, xs: &[Waveform], v: &[f64]) -> Result<f64, AttackError> {
    check_len(xs, v)?;
    fooling_count(model, xs, v).ratio().ok_or(AttackError::Undefined)
}

#[cfg(test)]
pub(crate) mod toy {
    //! Hand-built classifiers for exact tests.
    use super::*;

    /// `logits = W x + b` on the first `W[0].len()` coordinates.
    pub struct Affine {
        pub w: Vec<Vec<f64>>,
        pub b: Vec<f64>,
    }

    impl Classifier for Affine {
        fn num_classes(&self) -> usize {
            self.w.len()
        }

        fn logits(&self, x: &[f64]) -> Vec<f64> {
            self.w
                .iter()
                .zip(&self.b)
                .map(|(row, b)| b + row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>())
                .collect()
        }
    }

    impl Differentiable for Affine {
        fn logit_gradient(&self, x: &[f64], class: usize) -> Vec<f64> {
            let mut g = self.w[class].clone();
            g.resize(x.len(), 0.0);
            g
        }
    }
}
