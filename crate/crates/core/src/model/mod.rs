//! Compact CNN speech-command classifier over MFCC features.
//!
//! The input waveform goes through the [`Frontend`], a per-coefficient affine
//! normalization fitted on the training set, two valid-padding convolutions
//! with ReLU and one dense layer producing one logit per class. Gradients of
//! any logit with respect to the raw waveform are exact (front-end VJP
//! included), in double precision.

mod net;
mod train;

use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use train::{accuracy, train, Adam, EpochLog, TrainConfig, TrainError, TrainLog};

use crate::attack::{Classifier, Differentiable, Linearization};
use crate::audio::ClassLabel;
use crate::dsp::{FeatureMap, Frontend, FrontendConfig, FrontendError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error(transparent)]
    Frontend(#[from] FrontendError),
    #[error("architecture does not fit a {frames}x{coeffs} feature map: {reason}")]
    Geometry {
        frames: usize,
        coeffs: usize,
        reason: &'static str,
    },
    #[error("label set has {labels} entries but the classifier has {classes} outputs")]
    LabelCount { labels: usize, classes: usize },
    #[error("parameter array `{name}` has {got} values, expected {expected}")]
    ArrayLength {
        name: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("parameter array `{0}` contains a non-finite value")]
    NonFinite(&'static str),
    #[error("class index {index} out of range for {classes} classes")]
    ClassIndex { index: usize, classes: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub time: usize,
    pub freq: usize,
    pub channels: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub conv1: ConvSpec,
    pub conv2: ConvSpec,
    pub classes: usize,
}

impl Architecture {
    /// 20x8 and 10x4 kernels with 64 channels each.
    pub fn standard(classes: usize) -> Self {
        Self::with_channels(classes, 64)
    }

    /// Same kernels, fewer channels; used for desk-scale runs.
    pub fn with_channels(classes: usize, channels: usize) -> Self {
        Self {
            conv1: ConvSpec {
                time: 20,
                freq: 8,
                channels,
            },
            conv2: ConvSpec {
                time: 10,
                freq: 4,
                channels,
            },
            classes,
        }
    }

    pub fn shapes(&self, frontend: &FrontendConfig) -> Result<Shapes, ModelError> {
        let frames = frontend.frames_for(crate::WAVEFORM_LEN);
        let coeffs = frontend.dct_coeffs;
        let err = |reason| ModelError::Geometry {
            frames,
            coeffs,
            reason,
        };
        if self.conv1.channels == 0 || self.conv2.channels == 0 || self.classes == 0 {
            return Err(err("channel and class counts must be positive"));
        }
        if self.conv1.time == 0 || self.conv1.freq == 0 || self.conv2.time == 0 || self.conv2.freq == 0 {
            return Err(err("kernel sizes must be positive"));
        }
        if self.conv1.time > frames || self.conv1.freq > coeffs {
            return Err(err("conv1 kernel larger than the feature map"));
        }
        let (t1, f1) = (frames - self.conv1.time + 1, coeffs - self.conv1.freq + 1);
        if self.conv2.time > t1 || self.conv2.freq > f1 {
            return Err(err("conv2 kernel larger than the conv1 output"));
        }
        let (t2, f2) = (t1 - self.conv2.time + 1, f1 - self.conv2.freq + 1);
        Ok(Shapes {
            frames,
            coeffs,
            t1,
            f1,
            t2,
            f2,
            flat: self.conv2.channels * t2 * f2,
        })
    }
}

/// Tensor extents derived from an architecture and a front-end.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shapes {
    pub frames: usize,
    pub coeffs: usize,
    pub t1: usize,
    pub f1: usize,
    pub t2: usize,
    pub f2: usize,
    pub flat: usize,
}

/// All classifier weights plus the front-end they were trained against.
///
/// Weight layouts: `conv1_w[out][time][freq]`, `conv2_w[out][in][time][freq]`,
/// `fc_w[class][channel][time][freq]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub architecture: Architecture,
    pub frontend: FrontendConfig,
    pub labels: Vec<ClassLabel>,
    pub seed: u64,
    pub norm_mean: Vec<f64>,
    pub norm_scale: Vec<f64>,
    pub conv1_w: Vec<f64>,
    pub conv1_b: Vec<f64>,
    pub conv2_w: Vec<f64>,
    pub conv2_b: Vec<f64>,
    pub fc_w: Vec<f64>,
    pub fc_b: Vec<f64>,
}

/// Names of the weight arrays in serialization order.
pub const ARRAY_NAMES: [&str; 8] = [
    "norm_mean",
    "norm_scale",
    "conv1_w",
    "conv1_b",
    "conv2_w",
    "conv2_b",
    "fc_w",
    "fc_b",
];

impl ModelParams {
    /// He-normal convolution and dense weights, zero biases, identity
    /// normalization.
    pub fn init(
        architecture: Architecture,
        frontend: FrontendConfig,
        labels: Vec<ClassLabel>,
        seed: u64,
    ) -> Result<Self, ModelError> {
        frontend.validate()?;
        let s = architecture.shapes(&frontend)?;
        if labels.len() != architecture.classes {
            return Err(ModelError::LabelCount {
                labels: labels.len(),
                classes: architecture.classes,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut he = |n: usize, fan_in: usize| -> Vec<f64> {
            let std = libm::sqrt(2.0 / fan_in as f64);
            (0..n)
                .map(|_| std * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
                .collect()
        };
        let (c1, c2) = (architecture.conv1, architecture.conv2);
        let conv1_w = he(c1.channels * c1.time * c1.freq, c1.time * c1.freq);
        let conv2_w = he(c2.channels * c1.channels * c2.time * c2.freq, c1.channels * c2.time * c2.freq);
        let fc_w = he(architecture.classes * s.flat, s.flat);
        Ok(Self {
            norm_mean: vec![0.0; s.coeffs],
            norm_scale: vec![1.0; s.coeffs],
            conv1_b: vec![0.0; c1.channels],
            conv2_b: vec![0.0; c2.channels],
            fc_b: vec![0.0; architecture.classes],
            conv1_w,
            conv2_w,
            fc_w,
            architecture,
            frontend,
            labels,
            seed,
        })
    }

    pub fn arrays(&self) -> [&[f64]; 8] {
        [
            &self.norm_mean,
            &self.norm_scale,
            &self.conv1_w,
            &self.conv1_b,
            &self.conv2_w,
            &self.conv2_b,
            &self.fc_w,
            &self.fc_b,
        ]
    }

    pub fn arrays_mut(&mut self) -> [&mut Vec<f64>; 8] {
        [
            &mut self.norm_mean,
            &mut self.norm_scale,
            &mut self.conv1_w,
            &mut self.conv1_b,
            &mut self.conv2_w,
            &mut self.conv2_b,
            &mut self.fc_w,
            &mut self.fc_b,
        ]
    }

    pub(crate) fn trainable_mut(&mut self) -> [&mut Vec<f64>; 6] {
        [
            &mut self.conv1_w,
            &mut self.conv1_b,
            &mut self.conv2_w,
            &mut self.conv2_b,
            &mut self.fc_w,
            &mut self.fc_b,
        ]
    }

    /// Expected length of every weight array, in [`ARRAY_NAMES`] order.
    pub fn expected_lengths(architecture: &Architecture, frontend: &FrontendConfig) -> Result<[usize; 8], ModelError> {
        let s = architecture.shapes(frontend)?;
        let (c1, c2) = (architecture.conv1, architecture.conv2);
        Ok([
            s.coeffs,
            s.coeffs,
            c1.channels * c1.time * c1.freq,
            c1.channels,
            c2.channels * c1.channels * c2.time * c2.freq,
            c2.channels,
            architecture.classes * s.flat,
            architecture.classes,
        ])
    }

    pub fn validate(&self) -> Result<Shapes, ModelError> {
        self.frontend.validate()?;
        let shapes = self.architecture.shapes(&self.frontend)?;
        if self.labels.len() != self.architecture.classes {
            return Err(ModelError::LabelCount {
                labels: self.labels.len(),
                classes: self.architecture.classes,
            });
        }
        let expected = Self::expected_lengths(&self.architecture, &self.frontend)?;
        for ((name, arr), want) in ARRAY_NAMES.iter().zip(self.arrays()).zip(expected) {
            if arr.len() != want {
                return Err(ModelError::ArrayLength {
                    name,
                    expected: want,
                    got: arr.len(),
                });
            }
            if arr.iter().any(|v| !v.is_finite()) {
                return Err(ModelError::NonFinite(name));
            }
        }
        Ok(shapes)
    }

    pub fn class_index(&self, label: ClassLabel) -> Option<usize> {
        self.labels.iter().position(|&l| l == label)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub logits: Vec<f64>,
    pub probabilities: Vec<f64>,
    /// Index into the model's label set.
    pub index: usize,
    pub label: ClassLabel,
}

/// First maximal index; NaN entries never win.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] || values[best].is_nan() {
            best = i;
        }
    }
    best
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| libm::exp(l - m)).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Validated parameters bundled with a ready front-end.
#[derive(Debug, Clone)]
pub struct Model {
    params: ModelParams,
    frontend: Frontend,
    shapes: Shapes,
}

impl Model {
    pub fn new(params: ModelParams) -> Result<Self, ModelError> {
        let shapes = params.validate()?;
        let frontend = Frontend::new(params.frontend.clone())?;
        Ok(Self {
            params,
            frontend,
            shapes,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn into_params(self) -> ModelParams {
        self.params
    }

    pub fn frontend(&self) -> &Frontend {
        &self.frontend
    }

    pub fn shapes(&self) -> Shapes {
        self.shapes
    }

    pub fn labels(&self) -> &[ClassLabel] {
        &self.params.labels
    }

    pub fn features(&self, x: &[f64]) -> FeatureMap {
        self.frontend
            .forward(x)
            .expect("waveform length is fixed and validated by the front-end")
    }

    pub fn logits_from_features(&self, features: &FeatureMap) -> Vec<f64> {
        net::forward(&self.params, &self.shapes, &features.values).logits
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.logits_from_features(&self.features(x))
    }

    pub fn forward(&self, x: &[f64]) -> Prediction {
        let logits = self.logits(x);
        let index = argmax(&logits);
        Prediction {
            probabilities: softmax(&logits),
            label: self.params.labels[index],
            index,
            logits,
        }
    }

    /// Gradient of the pre-softmax logit `class` with respect to every
    /// waveform sample.
    pub fn input_gradient(&self, x: &[f64], class: usize) -> Result<Vec<f64>, ModelError> {
        let k = self.params.architecture.classes;
        if class >= k {
            return Err(ModelError::ClassIndex { index: class, classes: k });
        }
        let mut g = vec![0.0; k];
        g[class] = 1.0;
        self.vjp(x, &g).map(|(_, grad)| grad)
    }

    /// Gradient of `sum_j weights[j] * logit_j` with respect to the waveform,
    /// plus the logits at `x`.
    pub fn vjp(&self, x: &[f64], weights: &[f64]) -> Result<(Vec<f64>, Vec<f64>), ModelError> {
        let (features, cache) = self.frontend.forward_cached(x)?;
        let act = net::forward(&self.params, &self.shapes, &features.values);
        let g_feat = net::backward(&self.params, &self.shapes, &act, weights, None, true)
            .expect("input gradient requested");
        let upstream = FeatureMap {
            values: g_feat,
            ..features
        };
        let grad = self.frontend.backward(&cache, &upstream)?;
        Ok((act.logits, grad))
    }
}

impl Classifier for Model {
    fn num_classes(&self) -> usize {
        self.params.architecture.classes
    }

    fn logits(&self, x: &[f64]) -> Vec<f64> {
        Model::logits(self, x)
    }

    fn class_index(&self, label: ClassLabel) -> Option<usize> {
        self.params.class_index(label)
    }
}

impl Differentiable for Model {
    fn logit_gradient(&self, x: &[f64], class: usize) -> Vec<f64> {
        self.input_gradient(x, class)
            .expect("class index checked by caller")
    }

    fn linearize(&self, x: &[f64], reference: usize) -> Linearization {
        let (features, cache) = self
            .frontend
            .forward_cached(x)
            .expect("waveform length is fixed");
        let act = net::forward(&self.params, &self.shapes, &features.values);
        let logits = act.logits.clone();
        if argmax(&logits) != reference {
            return Linearization {
                logits,
                gradients: None,
            };
        }
        let k = logits.len();
        let gradients = (0..k)
            .map(|j| {
                if j == reference {
                    return Vec::new();
                }
                // gradient of f_j - f_t in one backward pass
                let mut g = vec![0.0; k];
                g[j] = 1.0;
                g[reference] = -1.0;
                let g_feat = net::backward(&self.params, &self.shapes, &act, &g, None, true)
                    .expect("input gradient requested");
                let upstream = FeatureMap {
                    values: g_feat,
                    frames: features.frames,
                    coeffs: features.coeffs,
                };
                self.frontend
                    .backward(&cache, &upstream)
                    .expect("shapes come from the same forward pass")
            })
            .collect();
        Linearization {
            logits,
            gradients: Some(gradients),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::WAVEFORM_LEN as D;
    use rand::Rng;

    fn random_wave(seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..D).map(|_| rng.random_range(-0.5..0.5)).collect()
    }

    fn small_model(seed: u64) -> Model {
        let p = ModelParams::init(
            Architecture::with_channels(12, 4),
            FrontendConfig::default(),
            ClassLabel::ALL.to_vec(),
            seed,
        )
        .unwrap();
        Model::new(p).unwrap()
    }

    #[test]
    fn standard_shapes() {
        let s = Architecture::standard(12).shapes(&FrontendConfig::default()).unwrap();
        assert_eq!((s.frames, s.coeffs, s.t1, s.f1, s.t2, s.f2), (98, 13, 79, 6, 70, 3));
        assert_eq!(s.flat, 64 * 70 * 3);
        let s = Architecture::standard(12).shapes(&FrontendConfig::model_b()).unwrap();
        assert_eq!((s.f1, s.f2), (9, 6));
        let too_wide = Architecture {
            conv1: ConvSpec {
                time: 8,
                freq: 20,
                channels: 4,
            },
            ..Architecture::standard(12)
        };
        assert!(matches!(
            too_wide.shapes(&FrontendConfig::default()),
            Err(ModelError::Geometry { .. })
        ));
    }

    #[test]
    fn probabilities_normalized_and_label_is_argmax() {
        let m = small_model(1);
        for seed in 0..3 {
            let p = m.forward(&random_wave(seed));
            let sum: f64 = p.probabilities.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            assert_eq!(p.index, argmax(&p.logits));
            assert_eq!(p.label, ClassLabel::ALL[p.index]);
        }
    }

    #[test]
    fn zero_dense_layer_gives_uniform_output() {
        let mut p = small_model(2).into_params();
        p.fc_w.iter_mut().for_each(|w| *w = 0.0);
        p.fc_b.iter_mut().for_each(|w| *w = 0.0);
        let m = Model::new(p).unwrap();
        let pred = m.forward(&random_wave(3));
        for &q in &pred.probabilities {
            assert!((q - 1.0 / 12.0).abs() < 1e-12);
        }
        assert_eq!(pred.index, 0);
    }

    #[test]
    fn shifting_all_logits_keeps_prediction() {
        let m = small_model(4);
        let x = random_wave(5);
        let before = m.forward(&x);
        let mut p = m.into_params();
        p.fc_b.iter_mut().for_each(|b| *b += 3.75);
        let after = Model::new(p).unwrap().forward(&x);
        assert_eq!(before.index, after.index);
        for (a, b) in before.probabilities.iter().zip(&after.probabilities) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn argmax_ties_pick_lowest_index() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 2.0]), 1);
        assert_eq!(argmax(&[0.0; 5]), 0);
    }

    #[test]
    fn gradient_of_logit_difference_with_itself_is_zero() {
        let m = small_model(6);
        let x = random_wave(7);
        let mut w = vec![0.0; 12];
        w[3] = 1.0;
        w[3] -= 1.0;
        let (_, g) = m.vjp(&x, &w).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
        assert!(m.input_gradient(&x, 12).is_err());
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let m = small_model(8);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random_wave(10);
        let mut dir: Vec<f64> = (0..D).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = libm::sqrt(dir.iter().map(|d| d * d).sum::<f64>());
        dir.iter_mut().for_each(|d| *d /= n);
        let h = 1e-4;
        let plus: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + h * d).collect();
        let minus: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a - h * d).collect();
        let (lp, lm) = (m.logits(&plus), m.logits(&minus));
        for j in 0..12 {
            let g = m.input_gradient(&x, j).unwrap();
            let analytic: f64 = g.iter().zip(&dir).map(|(a, b)| a * b).sum();
            let numeric = (lp[j] - lm[j]) / (2.0 * h);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs());
            assert!(rel < 1e-4, "class {j}: {analytic} vs {numeric}");
        }
    }

    #[test]
    fn linearization_matches_gradient_differences() {
        let m = small_model(11);
        let x = random_wave(12);
        let t = m.forward(&x).index;
        let lin = m.linearize(&x, t);
        let grads = lin.gradients.unwrap();
        let gt = m.input_gradient(&x, t).unwrap();
        for j in [0, 5, 11] {
            if j == t {
                continue;
            }
            let gj = m.input_gradient(&x, j).unwrap();
            for i in (0..D).step_by(997) {
                assert!((grads[j][i] - (gj[i] - gt[i])).abs() <= 1e-9 * (1.0 + gj[i].abs()));
            }
        }
        assert!(m.linearize(&x, (t + 1) % 12).gradients.is_none());
    }

    #[test]
    fn past_last_frame_gradient_is_zero() {
        let p = ModelParams::init(
            Architecture::with_channels(12, 4),
            FrontendConfig::model_b(),
            ClassLabel::ALL.to_vec(),
            13,
        )
        .unwrap();
        let m = Model::new(p).unwrap();
        let g = m.input_gradient(&random_wave(14), 2).unwrap();
        assert!(g[15920..].iter().all(|&v| v == 0.0));
    }
}
