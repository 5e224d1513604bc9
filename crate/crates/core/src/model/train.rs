//! Seeded minibatch Adam on cross-entropy.
//!
//! The front-end has no trainable parameters, so features are computed once
//! per clip up front. Per-coefficient normalization statistics come from the
//! training features and are frozen into the parameters.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::net::{self, ParamGrads};
use super::{argmax, Architecture, Model, ModelError, ModelParams};
use crate::audio::{ClassLabel, Waveform};
use crate::dsp::{FeatureMap, Frontend, FrontendConfig};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean cross-entropy over the epoch's minibatches.
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyDataset,
    #[error("clip {index} has no label or a label outside the model's label set")]
    UnknownLabel { index: usize },
    #[error("loss became non-finite at epoch {epoch}, batch {batch} (last finite epoch loss {last_loss:?})")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        last_loss: Option<f64>,
    },
    #[error("invalid training configuration: {0}")]
    Config(&'static str),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Adam with bias correction over a list of flat parameter arrays.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64, sizes: &[usize]) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn update(&mut self, params: &mut [&mut Vec<f64>], grads: &[&[f64]]) {
        self.step += 1;
        let c1 = 1.0 - libm::pow(self.beta1, self.step as f64);
        let c2 = 1.0 - libm::pow(self.beta2, self.step as f64);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                p[i] -= self.lr * mh / (libm::sqrt(vh) + self.eps);
            }
        }
    }
}

fn cross_entropy(logits: &[f64], target: usize) -> (f64, Vec<f64>) {
    let probs = super::softmax(logits);
    let loss = -libm::log(probs[target].max(f64::MIN_POSITIVE));
    let mut grad = probs;
    grad[target] -= 1.0;
    (loss, grad)
}

/// Fits a fresh model of the given architecture on `dataset`.
///
/// Identical inputs and `cfg.seed` give bit-identical parameters.
pub fn train(
    dataset: &[Waveform],
    labels: &[ClassLabel],
    architecture: Architecture,
    frontend: FrontendConfig,
    cfg: &TrainConfig,
) -> Result<(ModelParams, TrainLog), TrainError> {
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if cfg.batch_size == 0 || !(cfg.learning_rate > 0.0) {
        return Err(TrainError::Config("batch size and learning rate must be positive"));
    }
    let targets: Vec<usize> = dataset
        .iter()
        .enumerate()
        .map(|(index, w)| {
            w.label()
                .and_then(|l| labels.iter().position(|&x| x == l))
                .ok_or(TrainError::UnknownLabel { index })
        })
        .collect::<Result<_, _>>()?;

    let mut params = ModelParams::init(architecture, frontend.clone(), labels.to_vec(), cfg.seed)?;
    let shapes = params.validate()?;
    let fe = Frontend::new(frontend).map_err(ModelError::from)?;
    let features: Vec<FeatureMap> = par::map(dataset, |w| {
        fe.forward(w.samples()).expect("fixed-length waveform")
    });
    fit_normalization(&mut params, &features);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7261_696e_5f6f_7264);
    let sizes: Vec<usize> = ParamGrads::zeros_like(&params)
        .arrays()
        .iter()
        .map(|a| a.len())
        .collect();
    let mut adam = Adam::new(cfg.learning_rate, &sizes);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut log = TrainLog::default();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for (batch_no, batch) in order.chunks(cfg.batch_size).enumerate() {
            let per_sample = par::map(batch, |&i| {
                let act = net::forward(&params, &shapes, &features[i].values);
                let (loss, g) = cross_entropy(&act.logits, targets[i]);
                let mut grads = ParamGrads::zeros_like(&params);
                net::backward(&params, &shapes, &act, &g, Some(&mut grads), false);
                (loss, argmax(&act.logits) == targets[i], grads)
            });
            let mut total = ParamGrads::zeros_like(&params);
            let mut batch_loss = 0.0;
            for (loss, ok, g) in &per_sample {
                batch_loss += loss;
                correct += usize::from(*ok);
                total.add(g);
            }
            if !batch_loss.is_finite() {
                return Err(TrainError::NonFiniteLoss {
                    epoch,
                    batch: batch_no,
                    last_loss: log.epochs.last().map(|e| e.loss),
                });
            }
            loss_sum += batch_loss;
            let scale = 1.0 / batch.len() as f64;
            let arrays = total.arrays();
            let scaled: Vec<Vec<f64>> = arrays
                .iter()
                .map(|a| a.iter().map(|g| g * scale).collect())
                .collect();
            let grads: Vec<&[f64]> = scaled.iter().map(|v| v.as_slice()).collect();
            adam.update(&mut params.trainable_mut(), &grads);
        }
        log.epochs.push(EpochLog {
            epoch,
            loss: loss_sum / dataset.len() as f64,
            accuracy: correct as f64 / dataset.len() as f64,
        });
    }
    params.validate()?;
    Ok((params, log))
}

fn fit_normalization(params: &mut ModelParams, features: &[FeatureMap]) {
    let c = params.norm_mean.len();
    let mut sum = vec![0.0; c];
    let mut sq = vec![0.0; c];
    let mut n = 0usize;
    for f in features {
        for row in f.values.chunks_exact(c) {
            for (j, &v) in row.iter().enumerate() {
                sum[j] += v;
                sq[j] += v * v;
            }
            n += 1;
        }
    }
    for j in 0..c {
        let mean = sum[j] / n as f64;
        let var = (sq[j] / n as f64 - mean * mean).max(0.0);
        params.norm_mean[j] = mean;
        params.norm_scale[j] = 1.0 / libm::sqrt(var + 1e-8);
    }
}

/// Fraction of `data` whose predicted label matches the clip's label.
pub fn accuracy(model: &Model, data: &[Waveform]) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let hits = par::map(data, |w| Some(model.forward(w.samples()).label) == w.label());
    hits.iter().filter(|&&h| h).count() as f64 / data.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_minimizes_a_quadratic() {
        let mut x = [vec![3.0, -2.0]];
        let mut adam = Adam::new(0.1, &[2]);
        for _ in 0..500 {
            let g: Vec<f64> = x[0].iter().map(|v| 2.0 * v).collect();
            let mut p: Vec<&mut Vec<f64>> = x.iter_mut().collect();
            adam.update(&mut p, &[&g]);
        }
        assert!(x[0].iter().all(|v| v.abs() < 1e-2));
    }

    #[test]
    fn cross_entropy_gradient_is_softmax_minus_onehot() {
        let (loss, g) = cross_entropy(&[0.0, 0.0], 1);
        assert!((loss - libm::log(2.0)).abs() < 1e-12);
        assert_eq!(g, vec![0.5, -0.5]);
    }

    #[test]
    fn rejects_empty_and_unlabelled() {
        let arch = Architecture::with_channels(2, 2);
        let labels = [ClassLabel::Yes, ClassLabel::No];
        let cfg = TrainConfig::default();
        assert_eq!(
            train(&[], &labels, arch, FrontendConfig::default(), &cfg).unwrap_err(),
            TrainError::EmptyDataset
        );
        let w = Waveform::zeros(Some(ClassLabel::Go));
        assert_eq!(
            train(&[w], &labels, arch, FrontendConfig::default(), &cfg).unwrap_err(),
            TrainError::UnknownLabel { index: 0 }
        );
    }
}
