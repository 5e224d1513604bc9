//! Seeded synthetic command dataset: each class is a band-limited tone or
//! chirp prototype with per-clip jitter over a low noise floor.

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{ClassLabel, Waveform, SAMPLE_RATE_HZ, WAVEFORM_LEN};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("class count must be in 1..=12, got {0}")]
    ClassCount(usize),
    #[error("samples per class must be positive")]
    Empty,
    #[error("validation fraction must be in [0, 1), got {0}")]
    ValidFraction(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub classes: usize,
    pub per_class: usize,
    pub seed: u64,
    /// Share of each class held out for validation (taken from the end).
    pub valid_fraction: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            classes: 4,
            per_class: 250,
            seed: 7,
            valid_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub labels: Vec<ClassLabel>,
    pub train: Vec<Waveform>,
    pub valid: Vec<Waveform>,
}

/// Label set for `n` synthetic classes: the first `n` commands, then
/// `unknown` and `silence` for 11 and 12 classes.
pub fn synth_labels(n: usize) -> Result<Vec<ClassLabel>, SynthError> {
    if n == 0 || n > ClassLabel::ALL.len() {
        return Err(SynthError::ClassCount(n));
    }
    let mut labels: Vec<ClassLabel> = ClassLabel::COMMANDS.iter().copied().take(n).collect();
    if n > 10 {
        labels.push(ClassLabel::Unknown);
    }
    if n > 11 {
        labels.push(ClassLabel::Silence);
    }
    Ok(labels)
}

/// Round to the nearest 16-bit PCM level.
pub fn quantize_pcm16(x: f64) -> f64 {
    libm::round(x * 32768.0).clamp(-32768.0, 32767.0) / 32768.0
}

struct Voice {
    f0: f64,
    /// Relative frequency change over the voiced segment.
    glide: f64,
    harmonics: [f64; 3],
}

fn prototype(label: ClassLabel) -> Option<Voice> {
    let i = ClassLabel::COMMANDS.iter().position(|&c| c == label)?;
    Some(Voice {
        f0: 180.0 * libm::pow(1.32, i as f64),
        glide: if i % 2 == 0 { 0.25 } else { -0.2 },
        harmonics: [1.0, 0.5 / (1.0 + (i % 3) as f64), 0.25 * ((i % 2) as f64)],
    })
}

/// Noise floor under voiced clips. It sits near one 16-bit step so that
/// silent frames fall under the front-end's energy floor.
const NOISE_STD: (f64, f64) = (0.000005, 0.000015);
/// Background level of `silence` clips.
const SILENCE_STD: (f64, f64) = (0.0005, 0.002);
/// Peak amplitude range of the voiced segment.
const VOICE_AMP: (f64, f64) = (0.02, 0.08);

/// One synthetic clip for `label`, fully determined by `seed`.
pub fn synth_clip(label: ClassLabel, seed: u64) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fs = SAMPLE_RATE_HZ as f64;
    let (lo, hi) = if label == ClassLabel::Silence { SILENCE_STD } else { NOISE_STD };
    let noise_std = rng.random_range(lo..hi);
    let noise = Normal::new(0.0, noise_std).expect("positive std");
    let mut x: Vec<f64> = (0..WAVEFORM_LEN).map(|_| noise.sample(&mut rng)).collect();

    let voice = match label {
        ClassLabel::Silence => None,
        ClassLabel::Unknown => Some(Voice {
            f0: rng.random_range(150.0..2500.0),
            glide: rng.random_range(-0.3..0.3),
            harmonics: [1.0, rng.random_range(0.0..0.6), rng.random_range(0.0..0.3)],
        }),
        _ => prototype(label),
    };
    if let Some(voice) = voice {
        let len = rng.random_range(0.35..0.6) * fs;
        let onset = rng.random_range(0.1..0.9 - len / fs) * fs;
        let f0 = voice.f0 * rng.random_range(0.96..1.04);
        let glide = voice.glide * rng.random_range(0.8..1.2);
        let amp = rng.random_range(VOICE_AMP.0..VOICE_AMP.1);
        let phase: f64 = rng.random_range(0.0..2.0 * PI);
        let (start, n) = (onset as usize, len as usize);
        let mut acc = 0.0;
        for t in 0..n {
            let u = t as f64 / n as f64;
            let f = f0 * (1.0 + glide * u);
            acc += 2.0 * PI * f / fs;
            let s = libm::sin(PI * u);
            let env = s * s;
            let tone: f64 = voice
                .harmonics
                .iter()
                .enumerate()
                .map(|(h, a)| a * libm::sin((h + 1) as f64 * (acc + phase)))
                .sum();
            x[start + t] += amp * env * tone / 1.75;
        }
    }
    let samples = x.into_iter().map(quantize_pcm16).collect();
    Waveform::new(samples, Some(label)).expect("synthetic clip within range")
}

fn clip_seed(master: u64, label: ClassLabel, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(((label.index() as u64) << 32) | index as u64);
    rng.random()
}

/// Generates the dataset class by class. The last `valid_fraction` of each
/// class's clips form the validation split.
pub fn synth_dataset(cfg: &SynthConfig) -> Result<SynthDataset, SynthError> {
    let labels = synth_labels(cfg.classes)?;
    if cfg.per_class == 0 {
        return Err(SynthError::Empty);
    }
    if !(0.0..1.0).contains(&cfg.valid_fraction) {
        return Err(SynthError::ValidFraction(cfg.valid_fraction));
    }
    let n_valid = libm::round(cfg.per_class as f64 * cfg.valid_fraction) as usize;
    let n_train = cfg.per_class - n_valid;
    let mut train = Vec::with_capacity(n_train * labels.len());
    let mut valid = Vec::with_capacity(n_valid * labels.len());
    for &label in &labels {
        let clips = crate::par::map_range(cfg.per_class, |i| synth_clip(label, clip_seed(cfg.seed, label, i)));
        for (i, clip) in clips.into_iter().enumerate() {
            if i < n_train {
                train.push(clip);
            } else {
                valid.push(clip);
            }
        }
    }
    Ok(SynthDataset { labels, train, valid })
}
