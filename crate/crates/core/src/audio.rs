use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::AudioError;

/// Sample rate of every waveform handled by the crate.
pub const SAMPLE_RATE_HZ: u32 = 16_000;

/// Number of samples in a waveform (one second at 16 kHz).
pub const WAVEFORM_LEN: usize = 16_000;

/// The twelve speech-command labels, in their stable integer order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassLabel {
    Silence,
    Unknown,
    Yes,
    No,
    Up,
    Down,
    Left,
    Right,
    On,
    Off,
    Stop,
    Go,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 12] = [
        ClassLabel::Silence,
        ClassLabel::Unknown,
        ClassLabel::Yes,
        ClassLabel::No,
        ClassLabel::Up,
        ClassLabel::Down,
        ClassLabel::Left,
        ClassLabel::Right,
        ClassLabel::On,
        ClassLabel::Off,
        ClassLabel::Stop,
        ClassLabel::Go,
    ];

    /// The ten spoken commands, without `silence` and `unknown`.
    pub const COMMANDS: [ClassLabel; 10] = [
        ClassLabel::Yes,
        ClassLabel::No,
        ClassLabel::Up,
        ClassLabel::Down,
        ClassLabel::Left,
        ClassLabel::Right,
        ClassLabel::On,
        ClassLabel::Off,
        ClassLabel::Stop,
        ClassLabel::Go,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ClassLabel::Silence => "silence",
            ClassLabel::Unknown => "unknown",
            ClassLabel::Yes => "yes",
            ClassLabel::No => "no",
            ClassLabel::Up => "up",
            ClassLabel::Down => "down",
            ClassLabel::Left => "left",
            ClassLabel::Right => "right",
            ClassLabel::On => "on",
            ClassLabel::Off => "off",
            ClassLabel::Stop => "stop",
            ClassLabel::Go => "go",
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClassLabel {
    type Err = AudioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        // the Speech Commands corpus keeps noise clips under this name
        if lower == "_background_noise_" {
            return Ok(ClassLabel::Silence);
        }
        Self::ALL
            .iter()
            .copied()
            .find(|l| l.name() == lower)
            .ok_or_else(|| AudioError::UnknownLabel(s.into()))
    }
}

/// One second of normalized mono audio at 16 kHz.
///
/// Samples are always exactly [`WAVEFORM_LEN`] long and lie in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    label: Option<ClassLabel>,
}

impl Waveform {
    /// Builds a waveform, zero-padding short input on the right.
    pub fn new(mut samples: Vec<f64>, label: Option<ClassLabel>) -> Result<Self, AudioError> {
        if samples.len() > WAVEFORM_LEN {
            return Err(AudioError::TooLong(samples.len()));
        }
        if let Some((index, &value)) = samples
            .iter()
            .enumerate()
            .find(|(_, v)| !(-1.0..=1.0).contains(*v))
        {
            return Err(AudioError::OutOfRange { index, value });
        }
        samples.resize(WAVEFORM_LEN, 0.0);
        Ok(Self { samples, label })
    }

    /// Builds a waveform from arbitrary values, clipping them into `[-1, 1]`.
    /// NaN samples become zero.
    pub fn clipped(samples: &[f64], label: Option<ClassLabel>) -> Result<Self, AudioError> {
        if samples.len() > WAVEFORM_LEN {
            return Err(AudioError::TooLong(samples.len()));
        }
        let mut out = Vec::with_capacity(WAVEFORM_LEN);
        out.extend(samples.iter().map(|&s| clip_sample(s)));
        out.resize(WAVEFORM_LEN, 0.0);
        Ok(Self {
            samples: out,
            label,
        })
    }

    pub fn zeros(label: Option<ClassLabel>) -> Self {
        Self {
            samples: alloc::vec![0.0; WAVEFORM_LEN],
            label,
        }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn label(&self) -> Option<ClassLabel> {
        self.label
    }

    pub fn with_label(mut self, label: Option<ClassLabel>) -> Self {
        self.label = label;
        self
    }

    pub fn sample_rate_hz(&self) -> u32 {
        SAMPLE_RATE_HZ
    }

    /// `clip(x + v)`, the input actually presented to a model under attack.
    pub fn perturbed(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.samples.len());
        self.samples
            .iter()
            .zip(v)
            .map(|(&x, &d)| clip_sample(x + d))
            .collect()
    }
}

pub(crate) fn clip_sample(x: f64) -> f64 {
    if x.is_nan() {
        0.0
    } else {
        x.clamp(-1.0, 1.0)
    }
}

/// Elementwise `clip(x + v)` over raw slices.
pub fn add_clipped(x: &[f64], v: &[f64]) -> Vec<f64> {
    x.iter().zip(v).map(|(&a, &b)| clip_sample(a + b)).collect()
}
