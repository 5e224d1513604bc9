//! Core algorithms for crafting and auditing universal adversarial
//! perturbations against a small MFCC + CNN speech-command classifier.
//!
//! The crate is `no_std` (with `alloc`) when built without the default `std`
//! feature. Everything here is a pure function over in-memory buffers; file
//! formats, dataset directories and the command line live in the companion
//! `uap-audio` crate.
//!
//! Layout:
//!
//! - [`audio`]: waveform and label types, fixed 1 s / 16 kHz geometry.
//! - [`loudness`], [`partition`], [`distortion`]: dB metrics and the
//!   vocal/background audit.
//! - [`dsp`]: differentiable MFCC front-end with exact vector-Jacobian products.
//! - [`model`]: two-conv + fully-connected classifier, training and input gradients.
//! - [`attack`]: Deepfool, l_p-ball projection, fooling rates, UAP-HC and the
//!   universality-level experiment driver.
//! - [`report`]: per-class fooling tables for two target models.
//! - [`synth`]: seeded synthetic command corpus for desk-scale runs.

#![cfg_attr(not(feature = "std"), no_std)]
// `!(x > 0.0)` is how NaN gets rejected alongside non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod attack;
pub mod audio;
pub mod distortion;
pub mod dsp;
pub mod error;
pub mod loudness;
pub mod model;
pub mod par;
pub mod partition;
pub mod report;
pub mod synth;

pub use audio::{ClassLabel, Waveform, SAMPLE_RATE_HZ, WAVEFORM_LEN};
pub use error::{AudioError, DbError};
