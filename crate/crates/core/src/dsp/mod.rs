//! Differentiable MFCC front-end.
//!
//! Per frame: Hann window, zero-pad to `fft_size`, power spectrum `|DFT|^2`
//! over bins `0..=fft_size/2`, triangular mel filterbank, `ln(max(., floor))`,
//! orthonormal DCT-II truncated to `dct_coeffs`. [`Frontend::backward`] is the
//! exact vector-Jacobian product of that chain with respect to the waveform.

mod dct;
mod fft;
mod mel;

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dct::Dct;
pub use fft::FftPlan;
pub use mel::{hz_to_mel, mel_to_hz, MelBank};

use crate::audio::SAMPLE_RATE_HZ;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FrontendError {
    #[error("invalid front-end configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("waveform of {got} samples is shorter than one frame ({frame})")]
    TooShort { got: usize, frame: usize },
    #[error("gradient shape {got_frames}x{got_coeffs} does not match cached {frames}x{coeffs}")]
    ShapeMismatch {
        frames: usize,
        coeffs: usize,
        got_frames: usize,
        got_coeffs: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    Hann,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontendConfig {
    pub frame_length: usize,
    pub hop: usize,
    pub fft_size: usize,
    pub window: WindowKind,
    pub mel_bands: usize,
    pub mel_low_hz: f64,
    pub mel_high_hz: f64,
    pub dct_coeffs: usize,
    pub log_floor: f64,
    pub sample_rate_hz: u32,
}

impl Default for FrontendConfig {
    /// 30 ms frames, 10 ms hop, 40 mel bands, 13 cepstral coefficients.
    fn default() -> Self {
        Self {
            frame_length: 480,
            hop: 160,
            fft_size: 512,
            window: WindowKind::Hann,
            mel_bands: 40,
            mel_low_hz: 20.0,
            mel_high_hz: 7600.0,
            dct_coeffs: 13,
            log_floor: 1e-6,
            sample_rate_hz: SAMPLE_RATE_HZ,
        }
    }
}

impl FrontendConfig {
    /// Front-end of the first target model (the default).
    pub fn model_a() -> Self {
        Self::default()
    }

    /// Front-end of the second target model: 25 ms frames, 64 mel bands,
    /// 16 cepstral coefficients.
    pub fn model_b() -> Self {
        Self {
            frame_length: 400,
            mel_bands: 64,
            dct_coeffs: 16,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), FrontendError> {
        use FrontendError::InvalidConfig as E;
        if !self.fft_size.is_power_of_two() || self.fft_size < 2 {
            return Err(E("fft_size must be a power of two"));
        }
        if self.frame_length == 0 || self.frame_length > self.fft_size {
            return Err(E("frame_length must be in 1..=fft_size"));
        }
        if self.hop == 0 {
            return Err(E("hop must be positive"));
        }
        if self.mel_bands == 0 || self.dct_coeffs == 0 || self.dct_coeffs > self.mel_bands {
            return Err(E("dct_coeffs must be in 1..=mel_bands"));
        }
        if !(self.log_floor > 0.0) {
            return Err(E("log_floor must be positive"));
        }
        let nyquist = self.sample_rate_hz as f64 / 2.0;
        if !(self.mel_low_hz >= 0.0 && self.mel_low_hz < self.mel_high_hz && self.mel_high_hz <= nyquist) {
            return Err(E("mel range must satisfy 0 <= low < high <= nyquist"));
        }
        Ok(())
    }

    /// `floor((samples - frame_length) / hop) + 1`
    pub fn frames_for(&self, samples: usize) -> usize {
        if samples < self.frame_length {
            0
        } else {
            (samples - self.frame_length) / self.hop + 1
        }
    }
}

/// Time x coefficient MFCC matrix, row-major by frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub values: Vec<f64>,
    pub frames: usize,
    pub coeffs: usize,
}

impl FeatureMap {
    pub fn zeros(frames: usize, coeffs: usize) -> Self {
        Self {
            values: vec![0.0; frames * coeffs],
            frames,
            coeffs,
        }
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.values[t * self.coeffs..(t + 1) * self.coeffs]
    }

    pub fn get(&self, t: usize, c: usize) -> f64 {
        self.values[t * self.coeffs + c]
    }
}

/// Intermediates of one forward pass, needed by [`Frontend::backward`].
#[derive(Debug, Clone)]
pub struct MfccCache {
    frames: usize,
    /// DFT bins `0..=fft_size/2` for each frame
    spectra: Vec<Complex64>,
    /// mel energies before flooring, `frames x bands`
    mel: Vec<f64>,
    samples: usize,
}

impl MfccCache {
    /// Mel energies (before the log floor), `frames x bands`.
    pub fn mel_energies(&self) -> &[f64] {
        &self.mel
    }
}

/// A validated front-end with its window, FFT plan, filterbank and DCT basis.
#[derive(Debug, Clone)]
pub struct Frontend {
    cfg: FrontendConfig,
    window: Vec<f64>,
    fft: FftPlan,
    mel: MelBank,
    dct: Dct,
}

impl Frontend {
    pub fn new(cfg: FrontendConfig) -> Result<Self, FrontendError> {
        cfg.validate()?;
        let n = cfg.frame_length;
        // periodic Hann
        let window = (0..n)
            .map(|i| 0.5 - 0.5 * libm::cos(2.0 * PI * i as f64 / n as f64))
            .collect();
        let mel = MelBank::new(
            cfg.mel_bands,
            cfg.fft_size,
            cfg.sample_rate_hz as f64,
            cfg.mel_low_hz,
            cfg.mel_high_hz,
        );
        Ok(Self {
            fft: FftPlan::new(cfg.fft_size),
            dct: Dct::new(cfg.mel_bands, cfg.dct_coeffs),
            window,
            mel,
            cfg,
        })
    }

    pub fn config(&self) -> &FrontendConfig {
        &self.cfg
    }

    pub fn mel_bank(&self) -> &MelBank {
        &self.mel
    }

    fn bins(&self) -> usize {
        self.cfg.fft_size / 2 + 1
    }

    /// Power spectrum of the frame starting at `start`.
    pub fn frame_spectrum(&self, x: &[f64], start: usize, buf: &mut [Complex64]) {
        let n = self.cfg.frame_length;
        for (i, b) in buf.iter_mut().enumerate() {
            *b = if i < n {
                Complex64::new(self.window[i] * x[start + i], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            };
        }
        self.fft.forward(buf);
    }

    pub fn forward(&self, x: &[f64]) -> Result<FeatureMap, FrontendError> {
        self.forward_cached(x).map(|(f, _)| f)
    }

    pub fn forward_cached(&self, x: &[f64]) -> Result<(FeatureMap, MfccCache), FrontendError> {
        let frames = self.cfg.frames_for(x.len());
        if frames == 0 {
            return Err(FrontendError::TooShort {
                got: x.len(),
                frame: self.cfg.frame_length,
            });
        }
        let bins = self.bins();
        let bands = self.cfg.mel_bands;
        let coeffs = self.cfg.dct_coeffs;
        let mut features = FeatureMap::zeros(frames, coeffs);
        let mut spectra = Vec::with_capacity(frames * bins);
        let mut mel = vec![0.0; frames * bands];
        let mut buf = vec![Complex64::new(0.0, 0.0); self.cfg.fft_size];
        let mut power = vec![0.0; bins];
        let mut logmel = vec![0.0; bands];
        for t in 0..frames {
            self.frame_spectrum(x, t * self.cfg.hop, &mut buf);
            for (p, c) in power.iter_mut().zip(&buf[..bins]) {
                *p = c.norm_sqr();
            }
            spectra.extend_from_slice(&buf[..bins]);
            let mel_t = &mut mel[t * bands..(t + 1) * bands];
            self.mel.apply(&power, mel_t);
            for (l, &m) in logmel.iter_mut().zip(mel_t.iter()) {
                *l = libm::log(m.max(self.cfg.log_floor));
            }
            self.dct
                .forward(&logmel, &mut features.values[t * coeffs..(t + 1) * coeffs]);
        }
        Ok((
            features,
            MfccCache {
                frames,
                spectra,
                mel,
                samples: x.len(),
            },
        ))
    }

    /// Vector-Jacobian product: gradient of `<upstream, mfcc(x)>` with respect
    /// to `x`. Mel energies at or below the floor pass no gradient.
    pub fn backward(&self, cache: &MfccCache, upstream: &FeatureMap) -> Result<Vec<f64>, FrontendError> {
        let coeffs = self.cfg.dct_coeffs;
        if upstream.frames != cache.frames || upstream.coeffs != coeffs {
            return Err(FrontendError::ShapeMismatch {
                frames: cache.frames,
                coeffs,
                got_frames: upstream.frames,
                got_coeffs: upstream.coeffs,
            });
        }
        let bins = self.bins();
        let bands = self.cfg.mel_bands;
        let n = self.cfg.frame_length;
        let mut grad = vec![0.0; cache.samples];
        let mut g_log = vec![0.0; bands];
        let mut g_power = vec![0.0; bins];
        let mut buf = vec![Complex64::new(0.0, 0.0); self.cfg.fft_size];
        for t in 0..cache.frames {
            let g_c = upstream.frame(t);
            if g_c.iter().all(|&g| g == 0.0) {
                continue;
            }
            self.dct.transpose(g_c, &mut g_log);
            let mel_t = &cache.mel[t * bands..(t + 1) * bands];
            let mut live = false;
            for (g, &m) in g_log.iter_mut().zip(mel_t) {
                if m > self.cfg.log_floor {
                    *g /= m;
                    live |= *g != 0.0;
                } else {
                    *g = 0.0;
                }
            }
            if !live {
                continue;
            }
            self.mel.apply_transpose(&g_log, &mut g_power);
            // dP_k/dy_n = 2 Re(conj(X_k) e^{-2 pi i k n / N}), so the frame
            // gradient is Re(FFT(c)) with c_k = 2 g_k conj(X_k) on k <= N/2.
            let spec_t = &cache.spectra[t * bins..(t + 1) * bins];
            for (k, b) in buf.iter_mut().enumerate() {
                *b = if k < bins {
                    spec_t[k].conj() * (2.0 * g_power[k])
                } else {
                    Complex64::new(0.0, 0.0)
                };
            }
            self.fft.forward(&mut buf);
            let start = t * self.cfg.hop;
            for i in 0..n {
                grad[start + i] += self.window[i] * buf[i].re;
            }
        }
        Ok(grad)
    }
}

/// Convenience wrapper: validated front-end + forward pass.
pub fn mfcc_forward(x: &[f64], cfg: &FrontendConfig) -> Result<(FeatureMap, MfccCache), FrontendError> {
    Frontend::new(cfg.clone())?.forward_cached(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::WAVEFORM_LEN as D;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_signal(seed: u64, amp: f64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..D).map(|_| rng.random_range(-amp..amp)).collect()
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn frame_count_and_config_checks() {
        let cfg = FrontendConfig::default();
        assert_eq!(cfg.frames_for(D), 98);
        assert_eq!(FrontendConfig::model_b().frames_for(D), 98);
        let bad = FrontendConfig {
            frame_length: 600,
            ..FrontendConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = FrontendConfig {
            dct_coeffs: 41,
            ..FrontendConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = FrontendConfig {
            log_floor: 0.0,
            ..FrontendConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = FrontendConfig {
            fft_size: 500,
            ..FrontendConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn silent_input_gives_constant_log_mel() {
        let fe = Frontend::new(FrontendConfig::default()).unwrap();
        let f = fe.forward(&vec![0.0; D]).unwrap();
        let c0 = libm::log(1e-6) * libm::sqrt(40.0);
        for t in 0..f.frames {
            assert!((f.get(t, 0) - c0).abs() < 1e-9);
            for c in 1..f.coeffs {
                assert!(f.get(t, c).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn tone_lands_in_its_mel_band() {
        let fe = Frontend::new(FrontendConfig::default()).unwrap();
        let x: Vec<f64> = (0..D)
            .map(|i| libm::sin(2.0 * PI * 1000.0 * i as f64 / 16000.0))
            .collect();
        let (_, cache) = fe.forward_cached(&x).unwrap();
        // brute-force DFT of the first windowed frame
        let n = 480;
        let power: Vec<f64> = (0..=256)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (i, &s) in x[..n].iter().enumerate() {
                    let w = 0.5 - 0.5 * libm::cos(2.0 * PI * i as f64 / n as f64);
                    let th = -2.0 * PI * (k * i) as f64 / 512.0;
                    re += w * s * libm::cos(th);
                    im += w * s * libm::sin(th);
                }
                re * re + im * im
            })
            .collect();
        let dense = fe.mel_bank().dense();
        let oracle: Vec<f64> = dense.iter().map(|row| dot(row, &power)).collect();
        let argmax = |v: &[f64]| {
            v.iter()
                .enumerate()
                .fold(0, |b, (i, &e)| if e > v[b] { i } else { b })
        };
        let expected = argmax(&oracle);
        for t in 0..cache.frames {
            assert_eq!(argmax(&cache.mel_energies()[t * 40..(t + 1) * 40]), expected);
        }
        for (a, b) in cache.mel_energies()[..40].iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
        }
        // band whose triangle peaks closest to 1 kHz
        let lo = hz_to_mel(20.0);
        let hi = hz_to_mel(7600.0);
        let centers: Vec<f64> = (1..=40).map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / 41.0)).collect();
        let nearest = centers
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - 1000.0).abs().total_cmp(&(b.1 - 1000.0).abs()))
            .unwrap()
            .0;
        assert_eq!(expected, nearest);
    }

    #[test]
    fn doubling_amplitude_adds_ln4_to_log_mel() {
        let fe = Frontend::new(FrontendConfig::default()).unwrap();
        let x = random_signal(5, 0.25);
        let x2: Vec<f64> = x.iter().map(|s| 2.0 * s).collect();
        let (_, c1) = fe.forward_cached(&x).unwrap();
        let (_, c2) = fe.forward_cached(&x2).unwrap();
        for (a, b) in c1.mel_energies().iter().zip(c2.mel_energies()) {
            assert!(*a > 1e-6);
            assert!((libm::log(*b) - libm::log(*a) - libm::log(4.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let fe = Frontend::new(FrontendConfig::default()).unwrap();
        let (f, cache) = fe.forward_cached(&random_signal(1, 0.5)).unwrap();
        let g = fe.backward(&cache, &FeatureMap::zeros(f.frames, f.coeffs)).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
        let bad = FeatureMap::zeros(f.frames - 1, f.coeffs);
        assert!(matches!(fe.backward(&cache, &bad), Err(FrontendError::ShapeMismatch { .. })));
    }

    fn directional_check(cfg: FrontendConfig, seed: u64) {
        let fe = Frontend::new(cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_signal(seed, 0.5);
        let (f, cache) = fe.forward_cached(&x).unwrap();
        let u = FeatureMap {
            values: (0..f.values.len()).map(|_| rng.random_range(-1.0..1.0)).collect(),
            ..f.clone()
        };
        let mut dir: Vec<f64> = (0..D).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = libm::sqrt(dot(&dir, &dir));
        dir.iter_mut().for_each(|d| *d /= norm);
        let g = fe.backward(&cache, &u).unwrap();
        let analytic = dot(&g, &dir);
        let h = 1e-4;
        let shifted = |s: f64| {
            let xs: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + s * d).collect();
            dot(&fe.forward(&xs).unwrap().values, &u.values)
        };
        let numeric = (shifted(h) - shifted(-h)) / (2.0 * h);
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs());
        assert!(rel < 1e-5, "rel err {rel}: {analytic} vs {numeric}");
    }

    #[test]
    fn backward_matches_finite_differences() {
        for seed in 0..4 {
            directional_check(FrontendConfig::default(), seed);
            directional_check(FrontendConfig::model_b(), 100 + seed);
        }
    }

    #[test]
    fn samples_past_last_frame_get_no_gradient() {
        let cfg = FrontendConfig::model_b();
        let fe = Frontend::new(cfg.clone()).unwrap();
        let (f, cache) = fe.forward_cached(&random_signal(2, 0.5)).unwrap();
        let ones = FeatureMap {
            values: vec![1.0; f.values.len()],
            ..f
        };
        let g = fe.backward(&cache, &ones).unwrap();
        let reach = (cfg.frames_for(D) - 1) * cfg.hop + cfg.frame_length;
        assert_eq!(reach, 15920);
        assert!(g[reach..].iter().all(|&v| v == 0.0));
        assert!(g[..reach].iter().any(|&v| v != 0.0));
    }

    #[test]
    fn floored_frames_pass_no_gradient() {
        let fe = Frontend::new(FrontendConfig::default()).unwrap();
        // signal only in the first half; second-half frames are all-floor
        let mut x = random_signal(9, 0.5);
        x[8000..].iter_mut().for_each(|s| *s = 0.0);
        let (f, cache) = fe.forward_cached(&x).unwrap();
        let ones = FeatureMap {
            values: vec![1.0; f.values.len()],
            ..f
        };
        let g = fe.backward(&cache, &ones).unwrap();
        // the last frame touching nonzero input starts at 7840
        assert!(g[7840 + 480..].iter().all(|&v| v == 0.0));
        assert!(g[8000..7840 + 480].iter().any(|&v| v != 0.0));
    }
}
