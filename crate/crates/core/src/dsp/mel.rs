//! Triangular mel filterbank over power-spectrum bins.

use alloc::vec::Vec;

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * libm::log10(1.0 + hz / 700.0)
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (libm::pow(10.0, mel / 2595.0) - 1.0)
}

/// Sparse triangular filters; `filters[m]` lists `(bin, weight)` pairs with
/// strictly positive weight.
#[derive(Debug, Clone)]
pub struct MelBank {
    pub(crate) filters: Vec<Vec<(usize, f64)>>,
    pub(crate) bins: usize,
}

impl MelBank {
    pub fn new(bands: usize, fft_size: usize, sample_rate: f64, low_hz: f64, high_hz: f64) -> Self {
        let bins = fft_size / 2 + 1;
        let (lo, hi) = (hz_to_mel(low_hz), hz_to_mel(high_hz));
        let edges: Vec<f64> = (0..bands + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (bands + 1) as f64))
            .collect();
        let bin_hz = sample_rate / fft_size as f64;
        let filters = (0..bands)
            .map(|m| {
                let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
                (0..bins)
                    .filter_map(|k| {
                        let f = k as f64 * bin_hz;
                        let w = if f > left && f <= center {
                            (f - left) / (center - left)
                        } else if f > center && f < right {
                            (right - f) / (right - center)
                        } else {
                            0.0
                        };
                        (w > 0.0).then_some((k, w))
                    })
                    .collect()
            })
            .collect();
        Self { filters, bins }
    }

    pub fn bands(&self) -> usize {
        self.filters.len()
    }

    pub fn apply(&self, power: &[f64], out: &mut [f64]) {
        for (o, filter) in out.iter_mut().zip(&self.filters) {
            *o = filter.iter().map(|&(k, w)| w * power[k]).sum();
        }
    }

    /// Transpose product: `out[k] = sum_m w[m][k] * g[m]`.
    pub fn apply_transpose(&self, g: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (&gm, filter) in g.iter().zip(&self.filters) {
            if gm != 0.0 {
                for &(k, w) in filter {
                    out[k] += w * gm;
                }
            }
        }
    }

    /// Dense `bands x bins` matrix, mostly for inspection and tests.
    pub fn dense(&self) -> Vec<Vec<f64>> {
        self.filters
            .iter()
            .map(|f| {
                let mut row = alloc::vec![0.0; self.bins];
                for &(k, w) in f {
                    row[k] = w;
                }
                row
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mel_scale_round_trips() {
        for hz in [0.0, 20.0, 1000.0, 7600.0] {
            assert!((mel_to_hz(hz_to_mel(hz)) - hz).abs() < 1e-9);
        }
    }

    #[test]
    fn filters_are_nonnegative_and_overlap_pairwise() {
        let bank = MelBank::new(40, 512, 16000.0, 20.0, 7600.0);
        let dense = bank.dense();
        assert_eq!(dense.len(), 40);
        for k in 0..bank.bins {
            let f = k as f64 * 16000.0 / 512.0;
            let users = dense.iter().filter(|row| row[k] > 0.0).count();
            assert!(dense.iter().all(|row| row[k] >= 0.0));
            if (20.0..=7600.0).contains(&f) {
                assert!(users <= 2, "bin {k} feeds {users} filters");
            } else {
                assert_eq!(users, 0);
            }
        }
        assert!(bank.filters.iter().all(|f| !f.is_empty()));
    }
}
