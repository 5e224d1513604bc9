//! Convolution stack: normalize -> conv1 + ReLU -> conv2 + ReLU -> dense.
//!
//! Tensors are flat row-major buffers: features `T x C`, conv outputs
//! `channels x time x freq`. Convolutions are stride 1, valid padding.

use alloc::vec;
use alloc::vec::Vec;

use super::{ModelParams, Shapes};

pub(crate) struct Activations {
    pub z: Vec<f64>,
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
    pub logits: Vec<f64>,
}

/// Gradients with the same layout as the trainable arrays of [`ModelParams`].
#[derive(Debug, Clone)]
pub(crate) struct ParamGrads {
    pub conv1_w: Vec<f64>,
    pub conv1_b: Vec<f64>,
    pub conv2_w: Vec<f64>,
    pub conv2_b: Vec<f64>,
    pub fc_w: Vec<f64>,
    pub fc_b: Vec<f64>,
}

impl ParamGrads {
    pub fn zeros_like(p: &ModelParams) -> Self {
        Self {
            conv1_w: vec![0.0; p.conv1_w.len()],
            conv1_b: vec![0.0; p.conv1_b.len()],
            conv2_w: vec![0.0; p.conv2_w.len()],
            conv2_b: vec![0.0; p.conv2_b.len()],
            fc_w: vec![0.0; p.fc_w.len()],
            fc_b: vec![0.0; p.fc_b.len()],
        }
    }

    pub fn arrays(&self) -> [&[f64]; 6] {
        [
            &self.conv1_w,
            &self.conv1_b,
            &self.conv2_w,
            &self.conv2_b,
            &self.fc_w,
            &self.fc_b,
        ]
    }

    pub fn add(&mut self, other: &ParamGrads) {
        let dst = [
            &mut self.conv1_w,
            &mut self.conv1_b,
            &mut self.conv2_w,
            &mut self.conv2_b,
            &mut self.fc_w,
            &mut self.fc_b,
        ];
        for (d, s) in dst.into_iter().zip(other.arrays()) {
            d.iter_mut().zip(s).for_each(|(a, b)| *a += b);
        }
    }
}

#[inline]
fn axpy(out: &mut [f64], w: f64, x: &[f64]) {
    for (o, v) in out.iter_mut().zip(x) {
        *o += w * v;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn forward(p: &ModelParams, s: &Shapes, features: &[f64]) -> Activations {
    let c = s.coeffs;
    let z: Vec<f64> = features
        .iter()
        .enumerate()
        .map(|(i, &v)| (v - p.norm_mean[i % c]) * p.norm_scale[i % c])
        .collect();

    let (k1t, k1f, n1) = (p.architecture.conv1.time, p.architecture.conv1.freq, p.architecture.conv1.channels);
    let mut h1 = vec![0.0; n1 * s.t1 * s.f1];
    for o in 0..n1 {
        let out = &mut h1[o * s.t1 * s.f1..(o + 1) * s.t1 * s.f1];
        out.iter_mut().for_each(|v| *v = p.conv1_b[o]);
        for dt in 0..k1t {
            for df in 0..k1f {
                let w = p.conv1_w[(o * k1t + dt) * k1f + df];
                for t in 0..s.t1 {
                    let src = &z[(t + dt) * c + df..][..s.f1];
                    axpy(&mut out[t * s.f1..(t + 1) * s.f1], w, src);
                }
            }
        }
        out.iter_mut().for_each(|v| *v = v.max(0.0));
    }

    let (k2t, k2f, n2) = (p.architecture.conv2.time, p.architecture.conv2.freq, p.architecture.conv2.channels);
    let plane1 = s.t1 * s.f1;
    let plane2 = s.t2 * s.f2;
    let mut h2 = vec![0.0; n2 * plane2];
    for o in 0..n2 {
        let out = &mut h2[o * plane2..(o + 1) * plane2];
        out.iter_mut().for_each(|v| *v = p.conv2_b[o]);
        for i in 0..n1 {
            let inp = &h1[i * plane1..(i + 1) * plane1];
            for dt in 0..k2t {
                for df in 0..k2f {
                    let w = p.conv2_w[((o * n1 + i) * k2t + dt) * k2f + df];
                    if w == 0.0 {
                        continue;
                    }
                    for t in 0..s.t2 {
                        let src = &inp[(t + dt) * s.f1 + df..][..s.f2];
                        axpy(&mut out[t * s.f2..(t + 1) * s.f2], w, src);
                    }
                }
            }
        }
        out.iter_mut().for_each(|v| *v = v.max(0.0));
    }

    let logits = p
        .fc_w
        .chunks_exact(s.flat)
        .zip(&p.fc_b)
        .map(|(row, b)| b + dot(row, &h2))
        .collect();
    Activations { z, h1, h2, logits }
}

/// Backpropagates `g_logits`. Accumulates parameter gradients into `grads`
/// when given, and returns the gradient with respect to the raw (pre-
/// normalization) features when `want_input` is set.
pub(crate) fn backward(
    p: &ModelParams,
    s: &Shapes,
    act: &Activations,
    g_logits: &[f64],
    mut grads: Option<&mut ParamGrads>,
    want_input: bool,
) -> Option<Vec<f64>> {
    let mut g_h2 = vec![0.0; s.flat];
    for (j, &g) in g_logits.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        axpy(&mut g_h2, g, &p.fc_w[j * s.flat..(j + 1) * s.flat]);
        if let Some(gr) = grads.as_deref_mut() {
            gr.fc_b[j] += g;
            axpy(&mut gr.fc_w[j * s.flat..(j + 1) * s.flat], g, &act.h2);
        }
    }
    for (g, &h) in g_h2.iter_mut().zip(&act.h2) {
        if h <= 0.0 {
            *g = 0.0;
        }
    }

    let (k2t, k2f, n2) = (p.architecture.conv2.time, p.architecture.conv2.freq, p.architecture.conv2.channels);
    let n1 = p.architecture.conv1.channels;
    let plane1 = s.t1 * s.f1;
    let plane2 = s.t2 * s.f2;
    let mut g_h1 = vec![0.0; n1 * plane1];
    for o in 0..n2 {
        let g_out = &g_h2[o * plane2..(o + 1) * plane2];
        if g_out.iter().all(|&g| g == 0.0) {
            continue;
        }
        if let Some(gr) = grads.as_deref_mut() {
            gr.conv2_b[o] += g_out.iter().sum::<f64>();
        }
        for i in 0..n1 {
            let inp = &act.h1[i * plane1..(i + 1) * plane1];
            let g_in = &mut g_h1[i * plane1..(i + 1) * plane1];
            for dt in 0..k2t {
                for df in 0..k2f {
                    let widx = ((o * n1 + i) * k2t + dt) * k2f + df;
                    let w = p.conv2_w[widx];
                    let mut gw = 0.0;
                    for t in 0..s.t2 {
                        let go = &g_out[t * s.f2..(t + 1) * s.f2];
                        let off = (t + dt) * s.f1 + df;
                        if grads.is_some() {
                            gw += dot(go, &inp[off..off + s.f2]);
                        }
                        axpy(&mut g_in[off..off + s.f2], w, go);
                    }
                    if let Some(gr) = grads.as_deref_mut() {
                        gr.conv2_w[widx] += gw;
                    }
                }
            }
        }
    }
    for (g, &h) in g_h1.iter_mut().zip(&act.h1) {
        if h <= 0.0 {
            *g = 0.0;
        }
    }

    let (k1t, k1f) = (p.architecture.conv1.time, p.architecture.conv1.freq);
    let c = s.coeffs;
    let mut g_z = if want_input { vec![0.0; s.frames * c] } else { Vec::new() };
    for o in 0..n1 {
        let g_out = &g_h1[o * plane1..(o + 1) * plane1];
        if g_out.iter().all(|&g| g == 0.0) {
            continue;
        }
        if let Some(gr) = grads.as_deref_mut() {
            gr.conv1_b[o] += g_out.iter().sum::<f64>();
        }
        for dt in 0..k1t {
            for df in 0..k1f {
                let widx = (o * k1t + dt) * k1f + df;
                let w = p.conv1_w[widx];
                let mut gw = 0.0;
                for t in 0..s.t1 {
                    let go = &g_out[t * s.f1..(t + 1) * s.f1];
                    let off = (t + dt) * c + df;
                    if grads.is_some() {
                        gw += dot(go, &act.z[off..off + s.f1]);
                    }
                    if want_input {
                        axpy(&mut g_z[off..off + s.f1], w, go);
                    }
                }
                if let Some(gr) = grads.as_deref_mut() {
                    gr.conv1_w[widx] += gw;
                }
            }
        }
    }
    want_input.then(|| {
        g_z.iter()
            .enumerate()
            .map(|(i, g)| g * p.norm_scale[i % c])
            .collect()
    })
}
