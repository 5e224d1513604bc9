//! Hill-climbing universal perturbation (UAP-HC).
//!
//! Starting from `v = 0`, each pass visits the samples in a seeded order. For
//! a sample not yet fooled by `v`, Deepfool is run at `clip(x + v)`, the
//! candidate `P(v + dv)` is formed, and it replaces `v` only if it strictly
//! raises the raw fooling rate over the whole set. Passes repeat until the
//! rate reaches `1 - alpha` or `max_passes` is spent.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    clean_predictions, deepfool, perturbed_predictions, project, AttackConfig, AttackError, Differentiable,
    Perturbation,
};
use crate::audio::{add_clipped, Waveform};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateStatus {
    /// Deepfool succeeded and the candidate was scored.
    Evaluated,
    /// Deepfool ran out of iterations; the sample is retried next pass.
    DeepfoolFailed,
    /// All boundary gradients vanished at this sample.
    DegenerateGradient,
}

/// One visited, not-yet-fooled sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HillClimbEntry {
    pub pass: usize,
    pub sample: usize,
    pub rate_before: f64,
    /// Raw fooling rate of the candidate; absent when Deepfool failed.
    pub rate_after: Option<f64>,
    pub accepted: bool,
    pub status: CandidateStatus,
    pub deepfool_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UapOutcome {
    pub perturbation: Perturbation,
    /// Raw fooling rate of the returned perturbation on the crafting set.
    pub rate: f64,
    pub fooled: usize,
    pub passes: usize,
    pub log: Vec<HillClimbEntry>,
}

impl UapOutcome {
    /// Rates of the accepted candidates, in acceptance order.
    pub fn accepted_rates(&self) -> impl Iterator<Item = f64> + '_ {
        self.log
            .iter()
            .filter(|e| e.accepted)
            .filter_map(|e| e.rate_after)
    }
}

pub fn uap_hc<M: Differentiable + ?Sized>(
    model: &M,
    xs: &[Waveform],
    cfg: &AttackConfig,
) -> Result<UapOutcome, AttackError> {
    cfg.validate()?;
    let first = xs.first().ok_or(AttackError::EmptySet)?;
    let d = first.samples().len();
    let n = xs.len();
    let rate_of = |count: usize| count as f64 / n as f64;

    let clean = clean_predictions(model, xs);
    let mut v = alloc::vec![0.0; d];
    // predictions under the current v
    let mut current = clean.clone();
    let mut fooled = 0usize;
    let mut log = Vec::new();

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.rng_seed));

    let target = cfg.target_rate();
    let mut passes = 0;
    while rate_of(fooled) < target && passes < cfg.max_passes {
        for &i in &order {
            if current[i] != clean[i] {
                continue;
            }
            let x_adv = add_clipped(xs[i].samples(), &v);
            let mut entry = HillClimbEntry {
                pass: passes,
                sample: i,
                rate_before: rate_of(fooled),
                rate_after: None,
                accepted: false,
                status: CandidateStatus::Evaluated,
                deepfool_iterations: 0,
            };
            match deepfool(model, &x_adv, cfg.overshoot, cfg.deepfool_max_iters) {
                Err(AttackError::DegenerateGradient) => {
                    entry.status = CandidateStatus::DegenerateGradient;
                }
                Err(e) => return Err(e),
                Ok(out) if !out.success => {
                    entry.status = CandidateStatus::DeepfoolFailed;
                    entry.deepfool_iterations = out.iterations;
                }
                Ok(out) => {
                    entry.deepfool_iterations = out.iterations;
                    let summed: Vec<f64> = v.iter().zip(&out.perturbation).map(|(a, b)| a + b).collect();
                    let candidate = project(&summed, cfg.p, cfg.xi);
                    let preds = perturbed_predictions(model, xs, &candidate);
                    let count = preds.iter().zip(&clean).filter(|(a, b)| a != b).count();
                    entry.rate_after = Some(rate_of(count));
                    if count > fooled {
                        entry.accepted = true;
                        v = candidate;
                        current = preds;
                        fooled = count;
                    }
                }
            }
            log.push(entry);
        }
        passes += 1;
    }

    Ok(UapOutcome {
        perturbation: Perturbation {
            values: v,
            p: cfg.p,
            xi: cfg.xi,
        },
        rate: rate_of(fooled),
        fooled,
        passes,
        log,
    })
}
