use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{l2_norm, AttackError, Differentiable};
use crate::model::argmax;

/// Boundary gradients with a smaller l2 norm are ignored.
pub const DEGENERATE_GRADIENT_NORM: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeepfoolOutcome {
    /// Accumulated perturbation `x_final - x`.
    pub perturbation: Vec<f64>,
    /// Number of update steps taken.
    pub iterations: usize,
    /// Whether the predicted class changed within the iteration budget.
    pub success: bool,
    pub original_class: usize,
    pub final_class: usize,
}

/// Deepfool: repeatedly linearize every decision boundary around the current
/// point, step to the closest one (in l2) and overshoot it by `1 + overshoot`,
/// until the predicted class differs from the original one.
///
/// Exhausting `max_iters` is not an error: the best-effort perturbation is
/// returned with `success == false`.
pub fn deepfool<M: Differentiable + ?Sized>(
    model: &M,
    x: &[f64],
    overshoot: f64,
    max_iters: usize,
) -> Result<DeepfoolOutcome, AttackError> {
    let original = argmax(&model.logits(x));
    let mut current = x.to_vec();
    let mut total = vec![0.0; x.len()];
    let mut iterations = 0;
    loop {
        let lin = model.linearize(&current, original);
        let Some(grads) = lin.gradients else {
            return Ok(DeepfoolOutcome {
                perturbation: total,
                iterations,
                success: true,
                original_class: original,
                final_class: argmax(&lin.logits),
            });
        };
        if iterations == max_iters {
            return Ok(DeepfoolOutcome {
                perturbation: total,
                iterations,
                success: false,
                original_class: original,
                final_class: original,
            });
        }
        // closest linearized boundary: argmin_j |f'_j| / ||w'_j||
        let mut best: Option<(f64, usize, f64)> = None;
        for (j, w) in grads.iter().enumerate() {
            if j == original {
                continue;
            }
            let norm = l2_norm(w);
            if norm < DEGENERATE_GRADIENT_NORM {
                continue;
            }
            let dist = (lin.logits[j] - lin.logits[original]).abs() / norm;
            if best.is_none_or(|(d, _, _)| dist < d) {
                best = Some((dist, j, norm));
            }
        }
        let (_, l, norm) = best.ok_or(AttackError::DegenerateGradient)?;
        let f_diff = (lin.logits[l] - lin.logits[original]).abs();
        let step = (1.0 + overshoot) * f_diff / (norm * norm);
        for ((c, t), w) in current.iter_mut().zip(&mut total).zip(&grads[l]) {
            let d = step * w;
            *c += d;
            *t += d;
        }
        iterations += 1;
    }
}
