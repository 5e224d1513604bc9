//! Multi-trial driver for single-class, multi-class and fully universal
//! perturbations.

use alloc::vec::Vec;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{fooling_count, uap_hc, AttackConfig, AttackError, Differentiable, FoolCount, UapOutcome};
use crate::audio::{ClassLabel, Waveform};
use crate::par;

/// Which inputs a universal perturbation is meant to fool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UniversalityLevel {
    pub level: u8,
    pub classes: Vec<ClassLabel>,
}

impl UniversalityLevel {
    /// Checks the level/class-count pairing against the model's label set:
    /// level 1 has one class, level 2 more than one but not all, level 3 all.
    pub fn new(level: u8, classes: Vec<ClassLabel>, label_set: &[ClassLabel]) -> Result<Self, AttackError> {
        if classes.iter().any(|c| !label_set.contains(c)) {
            return Err(AttackError::Level("class not in the model's label set"));
        }
        let mut dedup = classes.clone();
        dedup.sort();
        dedup.dedup();
        if dedup.len() != classes.len() {
            return Err(AttackError::Level("duplicate class"));
        }
        let k = label_set.len();
        let ok = match level {
            1 => classes.len() == 1,
            2 => classes.len() > 1 && classes.len() < k,
            3 => classes.len() == k,
            _ => return Err(AttackError::Level("level must be 1, 2 or 3")),
        };
        if !ok {
            return Err(AttackError::Level(match level {
                1 => "level 1 takes exactly one class",
                2 => "level 2 takes more than one class and fewer than all",
                _ => "level 3 takes every class",
            }));
        }
        Ok(Self { level, classes })
    }

    pub fn full(label_set: &[ClassLabel]) -> Self {
        Self {
            level: 3,
            classes: label_set.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    /// Indices into the pool used to craft this trial's perturbation.
    pub sample_indices: Vec<usize>,
    pub outcome: UapOutcome,
    /// Fooling ratio on the crafting subset.
    pub train_fr: FoolCount,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelOutcome {
    pub level: UniversalityLevel,
    pub best_trial: usize,
    pub trials: Vec<TrialRecord>,
}

impl LevelOutcome {
    pub fn best(&self) -> &TrialRecord {
        &self.trials[self.best_trial]
    }
}

/// SplitMix64 finalizer, used to derive independent per-trial seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn trial_seed(master: u64, trial: usize) -> u64 {
    mix(master ^ mix(trial as u64 + 1))
}

fn draw_subset(
    pool: &[Waveform],
    level: &UniversalityLevel,
    per_class: usize,
    seed: u64,
) -> Result<Vec<usize>, AttackError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = Vec::with_capacity(per_class * level.classes.len());
    for &label in &level.classes {
        let candidates: Vec<usize> = pool
            .iter()
            .enumerate()
            .filter(|(_, w)| w.label() == Some(label))
            .map(|(i, _)| i)
            .collect();
        if candidates.len() < per_class {
            return Err(AttackError::InsufficientSamples {
                label,
                needed: per_class,
                available: candidates.len(),
            });
        }
        let mut chosen: Vec<usize> = candidates.choose_multiple(&mut rng, per_class).copied().collect();
        chosen.sort_unstable();
        picked.extend(chosen);
    }
    Ok(picked)
}

/// Runs `cfg.trials` independent UAP-HC trials, each on a fresh subset of
/// `samples_per_class` clips per level class drawn without replacement from
/// `pool`, and selects the trial with the highest fooling ratio on its own
/// subset (lowest trial index on ties).
pub fn run_level_experiment<M: Differentiable + ?Sized>(
    model: &M,
    level: &UniversalityLevel,
    pool: &[Waveform],
    samples_per_class: usize,
    cfg: &AttackConfig,
) -> Result<LevelOutcome, AttackError> {
    cfg.validate()?;
    if samples_per_class == 0 {
        return Err(AttackError::Config("samples per class must be positive"));
    }
    let seeds: Vec<u64> = (0..cfg.trials).map(|t| trial_seed(cfg.rng_seed, t)).collect();
    let subsets = seeds
        .iter()
        .map(|&s| draw_subset(pool, level, samples_per_class, s))
        .collect::<Result<Vec<_>, _>>()?;

    let results = par::map_range(cfg.trials, |t| -> Result<TrialRecord, AttackError> {
        let subset: Vec<Waveform> = subsets[t].iter().map(|&i| pool[i].clone()).collect();
        let trial_cfg = AttackConfig {
            rng_seed: seeds[t],
            ..*cfg
        };
        let outcome = uap_hc(model, &subset, &trial_cfg)?;
        let train_fr = fooling_count(model, &subset, &outcome.perturbation.values);
        Ok(TrialRecord {
            trial: t,
            seed: seeds[t],
            sample_indices: subsets[t].clone(),
            outcome,
            train_fr,
        })
    });
    let trials = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    let score = |r: &TrialRecord| r.train_fr.ratio().unwrap_or(-1.0);
    let mut best_trial = 0;
    for (i, r) in trials.iter().enumerate() {
        if score(r) > score(&trials[best_trial]) {
            best_trial = i;
        }
    }
    Ok(LevelOutcome {
        level: level.clone(),
        best_trial,
        trials,
    })
}
