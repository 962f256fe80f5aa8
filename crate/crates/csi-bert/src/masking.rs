//! Mask planning and `[MASK]`/`[PAD]` materialization.
//!
//! Pretraining hides a random fraction of the observed slots and trains the
//! model to reconstruct them. Hidden slots are filled with Gaussian draws
//! matched to the per-dimension statistics of the remaining observed slots,
//! so the mask carries no fixed signature the model could latch onto. Pad
//! slots keep a fixed value; attention masking makes it irrelevant.

use std::collections::BTreeSet;

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::data::CsiSequence;
use crate::model::StandardStats;
use crate::seeding;

/// Mask ratio range used during pretraining.
pub const RATIO_LO: f64 = 0.15;
pub const RATIO_HI: f64 = 0.70;

/// Which positions of one window are artificially masked vs padded.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskPlan {
    pub mask_positions: BTreeSet<usize>,
    pub pad_positions: BTreeSet<usize>,
    pub ratio_used: f64,
}

impl MaskPlan {
    /// Slots that stay observed: neither masked nor padded.
    pub fn observed_positions(&self, n: usize) -> Vec<usize> {
        (0..n)
            .filter(|i| !self.mask_positions.contains(i) && !self.pad_positions.contains(i))
            .collect()
    }
}

/// Uniform draw from `[0.15, 0.70]`; one per epoch.
pub fn sample_ratio(seed: u64) -> f64 {
    let mut rng = seeding::rng(seed);
    rng.random_range(RATIO_LO..=RATIO_HI)
}

/// Choose `round(ratio * observed)` mask positions uniformly without
/// replacement among the non-pad slots.
pub fn build_mask_plan(pad_mask: &[bool], ratio: f64, seed: u64) -> MaskPlan {
    assert!((0.0..1.0).contains(&ratio), "mask ratio {} outside [0,1)", ratio);
    let non_pad: Vec<usize> = pad_mask
        .iter()
        .enumerate()
        .filter(|(_, &p)| !p)
        .map(|(i, _)| i)
        .collect();
    let count = crate::data::round_half_up(ratio * non_pad.len() as f64);
    let mut rng = seeding::rng(seed);
    let mask_positions: BTreeSet<usize> = if count == 0 {
        BTreeSet::new()
    } else {
        rand::seq::index::sample(&mut rng, non_pad.len(), count)
            .into_iter()
            .map(|i| non_pad[i])
            .collect()
    };
    let pad_positions: BTreeSet<usize> = pad_mask
        .iter()
        .enumerate()
        .filter(|(_, &p)| p)
        .map(|(i, _)| i)
        .collect();
    MaskPlan {
        mask_positions,
        pad_positions,
        ratio_used: ratio,
    }
}

/// Fixed storage value for pad slots, pre-standardization.
pub const PAD_VALUE: f64 = 0.0;

/// Produce the masked value matrix for one window.
///
/// `stats` must be the per-dimension statistics computed over the slots that
/// stay observed (non-pad, non-mask), so mask noise never contaminates them.
/// Each masked component is drawn from `N(mu_j, sigma_j)`; `sigma_j == 0`
/// yields `mu_j` exactly. Pad slots take [`PAD_VALUE`]; observed slots pass
/// through unchanged.
pub fn materialize(
    seq: &CsiSequence,
    plan: &MaskPlan,
    stats: &StandardStats,
    seed: u64,
) -> Array2<f64> {
    let mut m = seq.values_matrix();
    let mut rng = seeding::rng(seed);
    for &i in &plan.mask_positions {
        for j in 0..seq.dim {
            let sigma = stats.sigma[j];
            m[[i, j]] = if sigma > 0.0 {
                Normal::new(stats.mu[j], sigma).unwrap().sample(&mut rng)
            } else {
                stats.mu[j]
            };
        }
    }
    for &i in &plan.pad_positions {
        for j in 0..seq.dim {
            m[[i, j]] = PAD_VALUE;
        }
    }
    m
}

/// Per-key attend-allowed vector: pad slots are excluded as attention keys,
/// mask slots stay fully attendable.
pub fn attention_mask(pad_mask: &[bool]) -> Vec<bool> {
    pad_mask.iter().map(|&p| !p).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{CsiFrame, CsiSequence};
    use ndarray::Array1;
    use proptest::prelude::*;

    fn seq_with_pads(n: usize, d: usize, pads: &[usize]) -> CsiSequence {
        let mut pad_mask = vec![false; n];
        for &p in pads {
            pad_mask[p] = true;
        }
        let frames = (0..n)
            .map(|k| CsiFrame {
                timestamp_ms: k as f64 * 10.0,
                values: (0..d).map(|j| (k + j) as f64).collect(),
            })
            .collect();
        CsiSequence {
            frames,
            pad_mask,
            dim: d,
            nominal_rate_hz: 100.0,
        }
    }

    #[test]
    fn ratio_in_range_and_deterministic() {
        for seed in 0..100 {
            let r = sample_ratio(seed);
            assert!((RATIO_LO..=RATIO_HI).contains(&r));
        }
        assert_eq!(sample_ratio(7), sample_ratio(7));
    }

    #[test]
    fn ratio_mean_matches_uniform() {
        let mean: f64 = (0..10_000).map(sample_ratio).sum::<f64>() / 10_000.0;
        assert!(
            (mean - 0.425).abs() <= 0.01,
            "mean {} too far from 0.425",
            mean
        );
    }

    #[test]
    fn plan_counts() {
        // 90 non-pad slots at ratio 0.2 -> 18 masked (round half up).
        let pad_mask: Vec<bool> = (0..100).map(|i| i < 10).collect();
        let plan = build_mask_plan(&pad_mask, 0.2, 1);
        assert_eq!(plan.mask_positions.len(), 18);
        assert!(plan.mask_positions.is_disjoint(&plan.pad_positions));

        let all_pad = vec![true; 10];
        let plan = build_mask_plan(&all_pad, 0.5, 1);
        assert!(plan.mask_positions.is_empty());
        assert_eq!(plan.pad_positions.len(), 10);

        let no_pad = vec![false; 100];
        let plan = build_mask_plan(&no_pad, 0.15, 2);
        assert_eq!(plan.mask_positions.len(), 15);
        assert!(plan.pad_positions.is_empty());
    }

    #[test]
    fn materialize_leaves_unmasked_slots_alone() {
        let seq = seq_with_pads(20, 3, &[4, 5]);
        let stats = StandardStats {
            mu: Array1::zeros(3),
            sigma: Array1::ones(3),
        };
        let empty = MaskPlan {
            mask_positions: BTreeSet::new(),
            pad_positions: [4, 5].into_iter().collect(),
            ratio_used: 0.0,
        };
        let m = materialize(&seq, &empty, &stats, 3);
        let orig = seq.values_matrix();
        for i in 0..20 {
            if seq.pad_mask[i] {
                for j in 0..3 {
                    assert_eq!(m[[i, j]], PAD_VALUE);
                }
            } else {
                for j in 0..3 {
                    assert_eq!(m[[i, j]], orig[[i, j]]);
                }
            }
        }
    }

    #[test]
    fn materialize_degenerate_sigma_gives_mu() {
        let seq = seq_with_pads(10, 2, &[]);
        let stats = StandardStats {
            mu: Array1::from_vec(vec![3.0, -1.0]),
            sigma: Array1::zeros(2),
        };
        let plan = build_mask_plan(&seq.pad_mask, 0.5, 4);
        let m = materialize(&seq, &plan, &stats, 4);
        for &i in &plan.mask_positions {
            assert_eq!(m[[i, 0]], 3.0);
            assert_eq!(m[[i, 1]], -1.0);
        }
    }

    #[test]
    fn materialize_draws_match_target_moments() {
        // 10k masked slots; sample mean/std within 3 standard errors.
        let n = 10_000;
        let seq = seq_with_pads(n, 2, &[]);
        let stats = StandardStats {
            mu: Array1::from_vec(vec![5.0, -2.0]),
            sigma: Array1::from_vec(vec![2.0, 0.5]),
        };
        let plan = MaskPlan {
            mask_positions: (0..n).collect(),
            pad_positions: BTreeSet::new(),
            ratio_used: 1.0,
        };
        let m = materialize(&seq, &plan, &stats, 5);
        for j in 0..2 {
            let col: Vec<f64> = (0..n).map(|i| m[[i, j]]).collect();
            let mean = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            let std = var.sqrt();
            let se_mean = stats.sigma[j] / (n as f64).sqrt();
            let se_std = stats.sigma[j] / (2.0 * n as f64).sqrt();
            assert!(
                (mean - stats.mu[j]).abs() <= 3.0 * se_mean,
                "dim {}: mean {} vs {}",
                j,
                mean,
                stats.mu[j]
            );
            assert!(
                (std - stats.sigma[j]).abs() <= 3.0 * se_std,
                "dim {}: std {} vs {}",
                j,
                std,
                stats.sigma[j]
            );
        }
    }

    #[test]
    fn attention_mask_examples() {
        assert_eq!(attention_mask(&[false; 4]), vec![true; 4]);
        let m = attention_mask(&[false, false, false, true, false]);
        assert_eq!(m, vec![true, true, true, false, true]);
        let pads = [true, false, true, false, true];
        let m = attention_mask(&pads);
        assert_eq!(m.iter().filter(|&&a| !a).count(), 3);
    }

    proptest! {
        #[test]
        fn plan_invariants(
            pads in proptest::collection::vec(any::<bool>(), 1..200),
            ratio in 0.0f64..0.99,
            seed in any::<u64>(),
        ) {
            let plan = build_mask_plan(&pads, ratio, seed);
            let non_pad = pads.iter().filter(|&&p| !p).count();
            prop_assert!(plan.mask_positions.is_disjoint(&plan.pad_positions));
            prop_assert_eq!(
                plan.mask_positions.len(),
                crate::data::round_half_up(ratio * non_pad as f64)
            );
            for &i in &plan.mask_positions {
                prop_assert!(!pads[i]);
            }
        }
    }
}
