//! Advantage estimation: per-sample normalization, shared-std group
//! normalization, and their weighted combination.
//!
//! The per-sample scheme standardizes each row of rewards by its own mean and
//! (Bessel-corrected) standard deviation. It is scale-free but fragile: a
//! lopsided row like seven successes and one failure has a tiny std, so the
//! lone failure's advantage balloons to ±2.47 while a balanced row never
//! leaves ±0.94.
//!
//! The shared-std scheme keeps each row's own mean in the numerator but
//! divides by the standard deviation pooled across every reward in the row's
//! *difficulty group*. Lopsided rows sit in groups alongside balanced ones,
//! so the pooled std is larger than their private std and their outliers are
//! damped; balanced rows see the mirror effect. Centering still happens per
//! row, which keeps every row's advantages mean-zero.
//!
//! One advantage matrix is produced per difficulty view and blended by
//! [`combine_advantages`]; [`token_broadcast`] then stretches each response's
//! scalar advantage across its tokens for the surrogate objective.

use crate::difficulty::GroupAssignment;
use crate::error::{DurianError, DurianResult};

/// Floor for shared-std denominators: a group whose pooled rewards have less
/// spread than this is treated as degenerate and divided by the floor
/// instead, which keeps advantages finite (and zero when the numerator is
/// zero, as it is for identical rewards).
pub const EPS_STD: f64 = 1e-6;

/// Rewards for a batch of samples, `group_size` rollouts each, with a
/// validity mask. All rewards live in `[0, 1]`; masked entries take no part
/// in any statistic or gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardMatrix {
    batch: usize,
    group_size: usize,
    values: Vec<f64>,
    mask: Vec<bool>,
}

impl RewardMatrix {
    /// Builds a fully unmasked reward matrix from row-major values.
    pub fn new(batch: usize, group_size: usize, values: Vec<f64>) -> DurianResult<Self> {
        Self::with_mask(batch, group_size, values.clone(), vec![true; values.len()])
    }

    /// Builds a reward matrix with an explicit validity mask.
    pub fn with_mask(
        batch: usize,
        group_size: usize,
        values: Vec<f64>,
        mask: Vec<bool>,
    ) -> DurianResult<Self> {
        if batch == 0 || group_size == 0 {
            return Err(DurianError::EmptyInput(format!(
                "reward matrix shape {batch}x{group_size} has no entries"
            )));
        }
        if values.len() != batch * group_size {
            return Err(DurianError::InvalidInput(format!(
                "reward matrix {batch}x{group_size} needs {} values, got {}",
                batch * group_size,
                values.len()
            )));
        }
        if mask.len() != values.len() {
            return Err(DurianError::InvalidInput(format!(
                "mask length {} does not match {} rewards",
                mask.len(),
                values.len()
            )));
        }
        if let Some(bad) = values.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(DurianError::InvalidInput(format!(
                "reward {} at flat index {bad} outside [0, 1]",
                values[bad]
            )));
        }
        Ok(RewardMatrix {
            batch,
            group_size,
            values,
            mask,
        })
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn group_size(&self) -> usize {
        self.group_size
    }

    pub fn value(&self, sample: usize, rollout: usize) -> f64 {
        self.values[sample * self.group_size + rollout]
    }

    pub fn is_valid(&self, sample: usize, rollout: usize) -> bool {
        self.mask[sample * self.group_size + rollout]
    }

    /// One sample's rewards, including masked entries.
    pub fn row(&self, sample: usize) -> &[f64] {
        &self.values[sample * self.group_size..(sample + 1) * self.group_size]
    }

    /// One sample's unmasked rewards.
    pub fn valid_row_values(&self, sample: usize) -> Vec<f64> {
        (0..self.group_size)
            .filter(|&i| self.is_valid(sample, i))
            .map(|i| self.value(sample, i))
            .collect()
    }

    /// True when every rollout of the sample is masked out.
    pub fn row_fully_masked(&self, sample: usize) -> bool {
        (0..self.group_size).all(|i| !self.is_valid(sample, i))
    }

    /// Masks out whole samples: rows where `keep` is false lose all rollouts.
    pub fn apply_row_mask(&mut self, keep: &[bool]) -> DurianResult<()> {
        if keep.len() != self.batch {
            return Err(DurianError::InvalidInput(format!(
                "row mask covers {} samples, batch has {}",
                keep.len(),
                self.batch
            )));
        }
        for (s, &k) in keep.iter().enumerate() {
            if !k {
                for i in 0..self.group_size {
                    self.mask[s * self.group_size + i] = false;
                }
            }
        }
        Ok(())
    }

    /// A copy with every entry marked valid (used when pooling is configured
    /// to ignore the dynamic-sampling mask).
    pub fn unmasked_copy(&self) -> RewardMatrix {
        RewardMatrix {
            batch: self.batch,
            group_size: self.group_size,
            values: self.values.clone(),
            mask: vec![true; self.values.len()],
        }
    }
}

/// Which normalization produced an advantage matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdvantageKind {
    /// Per-sample mean/std (the vanilla group-relative scheme).
    Original,
    /// Row mean over a std shared across a perceptual-difficulty group.
    Perceptual,
    /// Row mean over a std shared across a reasoning-difficulty group.
    Reasoning,
    /// Weighted blend of the above.
    Combined,
}

/// Advantages for a batch, aligned entry-for-entry with the reward matrix
/// that produced them. Masked rollouts always carry exactly `0.0`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdvantageMatrix {
    batch: usize,
    group_size: usize,
    values: Vec<f64>,
    mask: Vec<bool>,
    kind: AdvantageKind,
    degenerate_rows: Vec<bool>,
}

impl AdvantageMatrix {
    fn new(
        batch: usize,
        group_size: usize,
        values: Vec<f64>,
        mask: Vec<bool>,
        kind: AdvantageKind,
        degenerate_rows: Vec<bool>,
    ) -> Self {
        debug_assert_eq!(values.len(), batch * group_size);
        debug_assert_eq!(degenerate_rows.len(), batch);
        AdvantageMatrix {
            batch,
            group_size,
            values,
            mask,
            kind,
            degenerate_rows,
        }
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn group_size(&self) -> usize {
        self.group_size
    }

    pub fn value(&self, sample: usize, rollout: usize) -> f64 {
        self.values[sample * self.group_size + rollout]
    }

    pub fn is_valid(&self, sample: usize, rollout: usize) -> bool {
        self.mask[sample * self.group_size + rollout]
    }

    pub fn row(&self, sample: usize) -> &[f64] {
        &self.values[sample * self.group_size..(sample + 1) * self.group_size]
    }

    pub fn kind(&self) -> AdvantageKind {
        self.kind
    }

    /// True for rows that fell back to zero advantages (no spread, or too few
    /// valid rollouts to form a statistic).
    pub fn row_degenerate(&self, sample: usize) -> bool {
        self.degenerate_rows[sample]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Blend weights for the three advantage views. All weights must be finite
/// and non-negative, with at least one strictly positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CombineWeights {
    pub original: f64,
    pub perceptual: f64,
    pub reasoning: f64,
}

impl CombineWeights {
    pub fn new(original: f64, perceptual: f64, reasoning: f64) -> DurianResult<Self> {
        let w = CombineWeights {
            original,
            perceptual,
            reasoning,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> DurianResult<()> {
        let parts = [
            ("original", self.original),
            ("perceptual", self.perceptual),
            ("reasoning", self.reasoning),
        ];
        for (name, v) in parts {
            if !v.is_finite() || v < 0.0 {
                return Err(DurianError::InvalidConfig(format!(
                    "{name} advantage weight {v} must be finite and >= 0"
                )));
            }
        }
        if self.original + self.perceptual + self.reasoning <= 0.0 {
            return Err(DurianError::InvalidConfig(
                "advantage weights must not all be zero".into(),
            ));
        }
        Ok(())
    }
}

impl Default for CombineWeights {
    /// The blend that keeps the per-sample signal dominant while letting both
    /// difficulty views temper it.
    fn default() -> Self {
        CombineWeights {
            original: 0.6,
            perceptual: 0.2,
            reasoning: 0.2,
        }
    }
}

/// Mean and Bessel-corrected std of a slice (`None` std when fewer than two
/// values).
pub(crate) fn mean_and_std(values: &[f64]) -> (f64, Option<f64>) {
    if values.is_empty() {
        return (0.0, None);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    if values.len() < 2 {
        return (mean, None);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, Some((ss / (values.len() - 1) as f64).sqrt()))
}

/// Per-sample normalized advantages: each row standardized by its own mean
/// and Bessel-corrected std over the unmasked rollouts.
///
/// Rows without spread (std under [`EPS_STD`]) or with fewer than two valid
/// rollouts cannot be standardized; they get all-zero advantages and a
/// degenerate flag rather than an error, since a batch routinely contains a
/// few such rows.
pub fn grpo_advantage(rewards: &RewardMatrix) -> DurianResult<AdvantageMatrix> {
    if rewards.group_size() < 2 {
        return Err(DurianError::InvalidConfig(format!(
            "per-sample normalization needs at least 2 rollouts, got {}",
            rewards.group_size()
        )));
    }
    let b = rewards.batch();
    let g = rewards.group_size();
    let mut values = vec![0.0; b * g];
    let mut degenerate = vec![false; b];
    for s in 0..b {
        let valid = rewards.valid_row_values(s);
        let (mean, std) = mean_and_std(&valid);
        match std {
            Some(sd) if sd >= EPS_STD => {
                for i in 0..g {
                    if rewards.is_valid(s, i) {
                        values[s * g + i] = (rewards.value(s, i) - mean) / sd;
                    }
                }
            }
            _ => degenerate[s] = true,
        }
    }
    let mask: Vec<bool> = (0..b * g).map(|k| rewards.is_valid(k / g, k % g)).collect();
    Ok(AdvantageMatrix::new(
        b,
        g,
        values,
        mask,
        AdvantageKind::Original,
        degenerate,
    ))
}

/// Bessel-corrected std of the rewards pooled across each difficulty group.
///
/// Strict contract: every group must contribute at least two unmasked
/// rewards, otherwise the group is reported as degenerate. (The advantage
/// path below applies the [`EPS_STD`] fallback instead of failing.)
pub fn shared_group_std(
    rewards: &RewardMatrix,
    assignment: &GroupAssignment,
) -> DurianResult<Vec<f64>> {
    assignment.validate(rewards.batch())?;
    let mut stds = Vec::with_capacity(assignment.num_groups);
    for (label, members) in assignment.members().iter().enumerate() {
        let pooled: Vec<f64> = members
            .iter()
            .flat_map(|&s| rewards.valid_row_values(s))
            .collect();
        let (_, std) = mean_and_std(&pooled);
        match std {
            Some(sd) => stds.push(sd),
            None => {
                return Err(DurianError::DegenerateGroup(format!(
                    "group {label} pools {} valid rewards, needs at least 2",
                    pooled.len()
                )))
            }
        }
    }
    Ok(stds)
}

/// Shared-std advantages: numerator is each reward minus *its own sample's*
/// mean reward; denominator is the std pooled over the sample's whole
/// difficulty group (floored at [`EPS_STD`] when the pool is degenerate).
///
/// Centering per sample keeps rows mean-zero; sharing the denominator is the
/// damping mechanism — a lopsided row borrows the larger spread of its
/// difficulty peers instead of dividing by its own tiny std.
pub fn group_normalized_advantage(
    rewards: &RewardMatrix,
    assignment: &GroupAssignment,
    kind: AdvantageKind,
) -> DurianResult<AdvantageMatrix> {
    assignment.validate(rewards.batch())?;
    let b = rewards.batch();
    let g = rewards.group_size();
    let mut group_std = vec![EPS_STD; assignment.num_groups];
    for (label, members) in assignment.members().iter().enumerate() {
        let pooled: Vec<f64> = members
            .iter()
            .flat_map(|&s| rewards.valid_row_values(s))
            .collect();
        if let (_, Some(sd)) = mean_and_std(&pooled) {
            group_std[label] = sd.max(EPS_STD);
        }
    }
    let mut values = vec![0.0; b * g];
    let mut degenerate = vec![false; b];
    for s in 0..b {
        let valid = rewards.valid_row_values(s);
        if valid.is_empty() {
            degenerate[s] = true;
            continue;
        }
        let mean = valid.iter().sum::<f64>() / valid.len() as f64;
        let sd = group_std[assignment.labels[s]];
        if sd <= EPS_STD {
            degenerate[s] = true;
        }
        for i in 0..g {
            if rewards.is_valid(s, i) {
                values[s * g + i] = (rewards.value(s, i) - mean) / sd;
            }
        }
    }
    let mask: Vec<bool> = (0..b * g).map(|k| rewards.is_valid(k / g, k % g)).collect();
    Ok(AdvantageMatrix::new(b, g, values, mask, kind, degenerate))
}

/// Weighted elementwise blend of the three advantage views.
///
/// All three matrices must share shape and mask. The result's degenerate
/// flags are the union of the inputs' flags.
pub fn combine_advantages(
    original: &AdvantageMatrix,
    perceptual: &AdvantageMatrix,
    reasoning: &AdvantageMatrix,
    weights: &CombineWeights,
) -> DurianResult<AdvantageMatrix> {
    weights.validate()?;
    let parts = [original, perceptual, reasoning];
    for part in &parts[1..] {
        if part.batch != original.batch || part.group_size != original.group_size {
            return Err(DurianError::InvalidInput(format!(
                "advantage shapes disagree: {}x{} vs {}x{}",
                original.batch, original.group_size, part.batch, part.group_size
            )));
        }
        if part.mask != original.mask {
            return Err(DurianError::InvalidInput(
                "advantage masks disagree between views".into(),
            ));
        }
    }
    let n = original.values.len();
    let mut values = vec![0.0; n];
    for k in 0..n {
        values[k] = weights.original * original.values[k]
            + weights.perceptual * perceptual.values[k]
            + weights.reasoning * reasoning.values[k];
    }
    let degenerate: Vec<bool> = (0..original.batch)
        .map(|s| {
            original.degenerate_rows[s] || perceptual.degenerate_rows[s] || reasoning.degenerate_rows[s]
        })
        .collect();
    Ok(AdvantageMatrix::new(
        original.batch,
        original.group_size,
        values,
        original.mask.clone(),
        AdvantageKind::Combined,
        degenerate,
    ))
}

/// Stretches each response's scalar advantage across its tokens.
///
/// `lengths[s][i]` is the token count of rollout `i` of sample `s`. Valid
/// rollouts yield `lengths[s][i]` copies of their advantage; masked rollouts
/// yield an empty token vector. A *valid* rollout with zero tokens is a
/// contract violation and errors out.
pub fn token_broadcast(
    advantages: &AdvantageMatrix,
    lengths: &[Vec<usize>],
) -> DurianResult<Vec<Vec<Vec<f64>>>> {
    if lengths.len() != advantages.batch() {
        return Err(DurianError::InvalidInput(format!(
            "lengths cover {} samples, batch has {}",
            lengths.len(),
            advantages.batch()
        )));
    }
    let mut out = Vec::with_capacity(advantages.batch());
    for (s, row) in lengths.iter().enumerate() {
        if row.len() != advantages.group_size() {
            return Err(DurianError::InvalidInput(format!(
                "sample {s} has {} lengths, expected {}",
                row.len(),
                advantages.group_size()
            )));
        }
        let mut sample_tokens = Vec::with_capacity(row.len());
        for (i, &len) in row.iter().enumerate() {
            if !advantages.is_valid(s, i) {
                sample_tokens.push(Vec::new());
                continue;
            }
            if len == 0 {
                return Err(DurianError::DegenerateResponse(format!(
                    "rollout {i} of sample {s} is valid but has zero tokens"
                )));
            }
            sample_tokens.push(vec![advantages.value(s, i); len]);
        }
        out.push(sample_tokens);
    }
    Ok(out)
}
