//! Difficulty scoring and batch regrouping.
//!
//! Two independent views of how hard a sample is:
//!
//! * **perceptual** — the spectral entropy of the image's centered
//!   patch-feature second moment. A flat image concentrates variance in one
//!   or two directions (low entropy); clutter spreads it out (high entropy).
//!   This is a property of the input alone, so it can be computed once and
//!   cached.
//! * **reasoning** — the policy's own confidence, measured as the mean
//!   sequence log-probability over a sample's rollout group. Low confidence
//!   marks prompts the current policy finds hard, so this view shifts as
//!   training progresses.
//!
//! Each view partitions a batch by empirical quantiles of its score:
//! perceptual difficulty into three bands split at the 25th/75th percentiles
//! (roughly a 1:2:1 split), reasoning difficulty into `b` equal-probability
//! bands. The resulting [`GroupAssignment`]s drive shared-std advantage
//! normalization downstream.

use crate::error::{DurianError, DurianResult};
use crate::linalg::{self, Matrix, MomentMode};

/// Perceptual difficulty of one sample: spectral entropy of its image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerceptualScore {
    pub sample_id: usize,
    pub entropy: f64,
}

/// Reasoning difficulty of one sample: mean rollout log-probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceScore {
    pub sample_id: usize,
    pub mean_logprob: f64,
}

/// A partition of a batch into difficulty groups.
///
/// `labels[i]` is the group of sample `i`; labels always run `0..num_groups`
/// with every group nonempty unless the batch's scores were all tied. Higher
/// labels always mean higher scores.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupAssignment {
    /// Group label per sample, in batch order.
    pub labels: Vec<usize>,
    /// Number of distinct labels handed out.
    pub num_groups: usize,
    /// The empirical thresholds that separated the groups.
    pub thresholds: Vec<f64>,
    /// Every score in the batch was identical; the split is meaningless and
    /// everyone landed in one group.
    pub all_tied: bool,
    /// How many requested bands came up empty (heavy ties) and were folded
    /// into their neighbors.
    pub merged_empty_groups: usize,
}

impl GroupAssignment {
    /// Sanity-checks the assignment against a batch of the given size.
    pub fn validate(&self, batch: usize) -> DurianResult<()> {
        if self.labels.len() != batch {
            return Err(DurianError::InconsistentAssignment(format!(
                "assignment covers {} samples, batch has {batch}",
                self.labels.len()
            )));
        }
        if let Some(bad) = self.labels.iter().find(|l| **l >= self.num_groups) {
            return Err(DurianError::InconsistentAssignment(format!(
                "label {bad} out of range for {} groups",
                self.num_groups
            )));
        }
        Ok(())
    }

    /// Sample indices in each group.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_groups];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }
}

/// Spectral entropy of a feature matrix, decomposing whichever Gram form of
/// the centered second moment is smaller (both share the nonzero spectrum).
///
/// A constant image has an empty spectrum and scores exactly `0.0` — the
/// least perceptually demanding input, not an error.
pub fn perceptual_difficulty(features: &Matrix) -> DurianResult<f64> {
    let mode = if features.cols() <= features.rows() {
        MomentMode::Feature
    } else {
        MomentMode::Patch
    };
    let moment = linalg::centered_second_moment(features, mode)?;
    let spectrum = linalg::eigvals_symmetric(&moment)?;
    match linalg::spectral_entropy(&spectrum) {
        Ok(h) => Ok(h),
        Err(DurianError::DegenerateSpectrum) => Ok(0.0),
        Err(e) => Err(e),
    }
}

/// Log-probability of a whole response: the sum of its per-token values,
/// divided by token count when `normalize` is set (so long responses are not
/// penalized for their length alone).
pub fn sequence_logprob(token_logprobs: &[f64], normalize: bool) -> DurianResult<f64> {
    if token_logprobs.is_empty() {
        return Err(DurianError::DegenerateResponse(
            "response has no tokens to score".into(),
        ));
    }
    let sum: f64 = token_logprobs.iter().sum();
    if normalize {
        Ok(sum / token_logprobs.len() as f64)
    } else {
        Ok(sum)
    }
}

/// Mean sequence log-probability over one sample's rollout group — the
/// policy's confidence on that sample.
pub fn sample_confidence(responses: &[Vec<f64>], normalize: bool) -> DurianResult<f64> {
    if responses.is_empty() {
        return Err(DurianError::EmptyInput(
            "confidence needs at least one rollout".into(),
        ));
    }
    let mut total = 0.0;
    for r in responses {
        total += sequence_logprob(r, normalize)?;
    }
    Ok(total / responses.len() as f64)
}

/// Empirical quantile with linear interpolation between order statistics:
/// at level `q` the fractional rank is `h = q·(n-1)` and the result
/// interpolates between the floor and ceiling order statistics.
pub fn quantile(values: &[f64], level: f64) -> DurianResult<f64> {
    if values.is_empty() {
        return Err(DurianError::EmptyInput(
            "quantile of an empty collection".into(),
        ));
    }
    if !(0.0..=1.0).contains(&level) || !level.is_finite() {
        return Err(DurianError::InvalidInput(format!(
            "quantile level {level} outside [0, 1]"
        )));
    }
    if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
        return Err(DurianError::InvalidInput(format!(
            "value {bad} is not finite"
        )));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let h = level * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    let frac = h - lo as f64;
    Ok(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}

fn perceptual_labels(scores: &[f64], low: f64, high: f64) -> Vec<usize> {
    scores
        .iter()
        .map(|&h| {
            if h <= low {
                0
            } else if h >= high {
                2
            } else {
                1
            }
        })
        .collect()
}

/// Splits a batch into easy/medium/hard perceptual bands at the given
/// quantile levels of the batch's own entropy scores (`0.25`/`0.75` by
/// default upstream, giving roughly a 1:2:1 split).
///
/// Scores at or below the low threshold label 0, at or above the high
/// threshold label 2, strictly between them label 1. An all-tied batch has
/// no usable split: everyone is labeled 1 and [`GroupAssignment::all_tied`]
/// is set.
pub fn regroup_perceptual(
    scores: &[PerceptualScore],
    levels: (f64, f64),
) -> DurianResult<GroupAssignment> {
    if scores.is_empty() {
        return Err(DurianError::EmptyInput(
            "perceptual regrouping of an empty batch".into(),
        ));
    }
    if scores.len() < 4 {
        return Err(DurianError::InvalidConfig(format!(
            "perceptual regrouping needs a batch of at least 4, got {}",
            scores.len()
        )));
    }
    if levels.0 > levels.1 {
        return Err(DurianError::InvalidConfig(format!(
            "quantile levels ({}, {}) must be ordered",
            levels.0, levels.1
        )));
    }
    let values: Vec<f64> = scores.iter().map(|s| s.entropy).collect();
    let all_tied = values.iter().all(|v| *v == values[0]);
    let low = quantile(&values, levels.0)?;
    let high = quantile(&values, levels.1)?;
    let labels = if all_tied {
        vec![1; values.len()]
    } else {
        perceptual_labels(&values, low, high)
    };
    Ok(GroupAssignment {
        labels,
        num_groups: 3,
        thresholds: vec![low, high],
        all_tied,
        merged_empty_groups: 0,
    })
}

/// Perceptual banding against externally supplied thresholds (e.g. computed
/// once over a whole task pool instead of per batch).
pub fn regroup_perceptual_with_thresholds(
    scores: &[PerceptualScore],
    thresholds: (f64, f64),
) -> DurianResult<GroupAssignment> {
    if scores.is_empty() {
        return Err(DurianError::EmptyInput(
            "perceptual regrouping of an empty batch".into(),
        ));
    }
    if thresholds.0 > thresholds.1 {
        return Err(DurianError::InvalidConfig(format!(
            "thresholds ({}, {}) must be ordered",
            thresholds.0, thresholds.1
        )));
    }
    let values: Vec<f64> = scores.iter().map(|s| s.entropy).collect();
    let labels = perceptual_labels(&values, thresholds.0, thresholds.1);
    Ok(GroupAssignment {
        labels,
        num_groups: 3,
        thresholds: vec![thresholds.0, thresholds.1],
        all_tied: false,
        merged_empty_groups: 0,
    })
}

/// Splits a batch into `bands` equal-probability confidence groups.
///
/// Interior thresholds sit at the `u/bands` quantiles of the batch's scores.
/// A score tied with a threshold stays in the lower band; the top band is
/// closed at the maximum. Heavy ties can leave interior bands empty — those
/// are folded into their neighbors so labels stay consecutive, with the fold
/// count reported in [`GroupAssignment::merged_empty_groups`].
pub fn regroup_reasoning(scores: &[ConfidenceScore], bands: usize) -> DurianResult<GroupAssignment> {
    if scores.is_empty() {
        return Err(DurianError::EmptyInput(
            "reasoning regrouping of an empty batch".into(),
        ));
    }
    if bands == 0 {
        return Err(DurianError::InvalidConfig(
            "reasoning regrouping needs at least one band".into(),
        ));
    }
    if bands > scores.len() {
        return Err(DurianError::InvalidConfig(format!(
            "cannot split {} samples into {bands} bands",
            scores.len()
        )));
    }
    let values: Vec<f64> = scores.iter().map(|s| s.mean_logprob).collect();
    let all_tied = values.iter().all(|v| *v == values[0]);
    let mut thresholds = Vec::with_capacity(bands.saturating_sub(1));
    for u in 1..bands {
        thresholds.push(quantile(&values, u as f64 / bands as f64)?);
    }
    // A score's raw band is the number of thresholds strictly below it, so a
    // tie lands in the lower band and the maximum lands in the top band.
    let raw: Vec<usize> = values
        .iter()
        .map(|&v| thresholds.iter().filter(|t| v > **t).count())
        .collect();
    let mut seen = vec![false; bands];
    for &l in &raw {
        seen[l] = true;
    }
    let mut remap = vec![0usize; bands];
    let mut next = 0;
    for (band, &occupied) in seen.iter().enumerate() {
        remap[band] = next;
        if occupied {
            next += 1;
        }
    }
    let merged = bands - next;
    let labels: Vec<usize> = raw.iter().map(|&l| remap[l]).collect();
    Ok(GroupAssignment {
        labels,
        num_groups: next,
        thresholds,
        all_tied,
        merged_empty_groups: merged,
    })
}
