//! Extreme-case statistics over binary accuracy outcomes.
//!
//! The shared-std advantage exists because of lopsided rows — one outlier
//! against an otherwise unanimous group. These counters measure how common
//! that situation actually is in a batch, which makes the damping's impact
//! auditable instead of anecdotal.

use crate::advantage::RewardMatrix;
use crate::error::{DurianError, DurianResult};

/// Counts of informative and lopsided rows in one batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ExtremeStats {
    /// Rows whose accuracies are not unanimous: the only rows that produce
    /// a nonzero advantage and therefore participate in training.
    pub effective: usize,
    /// Rows with exactly one wrong answer among otherwise correct ones.
    pub extreme_success: usize,
    /// Rows with exactly one correct answer among otherwise wrong ones.
    pub extreme_failure: usize,
}

impl ExtremeStats {
    /// Extreme rows as a fraction of effective rows; `None` when no row is
    /// effective.
    pub fn ratio(&self) -> Option<f64> {
        if self.effective == 0 {
            None
        } else {
            Some((self.extreme_success + self.extreme_failure) as f64 / self.effective as f64)
        }
    }

    /// The ratio formatted for the summary table: one decimal with a percent
    /// sign, or `-` when undefined.
    pub fn ratio_cell(&self) -> String {
        match self.ratio() {
            Some(r) => format!("{:.1}%", 100.0 * r),
            None => "-".to_string(),
        }
    }
}

/// Classifies each row of a binary accuracy matrix.
///
/// Values must be exactly 0 or 1 — this runs on accuracy outcomes, never on
/// blended rewards. Rows with fewer than two valid entries are skipped. A
/// row counts as effective when it contains both outcomes; it is extreme
/// when the minority is a single rollout (checked success-first, so the
/// mixed two-rollout row lands in `extreme_success`).
pub fn extreme_stats(accuracy: &RewardMatrix) -> DurianResult<ExtremeStats> {
    let mut stats = ExtremeStats::default();
    for s in 0..accuracy.batch() {
        let valid = accuracy.valid_row_values(s);
        let n = valid.len();
        if n < 2 {
            continue;
        }
        let correct = valid.iter().filter(|v| **v == 1.0).count();
        let wrong = valid.iter().filter(|v| **v == 0.0).count();
        if correct + wrong != n {
            return Err(DurianError::InvalidInput(format!(
                "row {s} holds non-binary values; extreme statistics need raw accuracies"
            )));
        }
        if correct == 0 || wrong == 0 {
            continue;
        }
        stats.effective += 1;
        if wrong == 1 {
            stats.extreme_success += 1;
        } else if correct == 1 {
            stats.extreme_failure += 1;
        }
    }
    Ok(stats)
}

/// Renders extreme-case counts as the four-row summary table, one column
/// per recorded step.
///
/// `group_size` fixes the row labels (a lopsided row in a group of G has
/// G-1 rollouts against 1). The output is plain CSV with a `metric` key
/// column; the ratio row shows one decimal of percent, `-` where no row was
/// effective.
pub fn render_extreme_table(group_size: usize, columns: &[(usize, ExtremeStats)]) -> String {
    let mut header = String::from("metric");
    let mut effective = String::from("Effective samples (participating in training)");
    let mut success = format!("Extreme success ({} correct & 1 wrong)", group_size - 1);
    let mut failure = format!("Extreme failure ({} wrong & 1 correct)", group_size - 1);
    let mut ratio = String::from("Total Extreme Ratio");
    for (step, stats) in columns {
        header.push_str(&format!(",step {step}"));
        effective.push_str(&format!(",{}", stats.effective));
        success.push_str(&format!(",{}", stats.extreme_success));
        failure.push_str(&format!(",{}", stats.extreme_failure));
        ratio.push_str(&format!(",{}", stats.ratio_cell()));
    }
    format!("{header}\n{effective}\n{success}\n{failure}\n{ratio}\n")
}
