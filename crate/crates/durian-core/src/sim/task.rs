//! Synthetic tasks with a dialable perceptual difficulty.
//!
//! Each task is a feature matrix whose centered spectrum is planted to hit a
//! requested entropy *exactly*, plus a context vector that encodes the true
//! answer with a dialable amount of noise. Entropy controls how hard the
//! input *looks*; hardness controls how hard the answer actually is to read
//! off — the two axes are independent by construction.

use crate::difficulty::perceptual_difficulty;
use crate::error::{DurianError, DurianResult};
use crate::linalg::Matrix;
use rand::Rng;
use rand_distr::StandardNormal;

/// Shape parameters for generated tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaskDims {
    /// Rows of the feature matrix (observation patches).
    pub patches: usize,
    /// Columns of the feature matrix.
    pub feat_dim: usize,
    /// Length of the context vector.
    pub context_dim: usize,
    /// Number of answer choices.
    pub num_answers: usize,
}

impl TaskDims {
    pub fn validate(&self) -> DurianResult<()> {
        if self.patches < 2 {
            return Err(DurianError::InvalidConfig(format!(
                "patches = {} but centering needs at least 2 rows",
                self.patches
            )));
        }
        if self.feat_dim == 0 {
            return Err(DurianError::InvalidConfig("feat-dim must be positive".into()));
        }
        if self.num_answers < 2 {
            return Err(DurianError::InvalidConfig(format!(
                "num-answers = {} leaves nothing to distinguish; need at least 2",
                self.num_answers
            )));
        }
        if self.context_dim < self.num_answers && self.context_dim < 2 {
            return Err(DurianError::InvalidConfig(format!(
                "context-dim = {} cannot embed {} answers; need context-dim >= 2 \
                 (angle embedding) or >= num-answers (one-hot)",
                self.context_dim, self.num_answers
            )));
        }
        Ok(())
    }

    /// Number of eigenvalues that can survive centering: one direction (the
    /// all-ones patch direction) is always lost.
    pub fn spectrum_rank(&self) -> usize {
        (self.patches - 1).min(self.feat_dim)
    }

    /// Largest spectral entropy a task of this shape can realize.
    pub fn max_entropy(&self) -> f64 {
        (self.spectrum_rank() as f64).ln()
    }
}

/// One generated task: features, context, and the planted ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTask {
    pub features: Matrix,
    pub context: Vec<f64>,
    /// Index of the correct answer in `0..num_answers`.
    pub truth: u32,
    /// Fraction of noise mixed into the context, in `[0, 1]`.
    pub hardness: f64,
    /// Entropy the spectrum was planted for.
    pub target_entropy: f64,
    /// Entropy the feature matrix actually realizes.
    pub entropy: f64,
}

/// Normalized geometric spectrum `p_k ∝ exp(-tilt·k)` over `n` levels.
fn tilted_probs(n: usize, tilt: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|k| (-tilt * k as f64).exp()).collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / sum).collect()
}

fn entropy_of(probs: &[f64]) -> f64 {
    -probs
        .iter()
        .filter(|p| **p > 0.0)
        .map(|p| p * p.ln())
        .sum::<f64>()
}

/// Spectrum (summing to 1) whose entropy hits `target` to ~1e-10.
///
/// The geometric family sweeps entropy monotonically from `ln n` (tilt 0,
/// uniform) toward 0 (tilt → ∞), so a bisection on the tilt suffices.
pub(crate) fn tilted_spectrum(n: usize, target: f64) -> Vec<f64> {
    if n == 1 || target <= 0.0 {
        return vec![1.0];
    }
    if target >= (n as f64).ln() - 1e-12 {
        return vec![1.0 / n as f64; n];
    }
    let mut lo = 0.0_f64; // entropy(lo) = ln n >= target
    let mut hi = 1.0_f64;
    while entropy_of(&tilted_probs(n, hi)) > target {
        hi *= 2.0;
        if hi > 1e6 {
            // Entropy this close to zero is numerically rank-1 anyway.
            return vec![1.0];
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let h = entropy_of(&tilted_probs(n, mid));
        if (h - target).abs() <= 1e-12 {
            return tilted_probs(n, mid);
        }
        if h > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    tilted_probs(n, 0.5 * (lo + hi))
}

fn gaussian_vec<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Orthonormal columns spanning a random subspace, optionally orthogonal to
/// the all-ones direction. Columns are built by modified Gram–Schmidt with a
/// second orthogonalization pass; a column that collapses is resampled.
fn random_orthonormal<R: Rng>(
    rows: usize,
    cols: usize,
    avoid_ones: bool,
    rng: &mut R,
) -> Vec<Vec<f64>> {
    let ones_scale = 1.0 / (rows as f64).sqrt();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(cols);
    while basis.len() < cols {
        let mut v = gaussian_vec(rows, rng);
        for _ in 0..2 {
            if avoid_ones {
                let dot: f64 = v.iter().sum::<f64>() * ones_scale;
                for x in v.iter_mut() {
                    *x -= dot * ones_scale;
                }
            }
            for b in &basis {
                let dot: f64 = v.iter().zip(b).map(|(a, c)| a * c).sum();
                for (x, c) in v.iter_mut().zip(b) {
                    *x -= dot * c;
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-8 {
            continue; // astronomically unlikely; draw a fresh direction
        }
        for x in v.iter_mut() {
            *x /= norm;
        }
        basis.push(v);
    }
    basis
}

/// Unit-scale embedding of an answer index into the context space: one-hot
/// when the space is wide enough, otherwise distinct angles on the 2-D
/// circle spanned by the first two coordinates.
pub fn answer_embedding(answer: u32, num_answers: usize, context_dim: usize) -> Vec<f64> {
    let mut u = vec![0.0; context_dim];
    if context_dim >= num_answers {
        u[answer as usize] = 1.0;
    } else {
        let theta = 2.0 * std::f64::consts::PI * answer as f64 / num_answers as f64;
        u[0] = theta.cos();
        u[1] = theta.sin();
    }
    u
}

/// Generates one task whose centered spectrum realizes `target_entropy` and
/// whose context mixes the true answer's embedding with `hardness` parts of
/// Gaussian noise.
///
/// `target_entropy` must lie in `[0, ln(min(patches-1, feat_dim))]`: centering
/// always costs one rank, so entropies above that ceiling are unreachable no
/// matter how the features are arranged.
pub fn generate_task<R: Rng>(
    target_entropy: f64,
    hardness: f64,
    dims: &TaskDims,
    rng: &mut R,
) -> DurianResult<SyntheticTask> {
    dims.validate()?;
    if !target_entropy.is_finite() || target_entropy < 0.0 {
        return Err(DurianError::InvalidConfig(format!(
            "target entropy {target_entropy} must be finite and non-negative"
        )));
    }
    let ceiling = dims.max_entropy();
    if target_entropy > ceiling + 1e-12 {
        return Err(DurianError::InvalidConfig(format!(
            "target entropy {target_entropy} exceeds ln(min(patches-1, feat-dim)) = {ceiling:.6}, \
             the most a {}x{} matrix can realize after centering",
            dims.patches, dims.feat_dim
        )));
    }
    if !hardness.is_finite() || !(0.0..=1.0).contains(&hardness) {
        return Err(DurianError::InvalidConfig(format!(
            "hardness {hardness} must lie in [0, 1]"
        )));
    }

    let p = dims.patches;
    let d = dims.feat_dim;
    let spectrum = tilted_spectrum(dims.spectrum_rank(), target_entropy);
    let n = spectrum.len();

    // F = U diag(sqrt((P-1)·λ)) Vᵀ + 1·μᵀ. The left frame avoids the ones
    // direction, so centering strips exactly the planted mean and the
    // centered second moment comes out as V diag(λ) Vᵀ — eigenvalues λ on
    // the nose, entropy equal to the spectrum's by scale invariance.
    let u = random_orthonormal(p, n, true, rng);
    let v = random_orthonormal(d, n, false, rng);
    let mean = gaussian_vec(d, rng);
    let scale: Vec<f64> = spectrum
        .iter()
        .map(|l| (l * (p - 1) as f64).sqrt())
        .collect();
    let mut data = vec![0.0; p * d];
    for r in 0..p {
        for c in 0..d {
            let mut acc = mean[c];
            for k in 0..n {
                acc += u[k][r] * scale[k] * v[k][c];
            }
            data[r * d + c] = acc;
        }
    }
    let features = Matrix::new(p, d, data)?;
    let entropy = perceptual_difficulty(&features)?;

    let truth = rng.gen_range(0..dims.num_answers as u32);
    let signal = answer_embedding(truth, dims.num_answers, dims.context_dim);
    let noise = gaussian_vec(dims.context_dim, rng);
    let context: Vec<f64> = signal
        .iter()
        .zip(&noise)
        .map(|(s, e)| (1.0 - hardness) * s + hardness * e)
        .collect();

    Ok(SyntheticTask {
        features,
        context,
        truth,
        hardness,
        target_entropy,
        entropy,
    })
}
