//! Python bindings for the difficulty-aware advantage library.
//!
//! The module mirrors the Rust API at the granularity a notebook wants:
//! plain lists in, plain lists out, one call per concept. Build the
//! importable shared object with
//! `cargo build -p durian-py --release --features extension-module`
//! and rename/copy `libdurian_py.so` to `durian_py.so` somewhere on
//! `sys.path` (see `python/smoke_test.py`).

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use durian_core::advantage::{
    combine_advantages, grpo_advantage, group_normalized_advantage, AdvantageKind, CombineWeights,
    RewardMatrix,
};
use durian_core::config::ExperimentConfig;
use durian_core::difficulty::{
    regroup_perceptual as regroup_perceptual_rs, regroup_reasoning as regroup_reasoning_rs,
    ConfidenceScore, GroupAssignment, PerceptualScore,
};
use durian_core::error::DurianError;
use durian_core::linalg::{eigvals_symmetric as eigvals_rs, Matrix};
use durian_core::sim;

fn to_py_err(e: DurianError) -> PyErr {
    match &e {
        DurianError::Io { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn matrix_from_rows(rows: &[Vec<f64>]) -> PyResult<Matrix> {
    Matrix::from_rows(rows).map_err(to_py_err)
}

fn reward_matrix(rewards: &[Vec<f64>]) -> PyResult<RewardMatrix> {
    if rewards.is_empty() || rewards[0].is_empty() {
        return Err(PyValueError::new_err("rewards must be a non-empty matrix"));
    }
    let group = rewards[0].len();
    if rewards.iter().any(|r| r.len() != group) {
        return Err(PyValueError::new_err("reward rows must all have the same length"));
    }
    RewardMatrix::new(rewards.len(), group, rewards.concat()).map_err(to_py_err)
}

fn assignment_from_labels(labels: Vec<usize>) -> PyResult<GroupAssignment> {
    let num_groups = labels
        .iter()
        .max()
        .copied()
        .ok_or_else(|| PyValueError::new_err("labels must be non-empty"))?
        + 1;
    Ok(GroupAssignment {
        labels,
        num_groups,
        thresholds: Vec::new(),
        all_tied: false,
        merged_empty_groups: 0,
    })
}

fn rows_of(values: &[f64], group: usize) -> Vec<Vec<f64>> {
    values.chunks(group).map(<[f64]>::to_vec).collect()
}

/// Spectral entropy of a feature matrix (rows = patches, columns = features).
#[pyfunction]
fn perceptual_entropy(features: Vec<Vec<f64>>) -> PyResult<f64> {
    let m = matrix_from_rows(&features)?;
    durian_core::difficulty::perceptual_difficulty(&m).map_err(to_py_err)
}

/// Eigenvalues of a symmetric matrix, in descending order.
#[pyfunction]
fn eigvals_symmetric(matrix: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    let m = matrix_from_rows(&matrix)?;
    eigvals_rs(&m).map(|s| s.into_vec()).map_err(to_py_err)
}

/// Linear-interpolation quantile of an unsorted sample.
#[pyfunction]
fn quantile(values: Vec<f64>, level: f64) -> PyResult<f64> {
    durian_core::difficulty::quantile(&values, level).map_err(to_py_err)
}

/// Per-sample normalized advantages; all-tied rows come back as zeros.
#[pyfunction]
fn grpo_advantages(rewards: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let m = reward_matrix(&rewards)?;
    let adv = grpo_advantage(&m).map_err(to_py_err)?;
    Ok(rows_of(adv.values(), m.group_size()))
}

/// Three-tier perceptual difficulty labels (0 = easy, 1 = medium, 2 = hard)
/// at the given batch quantile levels.
#[pyfunction]
#[pyo3(signature = (entropies, low = 0.25, high = 0.75))]
fn regroup_perceptual(entropies: Vec<f64>, low: f64, high: f64) -> PyResult<Vec<usize>> {
    let scores: Vec<PerceptualScore> = entropies
        .iter()
        .enumerate()
        .map(|(sample_id, &entropy)| PerceptualScore { sample_id, entropy })
        .collect();
    regroup_perceptual_rs(&scores, (low, high))
        .map(|a| a.labels)
        .map_err(to_py_err)
}

/// Reasoning-difficulty band labels from mean rollout log-probabilities.
#[pyfunction]
#[pyo3(signature = (mean_logprobs, bands = 12))]
fn regroup_reasoning(mean_logprobs: Vec<f64>, bands: usize) -> PyResult<Vec<usize>> {
    let scores: Vec<ConfidenceScore> = mean_logprobs
        .iter()
        .enumerate()
        .map(|(sample_id, &mean_logprob)| ConfidenceScore { sample_id, mean_logprob })
        .collect();
    regroup_reasoning_rs(&scores, bands)
        .map(|a| a.labels)
        .map_err(to_py_err)
}

/// Blend of per-sample, perceptual-group, and reasoning-group advantages.
///
/// `perceptual` and `reasoning` are per-sample group labels (one per reward
/// row); `alpha` weights the (original, perceptual, reasoning) views.
#[pyfunction]
#[pyo3(signature = (rewards, perceptual, reasoning, alpha = (0.6, 0.2, 0.2)))]
fn combined_advantages(
    rewards: Vec<Vec<f64>>,
    perceptual: Vec<usize>,
    reasoning: Vec<usize>,
    alpha: (f64, f64, f64),
) -> PyResult<Vec<Vec<f64>>> {
    let m = reward_matrix(&rewards)?;
    let weights = CombineWeights::new(alpha.0, alpha.1, alpha.2).map_err(to_py_err)?;
    let own = grpo_advantage(&m).map_err(to_py_err)?;
    let percep = group_normalized_advantage(
        &m,
        &assignment_from_labels(perceptual)?,
        AdvantageKind::Perceptual,
    )
    .map_err(to_py_err)?;
    let reason = group_normalized_advantage(
        &m,
        &assignment_from_labels(reasoning)?,
        AdvantageKind::Reasoning,
    )
    .map_err(to_py_err)?;
    let blend = combine_advantages(&own, &percep, &reason, &weights).map_err(to_py_err)?;
    Ok(rows_of(blend.values(), m.group_size()))
}

/// Runs a full training experiment from a config string (`key = value`
/// lines, same grammar as `--config` files; unset keys take their
/// defaults). Returns a summary dict; the full outputs land in `out_dir`.
#[pyfunction]
fn run_experiment(py: Python<'_>, config_text: &str) -> PyResult<Py<PyDict>> {
    let mut cfg = ExperimentConfig::default();
    cfg.merge_str(config_text, "<config_text>").map_err(to_py_err)?;
    let summary = sim::run_experiment(&cfg).map_err(to_py_err)?;
    let first = summary.history.first();
    let last = summary.history.last();
    let dict = PyDict::new_bound(py);
    dict.set_item("steps", summary.history.len())?;
    dict.set_item("out_dir", summary.out_dir.display().to_string())?;
    dict.set_item("first_mean_accuracy", first.map(|m| m.mean_accuracy))?;
    dict.set_item("final_mean_accuracy", last.map(|m| m.mean_accuracy))?;
    dict.set_item("final_mean_reward", last.map(|m| m.mean_reward))?;
    dict.set_item("final_loss", last.map(|m| m.loss))?;
    Ok(dict.into())
}

#[pymodule]
fn durian_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(perceptual_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(eigvals_symmetric, m)?)?;
    m.add_function(wrap_pyfunction!(quantile, m)?)?;
    m.add_function(wrap_pyfunction!(grpo_advantages, m)?)?;
    m.add_function(wrap_pyfunction!(regroup_perceptual, m)?)?;
    m.add_function(wrap_pyfunction!(regroup_reasoning, m)?)?;
    m.add_function(wrap_pyfunction!(combined_advantages, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
