//! Library halves of the command-line tools: pure functions that read
//! inputs and produce output text, so every behavior is testable without
//! spawning a process. The binary only parses arguments, calls these, and
//! maps errors to exit codes.

use crate::advantage::RewardMatrix;
use crate::config::{ConfigOverrides, ExperimentConfig};
use crate::difficulty::{perceptual_difficulty, quantile};
use crate::error::{DurianError, DurianResult};
use crate::linalg::read_feature_matrix;
use crate::reward::{accuracy_reward, accuracy_reward_text, parse_text, parse_tokens, Vocab};
use crate::sim::{extreme_stats, render_extreme_table, run_experiment, ExtremeStats, RunSummary};
use serde::Deserialize;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Process exit code for an error: 2 for configuration problems, 4 for I/O
/// failures, 3 for everything else (bad data, numerical breakdowns).
pub fn exit_code(err: &DurianError) -> i32 {
    match err {
        DurianError::InvalidConfig(_) => 2,
        DurianError::Io { .. } => 4,
        _ => 3,
    }
}

/// Resolves the configuration (defaults → `DURIAN_SEED` → file → flags) and
/// runs the experiment.
pub fn run_train(config: Option<&Path>, overrides: &ConfigOverrides) -> DurianResult<RunSummary> {
    let cfg = ExperimentConfig::resolve(config, overrides)?;
    run_experiment(&cfg)
}

/// Output of the entropy scorer.
#[derive(Debug, Clone)]
pub struct EntropyReport {
    /// CSV lines (`path,patches,dims,entropy`) plus the summary stanza.
    pub stdout: String,
    /// One human-readable warning per unreadable file.
    pub warnings: Vec<String>,
}

/// Scores each feature-matrix file by its spectral entropy.
///
/// Unreadable or malformed files are skipped with a warning; the report
/// ends with the quartile summary over the files that did score. Only when
/// *every* file fails is the whole command an error.
pub fn entropy_report(paths: &[PathBuf]) -> DurianResult<EntropyReport> {
    if paths.is_empty() {
        return Err(DurianError::InvalidConfig(
            "no feature-matrix files given".into(),
        ));
    }
    let mut stdout = String::new();
    let mut warnings = Vec::new();
    let mut entropies = Vec::new();
    for path in paths {
        match read_feature_matrix(path).and_then(|m| perceptual_difficulty(&m).map(|h| (m, h))) {
            Ok((matrix, entropy)) => {
                let _ = writeln!(
                    stdout,
                    "{},{},{},{}",
                    path.display(),
                    matrix.rows(),
                    matrix.cols(),
                    entropy
                );
                entropies.push(entropy);
            }
            Err(e) => warnings.push(format!("skipping {}: {e}", path.display())),
        }
    }
    if entropies.is_empty() {
        return Err(DurianError::InvalidInput(format!(
            "all {} feature files failed to score",
            paths.len()
        )));
    }
    let _ = writeln!(stdout, "# summary");
    let _ = writeln!(stdout, "# files = {}", entropies.len());
    let _ = writeln!(stdout, "# q25 = {}", quantile(&entropies, 0.25)?);
    let _ = writeln!(stdout, "# q75 = {}", quantile(&entropies, 0.75)?);
    Ok(EntropyReport { stdout, warnings })
}

/// One rollout's outcome in a reward log. Exactly one of the three payload
/// forms must be present: a raw `accuracy`, a `response_text` with a string
/// `truth`, or `token_ids` with a numeric `truth`.
#[derive(Debug, Deserialize)]
struct LogRecord {
    step: usize,
    sample_id: u64,
    rollout_id: u64,
    #[serde(default)]
    accuracy: Option<f64>,
    #[serde(default)]
    response_text: Option<String>,
    #[serde(default)]
    token_ids: Option<Vec<u32>>,
    #[serde(default)]
    truth: Option<serde_json::Value>,
}

impl LogRecord {
    fn resolve_accuracy(&self, vocab: &Vocab) -> Result<f64, String> {
        if let Some(acc) = self.accuracy {
            if acc == 0.0 || acc == 1.0 {
                return Ok(acc);
            }
            return Err(format!("accuracy {acc} is neither 0 nor 1"));
        }
        if let Some(text) = &self.response_text {
            let truth = match &self.truth {
                Some(serde_json::Value::String(s)) => s,
                _ => return Err("response_text needs a string truth".to_string()),
            };
            let parsed = parse_text(text);
            return Ok(accuracy_reward_text(&parsed, truth));
        }
        if let Some(tokens) = &self.token_ids {
            let truth = match &self.truth {
                Some(serde_json::Value::Number(n)) => n
                    .as_u64()
                    .ok_or_else(|| "token truth must be a small non-negative integer".to_string())?,
                _ => return Err("token_ids needs a numeric truth".to_string()),
            };
            let parsed = parse_tokens(tokens, vocab);
            return Ok(accuracy_reward(&parsed, truth as u32));
        }
        Err("record carries neither accuracy, response_text, nor token_ids".to_string())
    }
}

/// What the reward-log analyzer found.
#[derive(Debug, Clone)]
pub struct AnalyzeOutcome {
    /// The rendered extreme-case table.
    pub table: String,
    /// Per-step statistics backing the table, in step order.
    pub steps: Vec<(usize, ExtremeStats)>,
    /// Groups dropped for having the wrong number of rollouts.
    pub incomplete_groups: usize,
}

/// Aggregates a JSONL rollout log into per-step extreme-case statistics.
///
/// Records are grouped by `(step, sample_id)`; only groups with exactly
/// `group_size` rollouts count (others are dropped and tallied). The result
/// is independent of record order in the file. `num_answers` is only needed
/// to decode `token_ids` records.
pub fn analyze_rewards(
    log: &Path,
    group_size: usize,
    num_answers: usize,
) -> DurianResult<AnalyzeOutcome> {
    if group_size < 2 {
        return Err(DurianError::InvalidConfig(format!(
            "group-size = {group_size} cannot form a group; need at least 2"
        )));
    }
    let vocab = Vocab::new(num_answers)?;
    let text = std::fs::read_to_string(log).map_err(|e| DurianError::io(log, e))?;
    // (step, sample) -> rollout -> accuracy; BTreeMaps make the aggregation
    // order-independent, so a shuffled log analyzes identically.
    let mut groups: BTreeMap<(usize, u64), BTreeMap<u64, f64>> = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fail = |msg: String| DurianError::malformed(log, idx + 1, msg);
        let record: LogRecord =
            serde_json::from_str(line).map_err(|e| fail(format!("bad JSON: {e}")))?;
        let acc = record.resolve_accuracy(&vocab).map_err(fail)?;
        let slot = groups.entry((record.step, record.sample_id)).or_default();
        if slot.insert(record.rollout_id, acc).is_some() {
            return Err(fail(format!(
                "duplicate rollout {} for sample {} at step {}",
                record.rollout_id, record.sample_id, record.step
            )));
        }
    }
    let mut incomplete = 0usize;
    let mut per_step: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for ((step, _sample), rollouts) in groups {
        if rollouts.len() != group_size {
            incomplete += 1;
            continue;
        }
        per_step.entry(step).or_default().extend(rollouts.values());
    }
    let mut steps = Vec::with_capacity(per_step.len());
    for (step, values) in per_step {
        let batch = values.len() / group_size;
        let matrix = RewardMatrix::new(batch, group_size, values)?;
        steps.push((step, extreme_stats(&matrix)?));
    }
    Ok(AnalyzeOutcome {
        table: render_extreme_table(group_size, &steps),
        steps,
        incomplete_groups: incomplete,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{write_feature_matrix_binary, write_feature_matrix_text, Matrix};
    use std::io::Write as _;

    fn demo_matrix() -> Matrix {
        // 4x3 with visible spread so the entropy is comfortably positive.
        Matrix::new(
            4,
            3,
            vec![
                1.0, 0.0, 0.0, //
                0.0, 2.0, 0.0, //
                0.0, 0.0, 3.0, //
                1.0, 1.0, 1.0,
            ],
        )
        .unwrap()
    }

    #[test]
    fn entropy_report_scores_and_summarizes() {
        let dir = tempfile::tempdir().unwrap();
        let text_path = dir.path().join("a.txt");
        let bin_path = dir.path().join("b.f64");
        write_feature_matrix_text(&text_path, &demo_matrix()).unwrap();
        write_feature_matrix_binary(&bin_path, &demo_matrix()).unwrap();
        let report = entropy_report(&[text_path.clone(), bin_path]).unwrap();
        let lines: Vec<&str> = report.stdout.lines().collect();
        assert_eq!(lines.len(), 6); // two files + four summary lines
        assert!(lines[0].starts_with(&format!("{},4,3,", text_path.display())));
        // Identical matrices in both formats: identical entropies.
        let h0: f64 = lines[0].rsplit(',').next().unwrap().parse().unwrap();
        let h1: f64 = lines[1].rsplit(',').next().unwrap().parse().unwrap();
        assert_eq!(h0, h1);
        assert_eq!(lines[2], "# summary");
        assert_eq!(lines[3], "# files = 2");
        assert!(report.warnings.is_empty());
    }

    #[test]
    fn entropy_report_skips_broken_files_and_fails_only_when_all_do() {
        let dir = tempfile::tempdir().unwrap();
        let good = dir.path().join("good.txt");
        write_feature_matrix_text(&good, &demo_matrix()).unwrap();
        let bad = dir.path().join("bad.txt");
        std::fs::write(&bad, "not a matrix\n").unwrap();
        let report = entropy_report(&[good, bad.clone()]).unwrap();
        assert_eq!(report.warnings.len(), 1);
        assert!(report.warnings[0].contains("bad.txt"));

        let err = entropy_report(&[bad]).unwrap_err();
        assert!(matches!(err, DurianError::InvalidInput(_)));
    }

    fn write_log(lines: &[String]) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        let mut f = std::fs::File::create(&path).unwrap();
        for line in lines {
            writeln!(f, "{line}").unwrap();
        }
        (dir, path)
    }

    fn acc_record(step: usize, sample: u64, rollout: u64, acc: u8) -> String {
        format!(
            "{{\"step\":{step},\"sample_id\":{sample},\"rollout_id\":{rollout},\"accuracy\":{acc}}}"
        )
    }

    #[test]
    fn analyze_counts_lopsided_groups() {
        let mut lines = Vec::new();
        // Sample 0: 3 correct, 1 wrong (extreme success at G=4).
        for r in 0..4u64 {
            lines.push(acc_record(1, 0, r, u8::from(r != 3)));
        }
        // Sample 1: unanimous.
        for r in 0..4u64 {
            lines.push(acc_record(1, 1, r, 1));
        }
        // Sample 2: incomplete (3 of 4 rollouts) — excluded.
        for r in 0..3u64 {
            lines.push(acc_record(1, 2, r, 0));
        }
        let (_dir, path) = write_log(&lines);
        let outcome = analyze_rewards(&path, 4, 4).unwrap();
        assert_eq!(outcome.incomplete_groups, 1);
        assert_eq!(outcome.steps.len(), 1);
        let (step, stats) = &outcome.steps[0];
        assert_eq!(*step, 1);
        assert_eq!(stats.effective, 1);
        assert_eq!(stats.extreme_success, 1);
        assert!(outcome.table.contains("Extreme success (3 correct & 1 wrong),1"));
    }

    #[test]
    fn analyze_is_shuffle_invariant() {
        let mut lines = Vec::new();
        for sample in 0..6u64 {
            for r in 0..4u64 {
                let acc = u8::from((sample + r) % 3 != 0);
                lines.push(acc_record(1 + sample as usize % 2, sample, r, acc));
            }
        }
        let (_dir, path) = write_log(&lines);
        let forward = analyze_rewards(&path, 4, 4).unwrap();
        let mut reversed: Vec<String> = lines.clone();
        reversed.reverse();
        let (_dir2, path2) = write_log(&reversed);
        let backward = analyze_rewards(&path2, 4, 4).unwrap();
        assert_eq!(forward.table, backward.table);
    }

    #[test]
    fn analyze_decodes_text_and_token_records() {
        let text_rec = |step: usize, sample: u64, rollout: u64, ans: &str| {
            format!(
                "{{\"step\":{step},\"sample_id\":{sample},\"rollout_id\":{rollout},\
                 \"response_text\":\"<think>hm</think> \\\\boxed{{{ans}}}\",\"truth\":\"42\"}}"
            )
        };
        // Token form: MARK answer END with THINK prefix; truth is answer 1.
        let token_rec = |step: usize, sample: u64, rollout: u64, ans: u32| {
            format!(
                "{{\"step\":{step},\"sample_id\":{sample},\"rollout_id\":{rollout},\
                 \"token_ids\":[0,1,{},2],\"truth\":1}}",
                3 + ans
            )
        };
        let lines = vec![
            text_rec(1, 0, 0, "42"),
            text_rec(1, 0, 1, "41"),
            token_rec(1, 1, 0, 1),
            token_rec(1, 1, 1, 0),
        ];
        let (_dir, path) = write_log(&lines);
        let outcome = analyze_rewards(&path, 2, 4).unwrap();
        // Both groups are 1-vs-1 mixes: effective, counted as extreme.
        assert_eq!(outcome.steps[0].1.effective, 2);
    }

    #[test]
    fn analyze_reports_bad_lines_precisely() {
        let lines = vec![
            acc_record(1, 0, 0, 1),
            "{\"step\":1,\"sample_id\":0,\"rollout_id\":1,\"accuracy\":0.4}".to_string(),
        ];
        let (_dir, path) = write_log(&lines);
        let err = analyze_rewards(&path, 2, 4).unwrap_err();
        let msg = err.to_string();
        // Malformed errors point at the file and line: "…log.jsonl:2: …".
        assert!(msg.contains("log.jsonl:2:"), "{msg}");
        assert!(msg.contains("neither 0 nor 1"), "{msg}");

        let dup = vec![acc_record(1, 0, 0, 1), acc_record(1, 0, 0, 1)];
        let (_dir2, path2) = write_log(&dup);
        let err = analyze_rewards(&path2, 2, 4).unwrap_err();
        assert!(err.to_string().contains("duplicate rollout"));
    }

    #[test]
    fn exit_codes_map_by_error_class() {
        assert_eq!(exit_code(&DurianError::InvalidConfig("x".into())), 2);
        assert_eq!(
            exit_code(&DurianError::io(
                Path::new("p"),
                std::io::Error::new(std::io::ErrorKind::NotFound, "gone"),
            )),
            4
        );
        assert_eq!(exit_code(&DurianError::DegenerateSpectrum), 3);
        assert_eq!(exit_code(&DurianError::malformed(Path::new("p"), 3, "bad")), 3);
    }
}
