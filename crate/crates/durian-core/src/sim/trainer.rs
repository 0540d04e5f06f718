//! The training loop: rollouts, rewards, dynamic sampling, difficulty
//! grouping, blended advantages, one clipped-surrogate step — repeated under
//! a seed, with every number logged.
//!
//! Randomness is split into independent streams keyed by purpose and index
//! (task pool entry, batch pick, per-sample rollouts), so any one sample's
//! rollouts can be reproduced without replaying the run and the batch is
//! identical no matter how the loops are reorganized.
//!
//! Output files are plain text with stable formatting and no timestamps:
//! two runs of the same configuration are byte-identical.

use crate::advantage::{
    combine_advantages, grpo_advantage, group_normalized_advantage, mean_and_std,
    token_broadcast, AdvantageKind, AdvantageMatrix, RewardMatrix,
};
use crate::config::{ExperimentConfig, ObjectiveKind, QuantileScope};
use crate::difficulty::{
    quantile, regroup_perceptual, regroup_perceptual_with_thresholds, regroup_reasoning,
    sample_confidence, ConfidenceScore, GroupAssignment, PerceptualScore,
};
use crate::error::{DurianError, DurianResult};
use crate::objective::{
    aggregation_weights, dapo_surrogate, dynamic_sampling_filter, grpo_surrogate, PolicyEval,
    ResponseEval, SurrogateOutput,
};
use crate::reward::{accuracy_reward, format_reward, overall_reward, parse_tokens, Vocab};
use crate::sim::policy::{ResponseRecord, ToyPolicy};
use crate::sim::stats::{extreme_stats, render_extreme_table, ExtremeStats};
use crate::sim::task::{generate_task, SyntheticTask};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

/// Stream labels for the seed-splitting scheme.
const STREAM_POOL: u64 = 1;
const STREAM_PICK: u64 = 2;
const STREAM_ROLLOUT: u64 = 3;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// An independent RNG for one (purpose, index) pair under the master seed.
fn substream(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    let key = splitmix64(splitmix64(splitmix64(seed) ^ stream) ^ index);
    ChaCha8Rng::seed_from_u64(key)
}

/// Rollout streams are keyed by (step, sample) packed into one index.
fn rollout_index(step: usize, sample: usize) -> u64 {
    ((step as u64) << 32) | sample as u64
}

/// Overlong shaping: a linear penalty ramp between the caps, clamped so the
/// shaped reward never goes negative. `soft == 0` disables shaping.
fn overlong_shaped(reward: f64, len: usize, soft: usize, hard: usize) -> f64 {
    if soft == 0 || len <= soft {
        return reward;
    }
    let ramp = if len >= hard {
        1.0
    } else {
        (len - soft) as f64 / (hard - soft) as f64
    };
    (reward - ramp).max(0.0)
}

/// `x` with six significant digits, in plain decimal where reasonable.
/// Stable across runs — this is what makes the logs byte-comparable.
fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let exp = x.abs().log10().floor() as i32;
    if !(-4..6).contains(&exp) {
        format!("{x:.5e}")
    } else {
        format!("{:.*}", (5 - exp).max(0) as usize, x)
    }
}

/// Everything measured in one training step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepMetrics {
    pub step: usize,
    /// Mean overall reward across all rollouts, before any masking.
    pub mean_reward: f64,
    /// Mean accuracy across all rollouts, before any masking.
    pub mean_accuracy: f64,
    pub loss: f64,
    pub kl: f64,
    pub clip_fraction: f64,
    pub mean_ratio_dev: f64,
    pub max_ratio_dev: f64,
    /// Rows removed by dynamic sampling.
    pub masked_rows: usize,
    pub masked_fraction: f64,
    pub extreme: ExtremeStats,
    /// True when every row was masked and no update happened.
    pub starved: bool,
    /// Pooled reward std per perceptual group (always 3 entries; 0 where a
    /// group was empty, degenerate, or grouping was off).
    pub perceptual_stds: Vec<f64>,
    /// Pooled reward std per reasoning band (always `groups_b` entries).
    pub reasoning_stds: Vec<f64>,
}

/// Per-sample diagnostic record, one JSON line each.
#[derive(Debug, Clone, Serialize)]
pub struct SampleDiag {
    pub step: usize,
    pub sample_id: usize,
    /// Index of the task in the generated pool.
    pub task_id: usize,
    pub entropy: f64,
    pub confidence: Option<f64>,
    pub percep_group: Option<usize>,
    pub reason_group: Option<usize>,
    /// Row removed by dynamic sampling.
    pub masked: bool,
    pub rewards: Vec<f64>,
    pub accuracy: Vec<f64>,
    pub format: Vec<f64>,
    pub adv_original: Vec<f64>,
    pub adv_perceptual: Option<Vec<f64>>,
    pub adv_reasoning: Option<Vec<f64>>,
    pub adv_combined: Vec<f64>,
}

/// The difficulty-grouping products of one step, kept for logging.
struct GroupingOutcome {
    combined: AdvantageMatrix,
    original: AdvantageMatrix,
    perceptual: Option<(GroupAssignment, AdvantageMatrix)>,
    reasoning: Option<(GroupAssignment, AdvantageMatrix)>,
    confidences: Option<Vec<f64>>,
}

/// Simulation trainer: owns the task pool, the policy, and its frozen
/// reference, and advances one batch per [`Trainer::run_step`].
pub struct Trainer {
    cfg: ExperimentConfig,
    vocab: Vocab,
    tasks: Vec<SyntheticTask>,
    /// Entropy thresholds frozen from the pool (for `quantile_scope = pool`).
    pool_thresholds: (f64, f64),
    policy: ToyPolicy,
    reference: ToyPolicy,
}

impl Trainer {
    /// Generates the task pool and a zero-initialized policy pair.
    pub fn new(cfg: ExperimentConfig) -> DurianResult<Self> {
        cfg.validate()?;
        let dims = cfg.task_dims();
        let vocab = Vocab::new(cfg.num_answers)?;
        let mut tasks = Vec::with_capacity(cfg.task_pool_size);
        for i in 0..cfg.task_pool_size {
            let mut rng = substream(cfg.seed, STREAM_POOL, i as u64);
            let entropy = if cfg.entropy_max > cfg.entropy_min {
                rng.gen_range(cfg.entropy_min..cfg.entropy_max)
            } else {
                cfg.entropy_min
            };
            let hardness = if cfg.hardness_max > cfg.hardness_min {
                rng.gen_range(cfg.hardness_min..cfg.hardness_max)
            } else {
                cfg.hardness_min
            };
            tasks.push(generate_task(entropy, hardness, &dims, &mut rng)?);
        }
        let entropies: Vec<f64> = tasks.iter().map(|t| t.entropy).collect();
        let pool_thresholds = (
            quantile(&entropies, cfg.quantile_low)?,
            quantile(&entropies, cfg.quantile_high)?,
        );
        let policy = ToyPolicy::new(
            vocab,
            cfg.context_dim,
            cfg.feat_dim,
            cfg.temperature,
            cfg.max_len,
        )?;
        let reference = policy.clone();
        Ok(Trainer {
            cfg,
            vocab,
            tasks,
            pool_thresholds,
            policy,
            reference,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn tasks(&self) -> &[SyntheticTask] {
        &self.tasks
    }

    pub fn policy(&self) -> &ToyPolicy {
        &self.policy
    }

    #[cfg(test)]
    pub(crate) fn policy_mut(&mut self) -> &mut ToyPolicy {
        &mut self.policy
    }

    /// Which pool tasks step `step` trains on (with replacement).
    fn pick_batch(&self, step: usize) -> Vec<usize> {
        let mut rng = substream(self.cfg.seed, STREAM_PICK, step as u64);
        (0..self.cfg.batch_size)
            .map(|_| rng.gen_range(0..self.tasks.len()))
            .collect()
    }

    /// Samples the G rollouts for every picked task.
    fn collect_rollouts(
        &self,
        step: usize,
        picks: &[usize],
    ) -> DurianResult<Vec<Vec<ResponseRecord>>> {
        let mut records = Vec::with_capacity(picks.len());
        for (s, &task_id) in picks.iter().enumerate() {
            let task = &self.tasks[task_id];
            let mut rng = substream(self.cfg.seed, STREAM_ROLLOUT, rollout_index(step, s));
            let mut row = Vec::with_capacity(self.cfg.rollout_g);
            for _ in 0..self.cfg.rollout_g {
                row.push(self.policy.rollout(task, &mut rng)?);
            }
            records.push(row);
        }
        Ok(records)
    }

    /// Scores every rollout: overall (shaped), accuracy, format matrices.
    fn score_rollouts(
        &self,
        picks: &[usize],
        records: &[Vec<ResponseRecord>],
    ) -> DurianResult<(RewardMatrix, RewardMatrix, RewardMatrix)> {
        let b = picks.len();
        let g = self.cfg.rollout_g;
        let weights = self.cfg.reward_weights()?;
        let mut overall = vec![0.0; b * g];
        let mut accuracy = vec![0.0; b * g];
        let mut format = vec![0.0; b * g];
        for (s, &task_id) in picks.iter().enumerate() {
            let truth = self.tasks[task_id].truth;
            for (i, rec) in records[s].iter().enumerate() {
                let parsed = parse_tokens(&rec.tokens, &self.vocab);
                let f = format_reward(&parsed, &self.vocab);
                let a = accuracy_reward(&parsed, truth);
                let o = overlong_shaped(
                    overall_reward(f, a, &weights),
                    rec.tokens.len(),
                    self.cfg.overlong_soft_cap,
                    self.cfg.overlong_hard_cap,
                );
                overall[s * g + i] = o;
                accuracy[s * g + i] = a;
                format[s * g + i] = f;
            }
        }
        Ok((
            RewardMatrix::new(b, g, overall)?,
            RewardMatrix::new(b, g, accuracy)?,
            RewardMatrix::new(b, g, format)?,
        ))
    }

    /// Pooled reward std per group, tolerant for logging: empty or
    /// single-member pools report 0 instead of failing.
    fn group_stds_for_log(
        rewards: &RewardMatrix,
        assignment: &GroupAssignment,
        pad_to: usize,
    ) -> Vec<f64> {
        let mut stds: Vec<f64> = assignment
            .members()
            .iter()
            .map(|members| {
                let pooled: Vec<f64> = members
                    .iter()
                    .flat_map(|&s| rewards.valid_row_values(s))
                    .collect();
                match mean_and_std(&pooled) {
                    (_, Some(sd)) => sd,
                    _ => 0.0,
                }
            })
            .collect();
        stds.resize(pad_to.max(stds.len()), 0.0);
        stds
    }

    /// Runs the difficulty-grouping pipeline over one batch's rewards.
    ///
    /// With grouping disabled — or both blend weights zero — the combined
    /// advantages are exactly (bit for bit) the vanilla per-sample ones; the
    /// group machinery is not even consulted.
    fn compute_advantages(
        &self,
        picks: &[usize],
        records: &[Vec<ResponseRecord>],
        adv_source: &RewardMatrix,
    ) -> DurianResult<GroupingOutcome> {
        let original = grpo_advantage(adv_source)?;
        let blending = self.cfg.grouping
            && (self.cfg.alpha.perceptual > 0.0 || self.cfg.alpha.reasoning > 0.0);
        if !blending {
            return Ok(GroupingOutcome {
                combined: original.clone(),
                original,
                perceptual: None,
                reasoning: None,
                confidences: None,
            });
        }
        let scores: Vec<PerceptualScore> = picks
            .iter()
            .enumerate()
            .map(|(s, &task_id)| PerceptualScore {
                sample_id: s,
                entropy: self.tasks[task_id].entropy,
            })
            .collect();
        let percep_assign = match self.cfg.quantile_scope {
            QuantileScope::Batch => regroup_perceptual(
                &scores,
                (self.cfg.quantile_low, self.cfg.quantile_high),
            )?,
            QuantileScope::Pool => {
                regroup_perceptual_with_thresholds(&scores, self.pool_thresholds)?
            }
        };
        let confidences: Vec<f64> = records
            .iter()
            .map(|row| {
                let logprobs: Vec<Vec<f64>> =
                    row.iter().map(|r| r.logprobs.clone()).collect();
                sample_confidence(&logprobs, self.cfg.normalize_logprob)
            })
            .collect::<DurianResult<_>>()?;
        let conf_scores: Vec<ConfidenceScore> = confidences
            .iter()
            .enumerate()
            .map(|(s, &mean_logprob)| ConfidenceScore {
                sample_id: s,
                mean_logprob,
            })
            .collect();
        let reason_assign = regroup_reasoning(&conf_scores, self.cfg.groups_b)?;
        let perceptual =
            group_normalized_advantage(adv_source, &percep_assign, AdvantageKind::Perceptual)?;
        let reasoning =
            group_normalized_advantage(adv_source, &reason_assign, AdvantageKind::Reasoning)?;
        let combined = combine_advantages(&original, &perceptual, &reasoning, &self.cfg.alpha)?;
        Ok(GroupingOutcome {
            combined,
            original,
            perceptual: Some((percep_assign, perceptual)),
            reasoning: Some((reason_assign, reasoning)),
            confidences: Some(confidences),
        })
    }

    /// Re-scores all rollouts under the current policy and the frozen
    /// reference.
    fn build_eval(
        &self,
        picks: &[usize],
        records: &[Vec<ResponseRecord>],
        mask: &[bool],
    ) -> DurianResult<PolicyEval> {
        let mut responses = Vec::with_capacity(picks.len());
        for (s, &task_id) in picks.iter().enumerate() {
            let task = &self.tasks[task_id];
            let mut row = Vec::with_capacity(records[s].len());
            for rec in &records[s] {
                let (new_logprobs, new_dists) = self.policy.evaluate(task, &rec.tokens)?;
                let (_, ref_dists) = self.reference.evaluate(task, &rec.tokens)?;
                row.push(ResponseEval {
                    new_logprobs,
                    old_logprobs: rec.logprobs.clone(),
                    new_dists,
                    ref_dists,
                });
            }
            responses.push(row);
        }
        PolicyEval::new(responses, Some(mask.to_vec()))
    }

    /// One full training step. Returns the step's metrics and one diagnostic
    /// record per sample.
    pub fn run_step(&mut self, step: usize) -> DurianResult<(StepMetrics, Vec<SampleDiag>)> {
        let b = self.cfg.batch_size;
        let g = self.cfg.rollout_g;
        let picks = self.pick_batch(step);
        let records = self.collect_rollouts(step, &picks)?;
        let (overall, accuracy, format) = self.score_rollouts(&picks, &records)?;
        let extreme = extreme_stats(&accuracy)?;

        let (keep, filter) = dynamic_sampling_filter(&overall);
        let starved = filter.kept_rows == 0;
        let mut rewards = overall.clone();
        rewards.apply_row_mask(&keep)?;
        let adv_source = if self.cfg.pool_masked_rewards {
            rewards.unmasked_copy()
        } else {
            rewards.clone()
        };

        let grouping = self.compute_advantages(&picks, &records, &adv_source)?;
        let lengths: Vec<Vec<usize>> = records
            .iter()
            .map(|row| row.iter().map(|r| r.tokens.len()).collect())
            .collect();
        let token_adv = token_broadcast(&grouping.combined, &lengths)?;

        // Eval masks follow the dynamic filter regardless of where the
        // advantage statistics pooled from.
        let mask: Vec<bool> = (0..b * g).map(|k| keep[k / g]).collect();
        let obj = self.cfg.objective_config();
        let mut last: Option<(PolicyEval, SurrogateOutput)> = None;
        for _ in 0..self.cfg.epochs {
            let eval = self.build_eval(&picks, &records, &mask)?;
            let out = match self.cfg.objective {
                ObjectiveKind::Grpo => grpo_surrogate(&eval, &token_adv, &obj)?,
                ObjectiveKind::Dapo => dapo_surrogate(&eval, &token_adv, &obj)?,
            };
            if !starved {
                let grad = weight_gradient(
                    &self.policy,
                    &self.tasks,
                    &picks,
                    &records,
                    &eval,
                    &out,
                    &self.cfg,
                )?;
                self.policy.apply_gradient(&grad, self.cfg.lr)?;
            }
            last = Some((eval, out));
        }
        let (_, out) = last.expect("epochs >= 1 is validated");

        let percep_stds = match &grouping.perceptual {
            Some((assign, _)) => Self::group_stds_for_log(&adv_source, assign, 3),
            None => vec![0.0; 3],
        };
        let reason_stds = match &grouping.reasoning {
            Some((assign, _)) => Self::group_stds_for_log(&adv_source, assign, self.cfg.groups_b),
            None => vec![0.0; self.cfg.groups_b],
        };

        let all = |m: &RewardMatrix| -> f64 {
            let mut total = 0.0;
            for s in 0..b {
                total += m.row(s).iter().sum::<f64>();
            }
            total / (b * g) as f64
        };

        let metrics = StepMetrics {
            step,
            mean_reward: all(&overall),
            mean_accuracy: all(&accuracy),
            loss: out.loss,
            kl: out.metrics.kl,
            clip_fraction: out.metrics.clip_fraction,
            mean_ratio_dev: out.metrics.mean_ratio_dev,
            max_ratio_dev: out.metrics.max_ratio_dev,
            masked_rows: filter.masked_rows,
            masked_fraction: filter.masked_rows as f64 / b as f64,
            extreme,
            starved,
            perceptual_stds: percep_stds,
            reasoning_stds: reason_stds,
        };

        let mut diags = Vec::with_capacity(b);
        for s in 0..b {
            diags.push(SampleDiag {
                step,
                sample_id: s,
                task_id: picks[s],
                entropy: self.tasks[picks[s]].entropy,
                confidence: grouping.confidences.as_ref().map(|c| c[s]),
                percep_group: grouping
                    .perceptual
                    .as_ref()
                    .map(|(assign, _)| assign.labels[s]),
                reason_group: grouping
                    .reasoning
                    .as_ref()
                    .map(|(assign, _)| assign.labels[s]),
                masked: !keep[s],
                rewards: overall.row(s).to_vec(),
                accuracy: accuracy.row(s).to_vec(),
                format: format.row(s).to_vec(),
                adv_original: grouping.original.row(s).to_vec(),
                adv_perceptual: grouping
                    .perceptual
                    .as_ref()
                    .map(|(_, adv)| adv.row(s).to_vec()),
                adv_reasoning: grouping
                    .reasoning
                    .as_ref()
                    .map(|(_, adv)| adv.row(s).to_vec()),
                adv_combined: grouping.combined.row(s).to_vec(),
            });
        }
        Ok((metrics, diags))
    }
}

/// Chains the surrogate's per-token log-prob gradients through the masked
/// softmax into weight space, adding the KL penalty's analytic term when the
/// objective carries one.
///
/// For the sampled token's log-prob, `d ln p_tok / d z_u = (δ_{u,tok} -
/// p_u) / T` over the allowed set; for the KL penalty, `d KL / d z_u = p_u
/// (ln(p_u/q_u) - KL) / T`. Disallowed tokens have zero mass and zero
/// gradient.
#[allow(clippy::too_many_arguments)]
fn weight_gradient(
    policy: &ToyPolicy,
    tasks: &[SyntheticTask],
    picks: &[usize],
    records: &[Vec<ResponseRecord>],
    eval: &PolicyEval,
    surrogate: &SurrogateOutput,
    cfg: &ExperimentConfig,
) -> DurianResult<Vec<f64>> {
    let vocab_size = policy.vocab().size();
    let input_dim = policy.input_dim();
    let t_inv = 1.0 / policy.temperature();
    let kl_weight = match cfg.objective {
        ObjectiveKind::Grpo => cfg.beta,
        ObjectiveKind::Dapo => 0.0,
    };
    let agg = if kl_weight > 0.0 {
        Some(aggregation_weights(eval, cfg.objective_config().loss_style))
    } else {
        None
    };
    let mut dw = vec![0.0; vocab_size * input_dim];
    let mut dz = vec![0.0; vocab_size];
    for (s, &task_id) in picks.iter().enumerate() {
        let x = policy.embed(&tasks[task_id])?;
        for i in 0..eval.group_size() {
            if !eval.is_valid(s, i) {
                continue;
            }
            let resp = eval.response(s, i);
            for t in 0..resp.len() {
                let gl = surrogate.grads[s][i][t];
                let tok = records[s][i].tokens[t] as usize;
                let p = &resp.new_dists[t];
                dz.iter_mut().for_each(|v| *v = 0.0);
                for (u, &pu) in p.iter().enumerate() {
                    if pu > 0.0 {
                        let delta = if u == tok { 1.0 } else { 0.0 };
                        dz[u] += gl * (delta - pu) * t_inv;
                    }
                }
                if let Some(agg) = &agg {
                    let q = &resp.ref_dists[t];
                    let mut kl_t = 0.0;
                    for (&pu, &qu) in p.iter().zip(q) {
                        if pu > 0.0 {
                            kl_t += pu * (pu / qu).ln();
                        }
                    }
                    let w = kl_weight * agg[s][i];
                    for (u, (&pu, &qu)) in p.iter().zip(q).enumerate() {
                        if pu > 0.0 {
                            dz[u] += w * t_inv * pu * ((pu / qu).ln() - kl_t);
                        }
                    }
                }
                for (u, &dzu) in dz.iter().enumerate() {
                    if dzu != 0.0 {
                        let row = &mut dw[u * input_dim..(u + 1) * input_dim];
                        for (slot, &xj) in row.iter_mut().zip(&x) {
                            *slot += dzu * xj;
                        }
                    }
                }
            }
        }
    }
    Ok(dw)
}

/// Summary of a finished run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub history: Vec<StepMetrics>,
    pub out_dir: PathBuf,
}

fn create_file(path: &Path) -> DurianResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| DurianError::io(path, e))
}

fn metrics_header(groups_b: usize) -> String {
    let mut h = String::from(
        "step,mean_reward,mean_accuracy,loss,kl,clip_fraction,mean_ratio_dev,max_ratio_dev,\
         masked_rows,masked_fraction,extreme_ratio,starved",
    );
    for k in 0..3 {
        h.push_str(&format!(",percep_std_{k}"));
    }
    for k in 0..groups_b {
        h.push_str(&format!(",reason_std_{k}"));
    }
    h
}

fn metrics_row(m: &StepMetrics) -> String {
    let mut row = format!(
        "{},{},{},{},{},{},{},{},{},{},{},{}",
        m.step,
        fmt_sig(m.mean_reward),
        fmt_sig(m.mean_accuracy),
        fmt_sig(m.loss),
        fmt_sig(m.kl),
        fmt_sig(m.clip_fraction),
        fmt_sig(m.mean_ratio_dev),
        fmt_sig(m.max_ratio_dev),
        m.masked_rows,
        fmt_sig(m.masked_fraction),
        m.extreme
            .ratio()
            .map(fmt_sig)
            .unwrap_or_else(|| "-".to_string()),
        u8::from(m.starved),
    );
    for sd in &m.perceptual_stds {
        row.push_str(&format!(",{}", fmt_sig(*sd)));
    }
    for sd in &m.reasoning_stds {
        row.push_str(&format!(",{}", fmt_sig(*sd)));
    }
    row
}

/// Steps whose extreme-case counts make it into the summary table.
fn is_table_step(step: usize) -> bool {
    step == 1 || step % 10 == 0
}

/// Runs a full experiment and writes its outputs under `cfg.out_dir`:
/// `config.txt` (the exact configuration, reparseable), `metrics.csv` (one
/// row per step), `diag.jsonl` (per-sample records every `diag_every`
/// steps), and `extreme_table.csv` (the lopsided-row summary at steps 1,
/// 10, 20, …).
pub fn run_experiment(cfg: &ExperimentConfig) -> DurianResult<RunSummary> {
    cfg.validate()?;
    let out_dir = PathBuf::from(&cfg.out_dir);
    std::fs::create_dir_all(&out_dir).map_err(|e| DurianError::io(&out_dir, e))?;

    let config_path = out_dir.join("config.txt");
    std::fs::write(&config_path, cfg.echo()).map_err(|e| DurianError::io(&config_path, e))?;

    let mut trainer = Trainer::new(cfg.clone())?;
    let mut metrics_file = create_file(&out_dir.join("metrics.csv"))?;
    let metrics_path = out_dir.join("metrics.csv");
    writeln!(metrics_file, "{}", metrics_header(cfg.groups_b))
        .map_err(|e| DurianError::io(&metrics_path, e))?;
    let diag_path = out_dir.join("diag.jsonl");
    let mut diag_file = create_file(&diag_path)?;

    let mut history = Vec::with_capacity(cfg.steps);
    let mut table_columns = Vec::new();
    for step in 1..=cfg.steps {
        let (metrics, diags) = trainer.run_step(step)?;
        writeln!(metrics_file, "{}", metrics_row(&metrics))
            .map_err(|e| DurianError::io(&metrics_path, e))?;
        if step % cfg.diag_every == 0 {
            for diag in &diags {
                let line = serde_json::to_string(diag).map_err(|e| {
                    DurianError::InvalidInput(format!("diagnostic record failed to serialize: {e}"))
                })?;
                writeln!(diag_file, "{line}").map_err(|e| DurianError::io(&diag_path, e))?;
            }
        }
        if is_table_step(step) {
            table_columns.push((step, metrics.extreme));
        }
        history.push(metrics);
    }
    metrics_file
        .flush()
        .map_err(|e| DurianError::io(&metrics_path, e))?;
    diag_file
        .flush()
        .map_err(|e| DurianError::io(&diag_path, e))?;

    let table_path = out_dir.join("extreme_table.csv");
    std::fs::write(
        &table_path,
        render_extreme_table(cfg.rollout_g, &table_columns),
    )
    .map_err(|e| DurianError::io(&table_path, e))?;

    Ok(RunSummary { history, out_dir })
}
