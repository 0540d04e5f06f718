//! Clipped surrogate objectives over token-level advantages.
//!
//! Both surrogates share the same per-token core: the importance ratio
//! `exp(new - old)` times the advantage, taken at its clipped value whenever
//! clipping makes the objective smaller (the pessimistic `min`). They differ
//! in clip shape and bookkeeping:
//!
//! * [`grpo_surrogate`] — symmetric clip radius, a KL penalty against a
//!   frozen reference policy, and response-mean aggregation: every response
//!   weighs the same regardless of length.
//! * [`dapo_surrogate`] — asymmetric clip bounds (a wider ceiling lets
//!   low-probability tokens grow), no KL term, and token-mean aggregation:
//!   every token of a sample weighs the same, so long responses matter more.
//!
//! Losses are returned negated (minimization convention) together with
//! analytic per-token gradients with respect to the *sampled-token new
//! log-probs*. The KL value is exact — computed from the stored full
//! categorical distributions — and therefore constant in those variables;
//! its parameter gradient flows through the policy's distributions and is
//! the trainer's responsibility.

use crate::advantage::RewardMatrix;
use crate::error::{DurianError, DurianResult};

/// How per-token terms are averaged into a scalar objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossStyle {
    /// Mean over samples, of the mean over responses, of the mean over each
    /// response's tokens: length-neutral.
    ResponseMean,
    /// Mean over samples of (sum over the sample's tokens) / (sample's total
    /// token count): length-weighted within each sample.
    TokenMean,
}

/// Knobs for the surrogate objectives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveConfig {
    /// Symmetric clip radius for [`grpo_surrogate`].
    pub clip: f64,
    /// Lower clip radius for [`dapo_surrogate`] (ratio floor `1 - clip_low`).
    pub clip_low: f64,
    /// Upper clip radius for [`dapo_surrogate`] (ratio ceiling `1 + clip_high`).
    pub clip_high: f64,
    /// Weight of the KL penalty in [`grpo_surrogate`].
    pub kl_weight: f64,
    /// Aggregation scheme.
    pub loss_style: LossStyle,
}

impl ObjectiveConfig {
    /// Canonical symmetric-clip configuration: radius 0.2, KL weight 0.01,
    /// response-mean aggregation.
    pub fn grpo() -> Self {
        ObjectiveConfig {
            clip: 0.2,
            clip_low: 0.2,
            clip_high: 0.28,
            kl_weight: 0.01,
            loss_style: LossStyle::ResponseMean,
        }
    }

    /// Canonical asymmetric-clip configuration: radii 0.2/0.28, no KL,
    /// token-mean aggregation.
    pub fn dapo() -> Self {
        ObjectiveConfig {
            clip: 0.2,
            clip_low: 0.2,
            clip_high: 0.28,
            kl_weight: 0.0,
            loss_style: LossStyle::TokenMean,
        }
    }

    pub fn validate(&self) -> DurianResult<()> {
        for (name, v) in [
            ("clip", self.clip),
            ("clip-low", self.clip_low),
            ("clip-high", self.clip_high),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(DurianError::InvalidConfig(format!(
                    "{name} radius {v} must be finite and positive"
                )));
            }
        }
        if self.clip >= 1.0 || self.clip_low >= 1.0 {
            return Err(DurianError::InvalidConfig(
                "lower clip radius must stay below 1 so ratios keep a positive floor".into(),
            ));
        }
        if !self.kl_weight.is_finite() || self.kl_weight < 0.0 {
            return Err(DurianError::InvalidConfig(format!(
                "kl weight {} must be finite and >= 0",
                self.kl_weight
            )));
        }
        Ok(())
    }
}

/// Evaluation record for one response under the current, behavior, and
/// reference policies.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseEval {
    /// Log-prob of each sampled token under the policy being optimized.
    pub new_logprobs: Vec<f64>,
    /// Log-prob of each sampled token under the policy that generated it.
    pub old_logprobs: Vec<f64>,
    /// Full per-token categorical distribution of the policy being optimized.
    pub new_dists: Vec<Vec<f64>>,
    /// Full per-token categorical distribution of the frozen reference.
    pub ref_dists: Vec<Vec<f64>>,
}

impl ResponseEval {
    pub fn len(&self) -> usize {
        self.new_logprobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.new_logprobs.is_empty()
    }

    fn validate(&self, sample: usize, rollout: usize) -> DurianResult<()> {
        let n = self.new_logprobs.len();
        if self.old_logprobs.len() != n
            || self.new_dists.len() != n
            || self.ref_dists.len() != n
        {
            return Err(DurianError::InvalidInput(format!(
                "rollout {rollout} of sample {sample}: per-token arrays disagree \
                 ({n} new log-probs, {} old, {} new dists, {} ref dists)",
                self.old_logprobs.len(),
                self.new_dists.len(),
                self.ref_dists.len()
            )));
        }
        Ok(())
    }
}

/// A batch of response evaluations with a validity mask, aligned with the
/// reward matrix that scored the same rollouts.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyEval {
    batch: usize,
    group_size: usize,
    responses: Vec<Vec<ResponseEval>>,
    mask: Vec<bool>,
}

impl PolicyEval {
    /// Builds an eval batch; `mask` defaults to all-valid. Valid responses
    /// must carry at least one token and aligned per-token arrays.
    pub fn new(responses: Vec<Vec<ResponseEval>>, mask: Option<Vec<bool>>) -> DurianResult<Self> {
        if responses.is_empty() || responses[0].is_empty() {
            return Err(DurianError::EmptyInput("policy eval has no responses".into()));
        }
        let batch = responses.len();
        let group_size = responses[0].len();
        for (s, row) in responses.iter().enumerate() {
            if row.len() != group_size {
                return Err(DurianError::InvalidInput(format!(
                    "sample {s} has {} rollouts, expected {group_size}",
                    row.len()
                )));
            }
        }
        let mask = mask.unwrap_or_else(|| vec![true; batch * group_size]);
        if mask.len() != batch * group_size {
            return Err(DurianError::InvalidInput(format!(
                "mask length {} does not match {batch}x{group_size} responses",
                mask.len()
            )));
        }
        for (s, row) in responses.iter().enumerate() {
            for (i, resp) in row.iter().enumerate() {
                resp.validate(s, i)?;
                if mask[s * group_size + i] && resp.is_empty() {
                    return Err(DurianError::DegenerateResponse(format!(
                        "rollout {i} of sample {s} is valid but has zero tokens"
                    )));
                }
            }
        }
        Ok(PolicyEval {
            batch,
            group_size,
            responses,
            mask,
        })
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn group_size(&self) -> usize {
        self.group_size
    }

    pub fn response(&self, sample: usize, rollout: usize) -> &ResponseEval {
        &self.responses[sample][rollout]
    }

    pub fn response_mut(&mut self, sample: usize, rollout: usize) -> &mut ResponseEval {
        &mut self.responses[sample][rollout]
    }

    pub fn is_valid(&self, sample: usize, rollout: usize) -> bool {
        self.mask[sample * self.group_size + rollout]
    }

    /// Token counts in the shape [`crate::advantage::token_broadcast`] expects.
    pub fn lengths(&self) -> Vec<Vec<usize>> {
        self.responses
            .iter()
            .map(|row| row.iter().map(ResponseEval::len).collect())
            .collect()
    }
}

/// Per-token importance ratios `exp(new - old)`, empty for masked responses.
pub fn importance_ratios(eval: &PolicyEval) -> Vec<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(eval.batch());
    for s in 0..eval.batch() {
        let mut row = Vec::with_capacity(eval.group_size());
        for i in 0..eval.group_size() {
            if !eval.is_valid(s, i) {
                row.push(Vec::new());
                continue;
            }
            let r = eval.response(s, i);
            row.push(
                r.new_logprobs
                    .iter()
                    .zip(&r.old_logprobs)
                    .map(|(n, o)| (n - o).exp())
                    .collect(),
            );
        }
        out.push(row);
    }
    out
}

/// Per-token weights for the chosen aggregation style, plus the number of
/// samples that actually contribute. Masked responses weigh zero.
fn token_weights(eval: &PolicyEval, style: LossStyle) -> (Vec<Vec<f64>>, usize) {
    let mut per_response = vec![vec![0.0; eval.group_size()]; eval.batch()];
    let mut contributing = 0usize;
    for s in 0..eval.batch() {
        let valid: Vec<usize> = (0..eval.group_size())
            .filter(|&i| eval.is_valid(s, i))
            .collect();
        if valid.is_empty() {
            continue;
        }
        contributing += 1;
        match style {
            LossStyle::ResponseMean => {
                let g_eff = valid.len() as f64;
                for &i in &valid {
                    per_response[s][i] = 1.0 / (g_eff * eval.response(s, i).len() as f64);
                }
            }
            LossStyle::TokenMean => {
                let total: usize = valid.iter().map(|&i| eval.response(s, i).len()).sum();
                for &i in &valid {
                    per_response[s][i] = 1.0 / total as f64;
                }
            }
        }
    }
    if contributing > 0 {
        let inv_b = 1.0 / contributing as f64;
        for row in &mut per_response {
            for w in row {
                *w *= inv_b;
            }
        }
    }
    (per_response, contributing)
}

/// The weight every token of response `(s, i)` carries under the given
/// aggregation style (zero for masked responses). These are exactly the
/// weights [`kl_penalty`] and the surrogates apply, exposed so a trainer
/// can chain additional analytic terms through the same averaging.
pub fn aggregation_weights(eval: &PolicyEval, style: LossStyle) -> Vec<Vec<f64>> {
    token_weights(eval, style).0
}

/// Exact categorical KL between the optimized policy and the reference,
/// aggregated with the given style's weights.
///
/// Every stored distribution must be normalized (sums within `1e-6` of 1,
/// no negative entries), and the reference must cover the new policy's
/// support — a point where the new policy has mass and the reference none
/// would make the divergence infinite.
pub fn kl_penalty(eval: &PolicyEval, style: LossStyle) -> DurianResult<f64> {
    let (weights, contributing) = token_weights(eval, style);
    if contributing == 0 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for s in 0..eval.batch() {
        for i in 0..eval.group_size() {
            if !eval.is_valid(s, i) {
                continue;
            }
            let resp = eval.response(s, i);
            let w = weights[s][i];
            for (t, (p, q)) in resp.new_dists.iter().zip(&resp.ref_dists).enumerate() {
                total += w * categorical_kl(p, q, s, i, t)?;
            }
        }
    }
    Ok(total)
}

fn categorical_kl(p: &[f64], q: &[f64], sample: usize, rollout: usize, token: usize) -> DurianResult<f64> {
    let at = |which: &str| format!("{which} distribution at sample {sample}, rollout {rollout}, token {token}");
    if p.len() != q.len() {
        return Err(DurianError::InvalidInput(format!(
            "{}: support sizes disagree ({} vs {})",
            at("new/reference"),
            p.len(),
            q.len()
        )));
    }
    for (name, dist) in [("new", p), ("reference", q)] {
        if dist.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(DurianError::InvalidInput(format!(
                "{}: negative or non-finite mass",
                at(name)
            )));
        }
        let sum: f64 = dist.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(DurianError::InvalidInput(format!(
                "{}: mass sums to {sum}, not 1",
                at(name)
            )));
        }
    }
    let mut kl = 0.0;
    for (pv, qv) in p.iter().zip(q) {
        if *pv > 0.0 {
            if *qv <= 0.0 {
                return Err(DurianError::InvalidInput(format!(
                    "{}: reference has zero mass where the new policy does not",
                    at("reference")
                )));
            }
            kl += pv * (pv / qv).ln();
        }
    }
    Ok(kl.max(0.0))
}

/// Step-level diagnostics emitted alongside each surrogate loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurrogateMetrics {
    /// Mean |ratio - 1| over contributing tokens.
    pub mean_ratio_dev: f64,
    /// Max |ratio - 1| over contributing tokens.
    pub max_ratio_dev: f64,
    /// Fraction of contributing tokens where the clipped branch strictly won.
    pub clip_fraction: f64,
    /// The exact KL penalty value (zero when the objective has none).
    pub kl: f64,
    /// Samples whose every rollout is masked.
    pub masked_rows: usize,
    /// Tokens that contributed to the loss.
    pub token_count: usize,
}

/// A surrogate loss with its analytic gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateOutput {
    /// Negated objective: minimize this.
    pub loss: f64,
    /// d(loss)/d(new_logprob) per token, aligned with the eval's responses
    /// (empty vectors for masked responses).
    pub grads: Vec<Vec<Vec<f64>>>,
    pub metrics: SurrogateMetrics,
}

fn check_advantage_shape(eval: &PolicyEval, adv: &[Vec<Vec<f64>>]) -> DurianResult<()> {
    if adv.len() != eval.batch() {
        return Err(DurianError::InvalidInput(format!(
            "advantages cover {} samples, eval has {}",
            adv.len(),
            eval.batch()
        )));
    }
    for s in 0..eval.batch() {
        if adv[s].len() != eval.group_size() {
            return Err(DurianError::InvalidInput(format!(
                "sample {s}: advantages cover {} rollouts, eval has {}",
                adv[s].len(),
                eval.group_size()
            )));
        }
        for i in 0..eval.group_size() {
            if eval.is_valid(s, i) && adv[s][i].len() != eval.response(s, i).len() {
                return Err(DurianError::InvalidInput(format!(
                    "rollout {i} of sample {s}: {} token advantages for {} tokens",
                    adv[s][i].len(),
                    eval.response(s, i).len()
                )));
            }
        }
    }
    Ok(())
}

/// The clipped-ratio core shared by both objectives. Returns the clip part
/// of the objective (to be maximized), d(objective)/d(new_logprob), and
/// ratio/clip diagnostics.
fn clipped_core(
    eval: &PolicyEval,
    token_advantages: &[Vec<Vec<f64>>],
    floor: f64,
    ceiling: f64,
    style: LossStyle,
) -> (f64, Vec<Vec<Vec<f64>>>, SurrogateMetrics) {
    let (weights, _) = token_weights(eval, style);
    let mut objective = 0.0;
    let mut grads: Vec<Vec<Vec<f64>>> = Vec::with_capacity(eval.batch());
    let mut ratio_dev_sum = 0.0;
    let mut ratio_dev_max = 0.0_f64;
    let mut clipped_tokens = 0usize;
    let mut token_count = 0usize;
    let mut masked_rows = 0usize;
    for s in 0..eval.batch() {
        let mut sample_grads = Vec::with_capacity(eval.group_size());
        let mut any_valid = false;
        for i in 0..eval.group_size() {
            if !eval.is_valid(s, i) {
                sample_grads.push(Vec::new());
                continue;
            }
            any_valid = true;
            let resp = eval.response(s, i);
            let w = weights[s][i];
            let mut g = Vec::with_capacity(resp.len());
            for t in 0..resp.len() {
                let ratio = (resp.new_logprobs[t] - resp.old_logprobs[t]).exp();
                let adv = token_advantages[s][i][t];
                let unclipped = ratio * adv;
                let clipped = ratio.clamp(floor, ceiling) * adv;
                let (term, grad) = if unclipped <= clipped {
                    // d(ratio·adv)/d(logprob) = ratio·adv.
                    (unclipped, unclipped)
                } else {
                    clipped_tokens += 1;
                    (clipped, 0.0)
                };
                objective += w * term;
                g.push(w * grad);
                let dev = (ratio - 1.0).abs();
                ratio_dev_sum += dev;
                ratio_dev_max = ratio_dev_max.max(dev);
                token_count += 1;
            }
            g.shrink_to_fit();
            sample_grads.push(g);
        }
        if !any_valid {
            masked_rows += 1;
        }
        grads.push(sample_grads);
    }
    let metrics = SurrogateMetrics {
        mean_ratio_dev: if token_count > 0 {
            ratio_dev_sum / token_count as f64
        } else {
            0.0
        },
        max_ratio_dev: ratio_dev_max,
        clip_fraction: if token_count > 0 {
            clipped_tokens as f64 / token_count as f64
        } else {
            0.0
        },
        kl: 0.0,
        masked_rows,
        token_count,
    };
    (objective, grads, metrics)
}

fn negate_grads(grads: &mut [Vec<Vec<f64>>]) {
    for row in grads {
        for resp in row {
            for g in resp {
                *g = -*g;
            }
        }
    }
}

/// Symmetric-clip surrogate with a KL penalty against the reference policy.
///
/// Objective per token: `min(ratio·adv, clamp(ratio, 1-clip, 1+clip)·adv)`,
/// aggregated per `cfg.loss_style` (canonically response-mean), minus
/// `kl_weight` times the exact KL to the reference. The returned loss is the
/// negated objective; gradients cover the ratio term (the exact KL is
/// constant in the sampled-token log-probs).
pub fn grpo_surrogate(
    eval: &PolicyEval,
    token_advantages: &[Vec<Vec<f64>>],
    cfg: &ObjectiveConfig,
) -> DurianResult<SurrogateOutput> {
    cfg.validate()?;
    check_advantage_shape(eval, token_advantages)?;
    let (clip_obj, mut grads, mut metrics) = clipped_core(
        eval,
        token_advantages,
        1.0 - cfg.clip,
        1.0 + cfg.clip,
        cfg.loss_style,
    );
    let kl = kl_penalty(eval, cfg.loss_style)?;
    metrics.kl = kl;
    negate_grads(&mut grads);
    Ok(SurrogateOutput {
        loss: -(clip_obj - cfg.kl_weight * kl),
        grads,
        metrics,
    })
}

/// Asymmetric-clip surrogate without a KL term.
///
/// Objective per token: `min(ratio·adv, clamp(ratio, 1-clip_low,
/// 1+clip_high)·adv)`, aggregated per `cfg.loss_style` (canonically
/// token-mean). The returned loss is the negated objective.
pub fn dapo_surrogate(
    eval: &PolicyEval,
    token_advantages: &[Vec<Vec<f64>>],
    cfg: &ObjectiveConfig,
) -> DurianResult<SurrogateOutput> {
    cfg.validate()?;
    check_advantage_shape(eval, token_advantages)?;
    let (clip_obj, mut grads, metrics) = clipped_core(
        eval,
        token_advantages,
        1.0 - cfg.clip_low,
        1.0 + cfg.clip_high,
        cfg.loss_style,
    );
    negate_grads(&mut grads);
    Ok(SurrogateOutput {
        loss: -clip_obj,
        grads,
        metrics,
    })
}

/// Counts from the dynamic-sampling filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FilterStats {
    /// Rows left participating.
    pub kept_rows: usize,
    /// Rows masked because their rewards carry no signal.
    pub masked_rows: usize,
}

/// Masks out rows whose valid rewards are all identical (all solved or all
/// failed): their advantages would be zero everywhere, so they contribute
/// nothing but noise to the batch statistics. Returns a per-row keep flag
/// and the counts.
pub fn dynamic_sampling_filter(rewards: &RewardMatrix) -> (Vec<bool>, FilterStats) {
    let mut keep = Vec::with_capacity(rewards.batch());
    let mut kept = 0usize;
    for s in 0..rewards.batch() {
        let valid = rewards.valid_row_values(s);
        let informative = valid.len() >= 2 && valid.iter().any(|v| *v != valid[0]);
        keep.push(informative);
        if informative {
            kept += 1;
        }
    }
    let stats = FilterStats {
        kept_rows: kept,
        masked_rows: rewards.batch() - kept,
    };
    (keep, stats)
}
