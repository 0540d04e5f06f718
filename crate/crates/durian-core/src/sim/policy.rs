//! A linear policy over the tagged-answer grammar.
//!
//! The policy computes one logit vector per task — weights times a fixed
//! task embedding — and reuses it at every position; only the grammar mask
//! changes as the sequence advances. That keeps rollouts and re-evaluation
//! cheap while still giving the surrogate a real softmax to differentiate
//! through.
//!
//! The grammar never lets a rollout leave the language `THINK* MARK answer
//! END`: the only ill-formed sequences are ones cut off by the length limit
//! before END.

use crate::error::{DurianError, DurianResult};
use crate::reward::{Vocab, TOKEN_END, TOKEN_MARK, TOKEN_THINK};
use crate::sim::task::SyntheticTask;
use rand::Rng;

/// Where a partial sequence sits in the grammar.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum GrammarState {
    /// May keep thinking or open the answer. Start state.
    Thinking,
    /// Must emit exactly one answer token.
    Answering,
    /// Must close with END.
    Closing,
    /// Sequence complete; nothing may follow.
    Done,
}

impl GrammarState {
    fn advance(self, token: u32, vocab: &Vocab) -> Option<GrammarState> {
        match (self, token) {
            (GrammarState::Thinking, TOKEN_THINK) => Some(GrammarState::Thinking),
            (GrammarState::Thinking, TOKEN_MARK) => Some(GrammarState::Answering),
            (GrammarState::Answering, t) if vocab.answer_of(t).is_some() => {
                Some(GrammarState::Closing)
            }
            (GrammarState::Closing, TOKEN_END) => Some(GrammarState::Done),
            _ => None,
        }
    }

    fn allowed(self, vocab: &Vocab) -> Vec<u32> {
        match self {
            GrammarState::Thinking => vec![TOKEN_THINK, TOKEN_MARK],
            GrammarState::Answering => (0..vocab.num_answers() as u32)
                .map(|a| vocab.answer_token(a))
                .collect(),
            GrammarState::Closing => vec![TOKEN_END],
            GrammarState::Done => Vec::new(),
        }
    }
}

/// One sampled response with everything the trainer needs to score it.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseRecord {
    pub tokens: Vec<u32>,
    /// Log-prob of each token under the policy that sampled it.
    pub logprobs: Vec<f64>,
    /// True when the rollout reached END (and is therefore well-formed).
    pub completed: bool,
}

/// Linear policy: logits are `weights · embed(task)`, grammar-masked and
/// temperature-scaled into per-position distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyPolicy {
    vocab: Vocab,
    context_dim: usize,
    feat_dim: usize,
    temperature: f64,
    max_len: usize,
    /// Row-major `vocab.size() x input_dim()`.
    weights: Vec<f64>,
}

impl ToyPolicy {
    /// Fresh policy with zero weights: uniform over whatever the grammar
    /// allows at each position.
    pub fn new(
        vocab: Vocab,
        context_dim: usize,
        feat_dim: usize,
        temperature: f64,
        max_len: usize,
    ) -> DurianResult<Self> {
        if !temperature.is_finite() || temperature <= 0.0 {
            return Err(DurianError::InvalidConfig(format!(
                "temperature {temperature} must be finite and positive"
            )));
        }
        if max_len < 3 {
            return Err(DurianError::InvalidConfig(format!(
                "max-len {max_len} cannot fit MARK answer END; need at least 3"
            )));
        }
        let input_dim = context_dim + feat_dim + 1;
        Ok(ToyPolicy {
            vocab,
            context_dim,
            feat_dim,
            temperature,
            max_len,
            weights: vec![0.0; vocab.size() * input_dim],
        })
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    /// Context, mean feature row scaled to unit-ish magnitude, and a bias 1.
    pub fn input_dim(&self) -> usize {
        self.context_dim + self.feat_dim + 1
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    /// Gradient-descent step: `W -= lr · grad`.
    pub fn apply_gradient(&mut self, grad: &[f64], lr: f64) -> DurianResult<()> {
        if grad.len() != self.weights.len() {
            return Err(DurianError::InvalidInput(format!(
                "gradient has {} entries, weights have {}",
                grad.len(),
                self.weights.len()
            )));
        }
        for (w, g) in self.weights.iter_mut().zip(grad) {
            *w -= lr * g;
        }
        Ok(())
    }

    /// Task embedding the logits are linear in: `[context ⊕ column means of
    /// the features / sqrt(d) ⊕ 1]`.
    pub fn embed(&self, task: &SyntheticTask) -> DurianResult<Vec<f64>> {
        if task.context.len() != self.context_dim || task.features.cols() != self.feat_dim {
            return Err(DurianError::InvalidInput(format!(
                "task shape ({} context, {} features) does not match policy ({}, {})",
                task.context.len(),
                task.features.cols(),
                self.context_dim,
                self.feat_dim
            )));
        }
        let mut x = Vec::with_capacity(self.input_dim());
        x.extend_from_slice(&task.context);
        let inv_sqrt_d = 1.0 / (self.feat_dim as f64).sqrt();
        for m in task.features.column_means() {
            x.push(m * inv_sqrt_d);
        }
        x.push(1.0);
        Ok(x)
    }

    /// Raw logit vector for an embedded task.
    pub fn logits(&self, embed: &[f64]) -> Vec<f64> {
        let n = self.input_dim();
        (0..self.vocab.size())
            .map(|v| {
                self.weights[v * n..(v + 1) * n]
                    .iter()
                    .zip(embed)
                    .map(|(w, x)| w * x)
                    .sum()
            })
            .collect()
    }

    /// Full-vocab distribution at one grammar state: softmax of the allowed
    /// logits at this temperature, zero elsewhere.
    fn masked_distribution(&self, logits: &[f64], state: GrammarState) -> Vec<f64> {
        let allowed = state.allowed(&self.vocab);
        let mut dist = vec![0.0; self.vocab.size()];
        let top = allowed
            .iter()
            .map(|&t| logits[t as usize])
            .fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for &t in &allowed {
            let e = ((logits[t as usize] - top) / self.temperature).exp();
            dist[t as usize] = e;
            total += e;
        }
        for &t in &allowed {
            dist[t as usize] /= total;
        }
        dist
    }

    /// Samples one response, recording behavior log-probs as it goes.
    pub fn rollout<R: Rng>(&self, task: &SyntheticTask, rng: &mut R) -> DurianResult<ResponseRecord> {
        let embed = self.embed(task)?;
        let logits = self.logits(&embed);
        let mut state = GrammarState::Thinking;
        let mut tokens = Vec::new();
        let mut logprobs = Vec::new();
        while state != GrammarState::Done && tokens.len() < self.max_len {
            let dist = self.masked_distribution(&logits, state);
            let draw: f64 = rng.gen();
            let mut acc = 0.0;
            let mut picked = None;
            for (t, p) in dist.iter().enumerate() {
                if *p > 0.0 {
                    acc += p;
                    if draw < acc {
                        picked = Some(t as u32);
                        break;
                    }
                }
            }
            // Rounding can leave acc slightly below 1; fall back to the last
            // allowed token rather than losing the draw.
            let token = picked.unwrap_or_else(|| {
                dist.iter()
                    .rposition(|p| *p > 0.0)
                    .map(|t| t as u32)
                    .expect("grammar state always allows a token")
            });
            tokens.push(token);
            logprobs.push(dist[token as usize].ln());
            state = state
                .advance(token, &self.vocab)
                .expect("sampled token is grammar-legal");
        }
        Ok(ResponseRecord {
            tokens,
            logprobs,
            completed: state == GrammarState::Done,
        })
    }

    /// Re-scores an existing token sequence: per-token log-probs and the
    /// full masked distributions, exactly as [`ToyPolicy::rollout`] would
    /// have produced them at the current weights.
    pub fn evaluate(
        &self,
        task: &SyntheticTask,
        tokens: &[u32],
    ) -> DurianResult<(Vec<f64>, Vec<Vec<f64>>)> {
        let embed = self.embed(task)?;
        let logits = self.logits(&embed);
        let mut state = GrammarState::Thinking;
        let mut logprobs = Vec::with_capacity(tokens.len());
        let mut dists = Vec::with_capacity(tokens.len());
        for (pos, &token) in tokens.iter().enumerate() {
            let dist = self.masked_distribution(&logits, state);
            if (token as usize) >= dist.len() || dist[token as usize] <= 0.0 {
                return Err(DurianError::InvalidInput(format!(
                    "token {token} at position {pos} is not reachable in the grammar"
                )));
            }
            logprobs.push(dist[token as usize].ln());
            dists.push(dist);
            state = state
                .advance(token, &self.vocab)
                .expect("positive-probability tokens are grammar-legal");
        }
        Ok((logprobs, dists))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reward::{format_reward, parse_tokens};
    use crate::sim::task::{answer_embedding, generate_task, TaskDims};
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn dims() -> TaskDims {
        TaskDims {
            patches: 8,
            feat_dim: 4,
            context_dim: 4,
            num_answers: 4,
        }
    }

    fn some_task(seed: u64, hardness: f64) -> SyntheticTask {
        let mut rng = StdRng::seed_from_u64(seed);
        generate_task(1.0, hardness, &dims(), &mut rng).unwrap()
    }

    fn policy() -> ToyPolicy {
        ToyPolicy::new(Vocab::new(4).unwrap(), 4, 4, 1.0, 12).unwrap()
    }

    /// Weights that read the answer straight out of a clean context: each
    /// answer token's logit is `gain` times its one-hot coordinate, and MARK
    /// is preferred over THINK so rollouts answer immediately.
    fn ideal_weights(policy: &mut ToyPolicy, gain: f64) {
        let n = policy.input_dim();
        let vocab = *policy.vocab();
        let w = policy.weights_mut();
        // Bias column (last input) pushes MARK above THINK.
        w[TOKEN_MARK as usize * n + (n - 1)] = 2.0;
        for a in 0..vocab.num_answers() as u32 {
            let row = vocab.answer_token(a) as usize;
            w[row * n + a as usize] = gain;
        }
    }

    #[test]
    fn rollouts_stay_inside_the_grammar() {
        let p = policy();
        let task = some_task(5, 0.5);
        let mut rng = StdRng::seed_from_u64(9);
        for _ in 0..200 {
            let r = p.rollout(&task, &mut rng).unwrap();
            assert!(!r.tokens.is_empty());
            assert!(r.tokens.len() <= p.max_len());
            let parsed = parse_tokens(&r.tokens, p.vocab());
            if r.completed {
                // Anything the grammar completes is well-formed by definition.
                assert_eq!(format_reward(&parsed, p.vocab()), 1.0);
                assert!(parsed.boxed_answer.is_some());
            } else {
                assert_eq!(r.tokens.len(), p.max_len());
                assert_eq!(format_reward(&parsed, p.vocab()), 0.0);
            }
        }
    }

    #[test]
    fn evaluate_reproduces_rollout_logprobs() {
        let mut p = policy();
        // Non-trivial weights so distributions are not uniform.
        for (i, w) in p.weights_mut().iter_mut().enumerate() {
            *w = ((i * 37 % 17) as f64 - 8.0) / 23.0;
        }
        let task = some_task(6, 0.4);
        let mut rng = StdRng::seed_from_u64(10);
        for _ in 0..50 {
            let r = p.rollout(&task, &mut rng).unwrap();
            let (logprobs, dists) = p.evaluate(&task, &r.tokens).unwrap();
            assert_eq!(logprobs.len(), r.logprobs.len());
            for (a, b) in logprobs.iter().zip(&r.logprobs) {
                assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
            }
            for d in &dists {
                let sum: f64 = d.iter().sum();
                assert!((sum - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn evaluate_rejects_grammar_violations() {
        let p = policy();
        let task = some_task(7, 0.2);
        // END straight away is unreachable from the start state.
        assert!(p.evaluate(&task, &[TOKEN_END]).is_err());
        // Two answers in a row violate the single-answer rule.
        let v = p.vocab();
        let bad = vec![TOKEN_MARK, v.answer_token(0), v.answer_token(1)];
        assert!(p.evaluate(&task, &bad).is_err());
    }

    #[test]
    fn near_zero_temperature_acts_greedy() {
        let mut p = ToyPolicy::new(Vocab::new(4).unwrap(), 4, 4, 1e-4, 12).unwrap();
        ideal_weights(&mut p, 5.0);
        let task = some_task(8, 0.0);
        let mut rng = StdRng::seed_from_u64(11);
        let expect = vec![
            TOKEN_MARK,
            p.vocab().answer_token(task.truth),
            TOKEN_END,
        ];
        for _ in 0..20 {
            let r = p.rollout(&task, &mut rng).unwrap();
            assert_eq!(r.tokens, expect);
        }
    }

    #[test]
    fn accuracy_degrades_with_hardness() {
        // With ideal weights, a clean context pins the right answer; heavy
        // context noise should drag accuracy toward chance. Demands a gap of
        // at least 3 binomial sigmas over 1000 rollouts per hardness level.
        let mut p = policy();
        ideal_weights(&mut p, 5.0);
        let n = 1000;
        let acc_at = |hardness: f64, seed: u64| -> f64 {
            let mut hits = 0usize;
            let mut rng = StdRng::seed_from_u64(seed);
            for t in 0..n {
                let task = some_task(10_000 + seed * 7919 + t as u64, hardness);
                let r = p.rollout(&task, &mut rng).unwrap();
                let parsed = parse_tokens(&r.tokens, p.vocab());
                if parsed.boxed_answer == Some(task.truth) {
                    hits += 1;
                }
            }
            hits as f64 / n as f64
        };
        let easy = acc_at(0.1, 1);
        let hard = acc_at(0.9, 2);
        let sigma = (0.25 / n as f64).sqrt(); // worst-case binomial std
        assert!(
            easy - hard > 3.0 * (2.0_f64).sqrt() * sigma,
            "easy {easy} hard {hard}"
        );
    }

    #[test]
    fn answer_embedding_matches_policy_expectations() {
        // ideal_weights assumes one-hot embeddings when the context is wide
        // enough; spot-check that assumption holds.
        assert_eq!(answer_embedding(2, 4, 4), vec![0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn zero_policy_is_uniform_over_allowed_tokens() {
        let p = policy();
        let task = some_task(12, 0.5);
        let (logprobs, dists) = p
            .evaluate(&task, &[TOKEN_THINK, TOKEN_MARK, p.vocab().answer_token(1), TOKEN_END])
            .unwrap();
        // Thinking state: two options, so each draw is ln(1/2).
        assert!((logprobs[0] - (0.5_f64).ln()).abs() < 1e-12);
        assert!((logprobs[1] - (0.5_f64).ln()).abs() < 1e-12);
        // Answering state: four answers, uniform.
        assert!((logprobs[2] - (0.25_f64).ln()).abs() < 1e-12);
        // Closing state: forced END.
        assert_eq!(logprobs[3], 0.0);
        assert_eq!(dists[3][TOKEN_END as usize], 1.0);
    }
}
