//! Verifiable rewards: answer-format checking and exact-match accuracy.
//!
//! A well-formed response shows its reasoning first and commits to exactly
//! one final answer. In the simulator's token alphabet that is
//!
//! ```text
//! THINK*  MARK  <answer token>  END
//! ```
//!
//! — any number of reasoning tokens, one answer marker, one answer, and a
//! terminator, with nothing after it. The text analogue (used when analyzing
//! logged transcripts) is a `<think>…</think>` block followed by exactly one
//! `\boxed{…}`.
//!
//! Format and accuracy are scored independently — a response can box the
//! right answer in the wrong structure — and blended into an overall reward
//! that weights accuracy much more heavily than formatting. Accuracy is
//! exact match only: no numeric canonicalization, no trimming.

use crate::error::{DurianError, DurianResult};

/// Reasoning filler token.
pub const TOKEN_THINK: u32 = 0;
/// Marker that closes reasoning and announces the final answer.
pub const TOKEN_MARK: u32 = 1;
/// Sequence terminator.
pub const TOKEN_END: u32 = 2;
/// First answer token; answer `k` is `ANSWER_BASE + k`.
pub const ANSWER_BASE: u32 = 3;

/// The simulator's token alphabet: three structural tokens plus `K` answers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Vocab {
    num_answers: usize,
}

impl Vocab {
    pub fn new(num_answers: usize) -> DurianResult<Self> {
        if num_answers == 0 {
            return Err(DurianError::InvalidConfig(
                "vocabulary needs at least one answer token".into(),
            ));
        }
        Ok(Vocab { num_answers })
    }

    pub fn num_answers(&self) -> usize {
        self.num_answers
    }

    /// Total token count: THINK, MARK, END, plus the answers.
    pub fn size(&self) -> usize {
        3 + self.num_answers
    }

    /// Token id of answer `answer` (caller keeps `answer < num_answers`).
    pub fn answer_token(&self, answer: u32) -> u32 {
        ANSWER_BASE + answer
    }

    /// The answer id a token encodes, if it is an answer token.
    pub fn answer_of(&self, token: u32) -> Option<u32> {
        if token >= ANSWER_BASE && (token as usize) < self.size() {
            Some(token - ANSWER_BASE)
        } else {
            None
        }
    }
}

/// Structural reading of one token response.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedResponse {
    /// The reasoning prefix was properly closed: everything before the first
    /// MARK is THINK tokens (possibly none).
    pub has_think_block: bool,
    /// The token right after the first MARK, when it is an answer token.
    /// First-match: later markers never override it.
    pub boxed_answer: Option<u32>,
    /// The raw sequence, kept for downstream structural checks.
    pub tokens: Vec<u32>,
}

/// Reads a token sequence into its structural parts. Total: malformed input
/// parses to a response that simply fails the format check.
pub fn parse_tokens(tokens: &[u32], vocab: &Vocab) -> ParsedResponse {
    let first_mark = tokens.iter().position(|t| *t == TOKEN_MARK);
    let has_think_block = match first_mark {
        Some(at) => tokens[..at].iter().all(|t| *t == TOKEN_THINK),
        None => false,
    };
    let boxed_answer = first_mark
        .and_then(|at| tokens.get(at + 1))
        .and_then(|t| vocab.answer_of(*t));
    ParsedResponse {
        has_think_block,
        boxed_answer,
        tokens: tokens.to_vec(),
    }
}

/// 1.0 for a completely well-formed response, else 0.0.
///
/// Well-formed means the whole sequence is `THINK* MARK answer END`: a closed
/// reasoning prefix, exactly one marker, exactly one answer, a terminator,
/// and nothing trailing. Truncated rollouts (no END) and double markers both
/// score zero.
pub fn format_reward(parsed: &ParsedResponse, vocab: &Vocab) -> f64 {
    let tokens = &parsed.tokens;
    let Some(mark_at) = tokens.iter().position(|t| *t == TOKEN_MARK) else {
        return 0.0;
    };
    let well_formed = tokens[..mark_at].iter().all(|t| *t == TOKEN_THINK)
        && tokens.len() == mark_at + 3
        && tokens
            .get(mark_at + 1)
            .is_some_and(|t| vocab.answer_of(*t).is_some())
        && tokens.get(mark_at + 2) == Some(&TOKEN_END);
    if well_formed {
        1.0
    } else {
        0.0
    }
}

/// 1.0 when the boxed answer exists and matches the ground truth exactly.
pub fn accuracy_reward(parsed: &ParsedResponse, truth: u32) -> f64 {
    if parsed.boxed_answer == Some(truth) {
        1.0
    } else {
        0.0
    }
}

/// Blend weights for the overall reward. Both must be non-negative and sum
/// into `(0, 1]` so the overall reward stays inside `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardWeights {
    pub format: f64,
    pub accuracy: f64,
}

impl RewardWeights {
    pub fn new(format: f64, accuracy: f64) -> DurianResult<Self> {
        let w = RewardWeights { format, accuracy };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> DurianResult<()> {
        if !self.format.is_finite() || !self.accuracy.is_finite() {
            return Err(DurianError::InvalidConfig(
                "reward weights must be finite".into(),
            ));
        }
        if self.format < 0.0 || self.accuracy < 0.0 {
            return Err(DurianError::InvalidConfig(
                "reward weights must be non-negative".into(),
            ));
        }
        let sum = self.format + self.accuracy;
        if sum <= 0.0 || sum > 1.0 + 1e-12 {
            return Err(DurianError::InvalidConfig(format!(
                "reward weights must sum into (0, 1], got {sum}"
            )));
        }
        Ok(())
    }
}

impl Default for RewardWeights {
    /// Accuracy dominates; formatting is a light nudge.
    fn default() -> Self {
        RewardWeights {
            format: 0.1,
            accuracy: 0.9,
        }
    }
}

/// Weighted blend of the format and accuracy rewards.
pub fn overall_reward(format: f64, accuracy: f64, weights: &RewardWeights) -> f64 {
    weights.format * format + weights.accuracy * accuracy
}

/// Structural reading of one logged text transcript.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedText {
    /// A single `<think>…</think>` block opens the transcript.
    pub has_think_block: bool,
    /// Contents of the first `\boxed{…}`, braces balanced.
    pub boxed_answer: Option<String>,
    /// The transcript satisfies the full contract: one think block first,
    /// then exactly one boxed answer.
    pub well_formed: bool,
}

const THINK_OPEN: &str = "<think>";
const THINK_CLOSE: &str = "</think>";
const BOXED_OPEN: &str = "\\boxed{";

/// Extracts the `…` of a `\boxed{…}` starting at `open` (index of the `{`),
/// balancing nested braces. Returns the content and the index just past the
/// closing brace.
fn scan_braced(text: &str, open: usize) -> Option<(String, usize)> {
    let bytes = text.as_bytes();
    let mut depth = 1usize;
    let mut i = open + 1;
    while i < bytes.len() {
        match bytes[i] {
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some((text[open + 1..i].to_string(), i + 1));
                }
            }
            _ => {}
        }
        i += 1;
    }
    None
}

/// Single-pass literal scanner for logged transcripts.
///
/// Strict by design: the transcript must open (after leading whitespace) with
/// one `<think>…</think>` block, and exactly one `\boxed{…}` must follow it.
/// Anything else fails the format check, though a first boxed answer is still
/// extracted when present so accuracy can be scored independently.
pub fn parse_text(text: &str) -> ParsedText {
    let think_open = text.find(THINK_OPEN);
    let think_close = think_open.and_then(|at| {
        text[at + THINK_OPEN.len()..]
            .find(THINK_CLOSE)
            .map(|rel| at + THINK_OPEN.len() + rel)
    });
    let opens_with_think = think_open.is_some_and(|at| text[..at].trim().is_empty());
    let single_think = think_open.is_some_and(|at| {
        text[at + THINK_OPEN.len()..].find(THINK_OPEN).is_none()
    });
    let has_think_block = opens_with_think && think_close.is_some() && single_think;

    // First boxed answer anywhere, for accuracy scoring.
    let first_boxed = text.find(BOXED_OPEN);
    let boxed_answer = first_boxed
        .and_then(|at| scan_braced(text, at + BOXED_OPEN.len() - 1))
        .map(|(content, _)| content);

    let well_formed = has_think_block
        && match (think_close, first_boxed) {
            (Some(close), Some(at)) => {
                let after_close = close + THINK_CLOSE.len();
                at >= after_close
                    && boxed_answer.is_some()
                    && scan_braced(text, at + BOXED_OPEN.len() - 1)
                        .map(|(_, end)| text[end..].find(BOXED_OPEN).is_none())
                        .unwrap_or(false)
            }
            _ => false,
        };
    ParsedText {
        has_think_block,
        boxed_answer,
        well_formed,
    }
}

/// Format reward for a logged transcript.
pub fn format_reward_text(parsed: &ParsedText) -> f64 {
    if parsed.well_formed {
        1.0
    } else {
        0.0
    }
}

/// Exact-match accuracy for a logged transcript.
pub fn accuracy_reward_text(parsed: &ParsedText, truth: &str) -> f64 {
    match &parsed.boxed_answer {
        Some(ans) if ans == truth => 1.0,
        _ => 0.0,
    }
}
