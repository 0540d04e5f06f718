//! Experiment configuration: a flat `key = value` file format, environment
//! seeding, and command-line overrides, resolved in a fixed priority order
//! (flag beats file beats `DURIAN_SEED` beats default).
//!
//! The echoed form written next to each run's outputs reparses to the exact
//! configuration that produced them — that file, not the command line, is
//! the record of what ran.

use crate::advantage::CombineWeights;
use crate::error::{DurianError, DurianResult};
use crate::objective::{LossStyle, ObjectiveConfig};
use crate::reward::RewardWeights;
use crate::sim::TaskDims;
use std::fmt::Write as _;
use std::path::Path;

/// Which surrogate drives the update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveKind {
    /// Symmetric clip, KL penalty, response-mean aggregation.
    Grpo,
    /// Asymmetric clip, no KL, token-mean aggregation.
    Dapo,
}

impl ObjectiveKind {
    fn as_str(&self) -> &'static str {
        match self {
            ObjectiveKind::Grpo => "grpo",
            ObjectiveKind::Dapo => "dapo",
        }
    }
}

/// Where the perceptual quantile thresholds come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuantileScope {
    /// Thresholds recomputed from each batch's entropy scores.
    Batch,
    /// Thresholds frozen from the whole task pool's entropy distribution.
    Pool,
}

impl QuantileScope {
    fn as_str(&self) -> &'static str {
        match self {
            QuantileScope::Batch => "batch",
            QuantileScope::Pool => "pool",
        }
    }
}

/// Every knob of a simulation run. Construct with [`Default`], then layer
/// [`ExperimentConfig::apply_env`], [`ExperimentConfig::merge_file`], and
/// [`ExperimentConfig::apply_overrides`] in that order.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub steps: usize,
    pub batch_size: usize,
    /// Rollouts per task (the group size G).
    pub rollout_g: usize,
    pub objective: ObjectiveKind,
    /// Symmetric clip radius (grpo).
    pub eps: f64,
    /// Asymmetric clip radii (dapo).
    pub eps_low: f64,
    pub eps_high: f64,
    /// KL penalty weight (grpo).
    pub beta: f64,
    /// Blend weights: original, perceptual, reasoning.
    pub alpha: CombineWeights,
    /// Number of reasoning-difficulty bands.
    pub groups_b: usize,
    pub quantile_low: f64,
    pub quantile_high: f64,
    pub quantile_scope: QuantileScope,
    /// Length-normalize sequence log-probs before averaging into confidence.
    pub normalize_logprob: bool,
    pub format_weight: f64,
    pub accuracy_weight: f64,
    /// Task pool entropy range (uniform).
    pub entropy_min: f64,
    pub entropy_max: f64,
    /// Task pool hardness range (uniform).
    pub hardness_min: f64,
    pub hardness_max: f64,
    pub patches: usize,
    pub feat_dim: usize,
    pub context_dim: usize,
    pub num_answers: usize,
    pub max_len: usize,
    pub temperature: f64,
    pub lr: f64,
    pub out_dir: String,
    /// Surrogate passes per batch of rollouts.
    pub epochs: usize,
    /// Master switch for difficulty grouping.
    pub grouping: bool,
    /// Pool advantage statistics over rows the dynamic filter masked.
    pub pool_masked_rewards: bool,
    /// Token count where the overlong penalty starts (0 disables shaping).
    pub overlong_soft_cap: usize,
    /// Token count where the overlong penalty reaches 1.
    pub overlong_hard_cap: usize,
    pub task_pool_size: usize,
    /// Emit per-sample diagnostics every this many steps.
    pub diag_every: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            steps: 100,
            batch_size: 64,
            rollout_g: 8,
            objective: ObjectiveKind::Dapo,
            eps: 0.2,
            eps_low: 0.2,
            eps_high: 0.28,
            beta: 0.01,
            alpha: CombineWeights::default(),
            groups_b: 12,
            quantile_low: 0.25,
            quantile_high: 0.75,
            quantile_scope: QuantileScope::Batch,
            normalize_logprob: true,
            format_weight: 0.1,
            accuracy_weight: 0.9,
            entropy_min: 0.3,
            entropy_max: 2.0,
            hardness_min: 0.2,
            hardness_max: 0.8,
            patches: 16,
            feat_dim: 8,
            context_dim: 4,
            num_answers: 4,
            max_len: 12,
            temperature: 1.0,
            lr: 0.05,
            out_dir: "durian_out".to_string(),
            epochs: 1,
            grouping: true,
            pool_masked_rewards: false,
            overlong_soft_cap: 0,
            overlong_hard_cap: 0,
            task_pool_size: 512,
            diag_every: 1,
        }
    }
}

fn parse_bool(key: &str, value: &str) -> DurianResult<bool> {
    match value {
        "true" | "on" | "1" => Ok(true),
        "false" | "off" | "0" => Ok(false),
        _ => Err(DurianError::InvalidConfig(format!(
            "{key}: expected a boolean (true/false/on/off/1/0), got \"{value}\""
        ))),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str, what: &str) -> DurianResult<T> {
    value.parse().map_err(|_| {
        DurianError::InvalidConfig(format!("{key}: expected {what}, got \"{value}\""))
    })
}

fn parse_alpha(value: &str) -> DurianResult<CombineWeights> {
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(DurianError::InvalidConfig(format!(
            "alpha: expected three comma-separated weights (original,perceptual,reasoning), got \"{value}\""
        )));
    }
    let mut w = [0.0; 3];
    for (slot, part) in w.iter_mut().zip(&parts) {
        *slot = parse_num::<f64>("alpha", part, "a number")?;
    }
    CombineWeights::new(w[0], w[1], w[2])
}

impl ExperimentConfig {
    /// Applies the `DURIAN_SEED` environment variable, when present.
    pub fn apply_env(&mut self) -> DurianResult<()> {
        match std::env::var("DURIAN_SEED") {
            Ok(raw) => {
                self.seed = raw.trim().parse().map_err(|_| {
                    DurianError::InvalidConfig(format!(
                        "DURIAN_SEED: expected an unsigned integer, got \"{raw}\""
                    ))
                })?;
                Ok(())
            }
            Err(_) => Ok(()),
        }
    }

    /// Merges a config file over the current values. Lines are `key = value`;
    /// `#` starts a comment; blank lines are skipped; unknown keys are
    /// rejected by name.
    pub fn merge_file(&mut self, path: &Path) -> DurianResult<()> {
        let text = std::fs::read_to_string(path).map_err(|e| DurianError::io(path, e))?;
        self.merge_str(&text, &path.display().to_string())
    }

    /// Same as [`ExperimentConfig::merge_file`], from an in-memory string.
    /// `source` names the text in error messages.
    pub fn merge_str(&mut self, text: &str, source: &str) -> DurianResult<()> {
        for (idx, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(at) => &raw[..at],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let at = |msg: String| {
                DurianError::InvalidConfig(format!("{source}, line {}: {msg}", idx + 1))
            };
            let Some(eq) = line.find('=') else {
                return Err(at(format!("expected key = value, got \"{line}\"")));
            };
            let key = line[..eq].trim();
            let value = line[eq + 1..].trim();
            if key.is_empty() {
                return Err(at("missing key before '='".to_string()));
            }
            self.set(key, value).map_err(|e| match e {
                DurianError::InvalidConfig(msg) => at(msg),
                other => other,
            })?;
        }
        Ok(())
    }

    /// Sets one knob from its textual form. Unknown keys are an error that
    /// names the key.
    pub fn set(&mut self, key: &str, value: &str) -> DurianResult<()> {
        match key {
            "seed" => self.seed = parse_num(key, value, "an unsigned integer")?,
            "steps" => self.steps = parse_num(key, value, "a positive integer")?,
            "batch_size" => self.batch_size = parse_num(key, value, "a positive integer")?,
            "rollout_g" => self.rollout_g = parse_num(key, value, "a positive integer")?,
            "objective" => {
                self.objective = match value {
                    "grpo" => ObjectiveKind::Grpo,
                    "dapo" => ObjectiveKind::Dapo,
                    _ => {
                        return Err(DurianError::InvalidConfig(format!(
                            "objective: expected grpo or dapo, got \"{value}\""
                        )))
                    }
                }
            }
            "eps" => self.eps = parse_num(key, value, "a number")?,
            "eps_low" => self.eps_low = parse_num(key, value, "a number")?,
            "eps_high" => self.eps_high = parse_num(key, value, "a number")?,
            "beta" => self.beta = parse_num(key, value, "a number")?,
            "alpha" => self.alpha = parse_alpha(value)?,
            "groups_b" => self.groups_b = parse_num(key, value, "a positive integer")?,
            "quantile_low" => self.quantile_low = parse_num(key, value, "a number")?,
            "quantile_high" => self.quantile_high = parse_num(key, value, "a number")?,
            "quantile_scope" => {
                self.quantile_scope = match value {
                    "batch" => QuantileScope::Batch,
                    "pool" => QuantileScope::Pool,
                    _ => {
                        return Err(DurianError::InvalidConfig(format!(
                            "quantile_scope: expected batch or pool, got \"{value}\""
                        )))
                    }
                }
            }
            "normalize_logprob" => self.normalize_logprob = parse_bool(key, value)?,
            "format_weight" => self.format_weight = parse_num(key, value, "a number")?,
            "accuracy_weight" => self.accuracy_weight = parse_num(key, value, "a number")?,
            "entropy_min" => self.entropy_min = parse_num(key, value, "a number")?,
            "entropy_max" => self.entropy_max = parse_num(key, value, "a number")?,
            "hardness_min" => self.hardness_min = parse_num(key, value, "a number")?,
            "hardness_max" => self.hardness_max = parse_num(key, value, "a number")?,
            "patches" => self.patches = parse_num(key, value, "a positive integer")?,
            "feat_dim" => self.feat_dim = parse_num(key, value, "a positive integer")?,
            "context_dim" => self.context_dim = parse_num(key, value, "a positive integer")?,
            "num_answers" => self.num_answers = parse_num(key, value, "a positive integer")?,
            "max_len" => self.max_len = parse_num(key, value, "a positive integer")?,
            "temperature" => self.temperature = parse_num(key, value, "a number")?,
            "lr" => self.lr = parse_num(key, value, "a number")?,
            "out_dir" => self.out_dir = value.to_string(),
            "epochs" => self.epochs = parse_num(key, value, "a positive integer")?,
            "grouping" => self.grouping = parse_bool(key, value)?,
            "pool_masked_rewards" => self.pool_masked_rewards = parse_bool(key, value)?,
            "overlong_soft_cap" => {
                self.overlong_soft_cap = parse_num(key, value, "a non-negative integer")?
            }
            "overlong_hard_cap" => {
                self.overlong_hard_cap = parse_num(key, value, "a non-negative integer")?
            }
            "task_pool_size" => self.task_pool_size = parse_num(key, value, "a positive integer")?,
            "diag_every" => self.diag_every = parse_num(key, value, "a positive integer")?,
            _ => {
                return Err(DurianError::InvalidConfig(format!(
                    "unknown config key \"{key}\""
                )))
            }
        }
        Ok(())
    }

    /// The full configuration as a `key = value` document that
    /// [`ExperimentConfig::merge_str`] reparses to an identical value.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "steps = {}", self.steps);
        let _ = writeln!(s, "batch_size = {}", self.batch_size);
        let _ = writeln!(s, "rollout_g = {}", self.rollout_g);
        let _ = writeln!(s, "objective = {}", self.objective.as_str());
        let _ = writeln!(s, "eps = {}", self.eps);
        let _ = writeln!(s, "eps_low = {}", self.eps_low);
        let _ = writeln!(s, "eps_high = {}", self.eps_high);
        let _ = writeln!(s, "beta = {}", self.beta);
        let _ = writeln!(
            s,
            "alpha = {},{},{}",
            self.alpha.original, self.alpha.perceptual, self.alpha.reasoning
        );
        let _ = writeln!(s, "groups_b = {}", self.groups_b);
        let _ = writeln!(s, "quantile_low = {}", self.quantile_low);
        let _ = writeln!(s, "quantile_high = {}", self.quantile_high);
        let _ = writeln!(s, "quantile_scope = {}", self.quantile_scope.as_str());
        let _ = writeln!(s, "normalize_logprob = {}", self.normalize_logprob);
        let _ = writeln!(s, "format_weight = {}", self.format_weight);
        let _ = writeln!(s, "accuracy_weight = {}", self.accuracy_weight);
        let _ = writeln!(s, "entropy_min = {}", self.entropy_min);
        let _ = writeln!(s, "entropy_max = {}", self.entropy_max);
        let _ = writeln!(s, "hardness_min = {}", self.hardness_min);
        let _ = writeln!(s, "hardness_max = {}", self.hardness_max);
        let _ = writeln!(s, "patches = {}", self.patches);
        let _ = writeln!(s, "feat_dim = {}", self.feat_dim);
        let _ = writeln!(s, "context_dim = {}", self.context_dim);
        let _ = writeln!(s, "num_answers = {}", self.num_answers);
        let _ = writeln!(s, "max_len = {}", self.max_len);
        let _ = writeln!(s, "temperature = {}", self.temperature);
        let _ = writeln!(s, "lr = {}", self.lr);
        let _ = writeln!(s, "out_dir = {}", self.out_dir);
        let _ = writeln!(s, "epochs = {}", self.epochs);
        let _ = writeln!(s, "grouping = {}", self.grouping);
        let _ = writeln!(s, "pool_masked_rewards = {}", self.pool_masked_rewards);
        let _ = writeln!(s, "overlong_soft_cap = {}", self.overlong_soft_cap);
        let _ = writeln!(s, "overlong_hard_cap = {}", self.overlong_hard_cap);
        let _ = writeln!(s, "task_pool_size = {}", self.task_pool_size);
        let _ = writeln!(s, "diag_every = {}", self.diag_every);
        s
    }

    /// Shape of the tasks this configuration generates.
    pub fn task_dims(&self) -> TaskDims {
        TaskDims {
            patches: self.patches,
            feat_dim: self.feat_dim,
            context_dim: self.context_dim,
            num_answers: self.num_answers,
        }
    }

    /// The reward blend as a validated pair.
    pub fn reward_weights(&self) -> DurianResult<RewardWeights> {
        RewardWeights::new(self.format_weight, self.accuracy_weight)
    }

    /// The surrogate knobs in the objective module's terms.
    pub fn objective_config(&self) -> ObjectiveConfig {
        ObjectiveConfig {
            clip: self.eps,
            clip_low: self.eps_low,
            clip_high: self.eps_high,
            kl_weight: self.beta,
            loss_style: match self.objective {
                ObjectiveKind::Grpo => LossStyle::ResponseMean,
                ObjectiveKind::Dapo => LossStyle::TokenMean,
            },
        }
    }

    /// Cross-field checks. Call once after all sources are merged.
    pub fn validate(&self) -> DurianResult<()> {
        if self.steps == 0 {
            return Err(DurianError::InvalidConfig("steps must be positive".into()));
        }
        if self.batch_size < 4 {
            return Err(DurianError::InvalidConfig(format!(
                "batch_size = {} is too small for quantile grouping; need at least 4",
                self.batch_size
            )));
        }
        if self.rollout_g < 2 {
            return Err(DurianError::InvalidConfig(format!(
                "rollout_g = {} cannot form a group; need at least 2",
                self.rollout_g
            )));
        }
        if self.groups_b == 0 || self.groups_b > self.batch_size {
            return Err(DurianError::InvalidConfig(format!(
                "groups-b = {} must be between 1 and batch_size = {}",
                self.groups_b, self.batch_size
            )));
        }
        if self.epochs == 0 {
            return Err(DurianError::InvalidConfig("epochs must be positive".into()));
        }
        if self.diag_every == 0 {
            return Err(DurianError::InvalidConfig("diag_every must be positive".into()));
        }
        if self.task_pool_size < 4 {
            return Err(DurianError::InvalidConfig(format!(
                "task_pool_size = {} is too small; need at least 4",
                self.task_pool_size
            )));
        }
        self.objective_config().validate()?;
        self.alpha.validate()?;
        self.reward_weights().map(|_| ())?;
        for (name, v) in [
            ("quantile_low", self.quantile_low),
            ("quantile_high", self.quantile_high),
        ] {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(DurianError::InvalidConfig(format!(
                    "{name} = {v} must lie in [0, 1]"
                )));
            }
        }
        if self.quantile_low > self.quantile_high {
            return Err(DurianError::InvalidConfig(format!(
                "quantile_low = {} exceeds quantile_high = {}",
                self.quantile_low, self.quantile_high
            )));
        }
        let dims = self.task_dims();
        dims.validate()?;
        if !self.entropy_min.is_finite() || self.entropy_min < 0.0 {
            return Err(DurianError::InvalidConfig(format!(
                "entropy_min = {} must be finite and non-negative",
                self.entropy_min
            )));
        }
        if self.entropy_min > self.entropy_max {
            return Err(DurianError::InvalidConfig(format!(
                "entropy_min = {} exceeds entropy_max = {}",
                self.entropy_min, self.entropy_max
            )));
        }
        if self.entropy_max > dims.max_entropy() + 1e-12 {
            return Err(DurianError::InvalidConfig(format!(
                "entropy_max = {} exceeds ln(min(patches-1, feat_dim)) = {:.6}, the most a \
                 {}x{} feature matrix can realize",
                self.entropy_max,
                dims.max_entropy(),
                self.patches,
                self.feat_dim
            )));
        }
        for (name, v) in [
            ("hardness_min", self.hardness_min),
            ("hardness_max", self.hardness_max),
        ] {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(DurianError::InvalidConfig(format!(
                    "{name} = {v} must lie in [0, 1]"
                )));
            }
        }
        if self.hardness_min > self.hardness_max {
            return Err(DurianError::InvalidConfig(format!(
                "hardness_min = {} exceeds hardness_max = {}",
                self.hardness_min, self.hardness_max
            )));
        }
        if self.max_len < 3 {
            return Err(DurianError::InvalidConfig(format!(
                "max_len = {} cannot fit MARK answer END; need at least 3",
                self.max_len
            )));
        }
        if !self.temperature.is_finite() || self.temperature <= 0.0 {
            return Err(DurianError::InvalidConfig(format!(
                "temperature = {} must be finite and positive",
                self.temperature
            )));
        }
        if !self.lr.is_finite() || self.lr <= 0.0 {
            return Err(DurianError::InvalidConfig(format!(
                "lr = {} must be finite and positive",
                self.lr
            )));
        }
        if !self.grouping && (self.alpha.perceptual > 0.0 || self.alpha.reasoning > 0.0) {
            return Err(DurianError::InvalidConfig(
                "grouping = off conflicts with nonzero perceptual/reasoning alpha weights; \
                 zero them or re-enable grouping"
                    .into(),
            ));
        }
        if self.overlong_soft_cap > 0 && self.overlong_hard_cap <= self.overlong_soft_cap {
            return Err(DurianError::InvalidConfig(format!(
                "overlong_hard_cap = {} must exceed overlong_soft_cap = {}",
                self.overlong_hard_cap, self.overlong_soft_cap
            )));
        }
        Ok(())
    }
}

/// Command-line overrides: only the set fields replace config values.
#[derive(Debug, Clone, Default)]
pub struct ConfigOverrides {
    pub seed: Option<u64>,
    pub steps: Option<usize>,
    pub batch_size: Option<usize>,
    pub rollout_g: Option<usize>,
    pub objective: Option<String>,
    pub alpha: Option<String>,
    pub groups_b: Option<usize>,
    pub grouping: Option<bool>,
    pub lr: Option<f64>,
    pub temperature: Option<f64>,
    pub out_dir: Option<String>,
}

impl ExperimentConfig {
    pub fn apply_overrides(&mut self, ov: &ConfigOverrides) -> DurianResult<()> {
        if let Some(v) = ov.seed {
            self.seed = v;
        }
        if let Some(v) = ov.steps {
            self.steps = v;
        }
        if let Some(v) = ov.batch_size {
            self.batch_size = v;
        }
        if let Some(v) = ov.rollout_g {
            self.rollout_g = v;
        }
        if let Some(v) = &ov.objective {
            self.set("objective", v)?;
        }
        if let Some(v) = &ov.alpha {
            self.set("alpha", v)?;
        }
        if let Some(v) = ov.groups_b {
            self.groups_b = v;
        }
        if let Some(v) = ov.grouping {
            self.grouping = v;
        }
        if let Some(v) = ov.lr {
            self.lr = v;
        }
        if let Some(v) = ov.temperature {
            self.temperature = v;
        }
        if let Some(v) = &ov.out_dir {
            self.out_dir = v.clone();
        }
        Ok(())
    }

    /// Resolves a full configuration from every source in priority order:
    /// defaults, then `DURIAN_SEED`, then the optional file, then flags.
    /// Validates the result.
    pub fn resolve(file: Option<&Path>, overrides: &ConfigOverrides) -> DurianResult<Self> {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_env()?;
        if let Some(path) = file {
            cfg.merge_file(path)?;
        }
        cfg.apply_overrides(overrides)?;
        cfg.validate()?;
        Ok(cfg)
    }
}
