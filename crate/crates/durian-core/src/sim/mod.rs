//! A self-contained testbed: synthetic tasks with controllable difficulty,
//! a linear toy policy over a tiny grammar, and a trainer that wires
//! difficulty grouping into the surrogate objectives.
//!
//! Nothing here talks to a real model. The point is to exercise every piece
//! of the advantage pipeline end to end — rollouts, rewards, dynamic
//! sampling, difficulty grouping, shared-std advantages, clipped surrogate,
//! gradient step — under a seed, so that training behavior is reproducible
//! byte for byte.

mod policy;
mod stats;
mod task;
mod trainer;

pub use policy::{ResponseRecord, ToyPolicy};
pub use stats::{extreme_stats, render_extreme_table, ExtremeStats};
pub use task::{answer_embedding, generate_task, SyntheticTask, TaskDims};
pub use trainer::{run_experiment, RunSummary, SampleDiag, StepMetrics, Trainer};
