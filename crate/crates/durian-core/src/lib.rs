//! Difficulty-aware group normalization for RL with verifiable rewards.
//!
//! Group-relative policy optimization normalizes each sample's rewards by the
//! statistics of its own rollout group. When a group is lopsided — say seven
//! correct answers and one failure — that per-sample std is tiny and the lone
//! outlier's advantage explodes. This crate regroups samples by *difficulty*
//! and normalizes with a standard deviation shared across each difficulty
//! group, which damps those extreme advantages while leaving balanced groups
//! essentially untouched.
//!
//! Two difficulty views are combined with the original per-sample view:
//!
//! * **perceptual** — spectral entropy of an image's patch-feature second
//!   moment ([`linalg`], [`difficulty`]): cluttered inputs spread variance
//!   across many directions;
//! * **reasoning** — mean sequence log-probability of the policy's own
//!   rollouts ([`difficulty`]): low confidence marks hard prompts.
//!
//! [`advantage`] blends the three normalized advantages, [`objective`] turns
//! them into clipped surrogate losses, [`reward`] scores rollouts against a
//! strict answer format, and [`sim`] ties everything to a small synthetic
//! task generator and toy policy so the full training loop can be exercised
//! deterministically. [`config`] and [`cli`] back the `durian` binary.

pub mod advantage;
pub mod cli;
pub mod config;
pub mod difficulty;
pub mod error;
pub mod linalg;
pub mod objective;
pub mod reward;
pub mod sim;

pub use error::{DurianError, DurianResult};
