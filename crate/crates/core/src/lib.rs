//! Group-relative advantage estimation and its asymmetric variants.
//!
//! The crate is split into four parts:
//!
//! - [`advantage`]: the standard group-relative estimator, the controlled
//!   symmetry-breaking variants and the asymmetric estimator driven by the
//!   batch mean reward.
//! - [`behavior`]: a single query modelled as a softmax policy over a finite
//!   set of behaviors, with the exact logit-update field of a group update.
//! - [`trainer`]: a clipped-surrogate training loop over an ensemble of
//!   behavior spaces, used to reproduce entropy and accuracy dynamics.
//! - [`passk`]: the unbiased pass@k estimator and log ingestion.
//!
//! [`presets`] and [`report`] hold the named experiment configurations and
//! the table writers shared with the command-line tool.

pub mod advantage;
pub mod behavior;
mod error;
pub mod passk;
pub mod presets;
pub mod report;
pub mod trainer;

pub use advantage::{AdvantageVector, DifficultyMode, Estimator, GroupStats, RewardGroup, TrainState, Variant};
pub use behavior::{BehaviorSpace, SampledGroupAssignment};
pub use error::{Error, Result};
pub use passk::PassKRecord;
pub use trainer::{Ensemble, ExperimentConfig, ExperimentResult, StepMetrics};
