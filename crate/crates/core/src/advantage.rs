//! Advantage estimators over groups of trajectory rewards.
//!
//! Every estimator is a pure function of a [`RewardGroup`] (and, for the
//! asymmetric estimator, a [`TrainState`] carrying the batch mean reward).
//! The standard estimator standardizes rewards inside the group:
//!
//! ```text
//! A_i = (r_i - mean(r)) / std(r)
//! ```
//!
//! with the population standard deviation (divisor `G`). A group whose rewards
//! are all equal carries no learning signal; every estimator returns an
//! all-zero vector flagged `degenerate` for it.
//!
//! The remaining estimators break one of the two symmetries of the standard
//! estimator:
//!
//! - group level: [`positive_dominant`] / [`negative_dominant`] rescale the
//!   positive entries so the group no longer sums to zero;
//! - sample level: [`difficulty_rescale`] reweights whole groups by their
//!   success rate `p`;
//! - both, adaptively: [`a_grae_sample_level`] blends the hard- and
//!   easy-focused weights by the batch mean reward `omega_s`, and
//!   [`a_grae_group_level`] attenuates positive entries by `min(1, omega_s / alpha)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub const DEFAULT_BETA: f64 = 10.0;
pub const DEFAULT_GAMMA: f64 = 0.5;
pub const DEFAULT_ALPHA: f64 = 1.0;

/// Rewards of the `G` trajectories sampled for one query.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardGroup {
    rewards: Vec<f64>,
    binary: bool,
}

impl RewardGroup {
    pub fn new(rewards: Vec<f64>) -> Result<Self> {
        if rewards.is_empty() {
            return Err(Error::EmptyGroup);
        }
        if let Some((index, &value)) = rewards.iter().enumerate().find(|(_, r)| !r.is_finite()) {
            return Err(Error::NonFiniteReward { index, value });
        }
        let binary = rewards.iter().all(|&r| r == 0.0 || r == 1.0);
        Ok(Self { rewards, binary })
    }

    /// Builds a binary group from verifier outcomes.
    pub fn from_outcomes<I: IntoIterator<Item = bool>>(outcomes: I) -> Result<Self> {
        Self::new(outcomes.into_iter().map(|ok| if ok { 1.0 } else { 0.0 }).collect())
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn is_binary(&self) -> bool {
        self.binary
    }

    /// True when every reward is identical, so the group standard deviation is 0.
    pub fn is_constant(&self) -> bool {
        let first = self.rewards[0];
        self.rewards.iter().all(|&r| r == first)
    }

    pub fn stats(&self) -> GroupStats {
        group_stats(self)
    }
}

/// Mean, population standard deviation and success rate of a group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupStats {
    pub mean: f64,
    pub std: f64,
    /// Empirical success probability `p`; `None` for non-binary groups.
    pub success_rate: Option<f64>,
}

impl GroupStats {
    /// `p` for a binary group, or an error naming the estimator that needed it.
    pub fn require_success_rate(&self, variant: &'static str) -> Result<f64> {
        self.success_rate.ok_or(Error::NonBinaryRewards { variant })
    }
}

/// Identifies the estimator that produced an [`AdvantageVector`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Grae,
    GraeNoStd,
    PositiveDominant,
    NegativeDominant,
    HardFocused,
    EasyFocused,
    AGraeSample,
    AGraeFull,
}

impl Variant {
    pub const ALL: [Variant; 8] = [
        Variant::Grae,
        Variant::GraeNoStd,
        Variant::PositiveDominant,
        Variant::NegativeDominant,
        Variant::HardFocused,
        Variant::EasyFocused,
        Variant::AGraeSample,
        Variant::AGraeFull,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Grae => "grae",
            Variant::GraeNoStd => "grae-no-std",
            Variant::PositiveDominant => "positive-dominant",
            Variant::NegativeDominant => "negative-dominant",
            Variant::HardFocused => "hard-focused",
            Variant::EasyFocused => "easy-focused",
            Variant::AGraeSample => "a-grae-sample",
            Variant::AGraeFull => "a-grae-full",
        }
    }

    /// Whether the estimator depends on the success rate `p` and so only
    /// accepts binary rewards.
    pub fn needs_binary(self) -> bool {
        matches!(
            self,
            Variant::HardFocused | Variant::EasyFocused | Variant::AGraeSample | Variant::AGraeFull
        )
    }

    /// Whether the estimator reads the batch mean reward.
    pub fn uses_batch_mean(self) -> bool {
        matches!(self, Variant::AGraeSample | Variant::AGraeFull)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL.into_iter().find(|v| v.name() == s).ok_or_else(|| {
            let names: Vec<_> = Variant::ALL.iter().map(|v| v.name()).collect();
            invalid(
                "variant",
                format!("unknown estimator `{s}`; expected one of {}", names.join(", ")),
            )
        })
    }
}

/// Per-trajectory advantages of one group.
#[derive(Debug, Clone, PartialEq)]
pub struct AdvantageVector {
    pub values: Vec<f64>,
    pub variant: Variant,
    /// Set when the group has zero reward variance (`p` in {0, 1} for binary
    /// rewards). All values are exactly zero in that case.
    pub degenerate: bool,
}

impl AdvantageVector {
    fn zeros(len: usize, variant: Variant) -> Self {
        Self {
            values: vec![0.0; len],
            variant,
            degenerate: true,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Applies `f` to strictly positive entries, leaving the rest untouched.
    fn map_positive(&self, variant: Variant, f: impl Fn(f64) -> f64) -> Self {
        Self {
            values: self.values.iter().map(|&a| if a > 0.0 { f(a) } else { a }).collect(),
            variant,
            degenerate: self.degenerate,
        }
    }
}

/// Training-clock state consumed by the asymmetric estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainState {
    pub step: u64,
    /// Mean reward over every trajectory of the current rollout batch.
    pub omega_s: f64,
    /// Attenuation scale for positive advantages, in (0, 1].
    pub alpha: f64,
}

impl TrainState {
    pub fn new(step: u64, omega_s: f64, alpha: f64) -> Result<Self> {
        if !omega_s.is_finite() {
            return Err(invalid("omega_s", format!("must be finite, got {omega_s}")));
        }
        validate_alpha(alpha)?;
        Ok(Self { step, omega_s, alpha })
    }
}

fn validate_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(invalid("alpha", format!("must lie in (0, 1], got {alpha}")))
    }
}

pub fn group_stats(group: &RewardGroup) -> GroupStats {
    let g = group.len() as f64;
    let mean = group.rewards.iter().sum::<f64>() / g;
    let std = if group.is_constant() {
        0.0
    } else {
        (group.rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / g).sqrt()
    };
    GroupStats {
        mean,
        std,
        success_rate: group.binary.then_some(mean),
    }
}

/// Standard group-relative advantage: rewards standardized within the group.
pub fn grae(group: &RewardGroup) -> AdvantageVector {
    if group.is_constant() {
        return AdvantageVector::zeros(group.len(), Variant::Grae);
    }
    let stats = group_stats(group);
    AdvantageVector {
        values: group.rewards.iter().map(|r| (r - stats.mean) / stats.std).collect(),
        variant: Variant::Grae,
        degenerate: false,
    }
}

/// Mean-centred rewards without the standard-deviation normalization.
pub fn grae_no_std(group: &RewardGroup) -> AdvantageVector {
    if group.is_constant() {
        return AdvantageVector::zeros(group.len(), Variant::GraeNoStd);
    }
    let mean = group_stats(group).mean;
    AdvantageVector {
        values: group.rewards.iter().map(|r| r - mean).collect(),
        variant: Variant::GraeNoStd,
        degenerate: false,
    }
}

/// Scales positive advantages up by `beta`.
pub fn positive_dominant(adv: &AdvantageVector, beta: f64) -> AdvantageVector {
    adv.map_positive(Variant::PositiveDominant, |a| beta * a)
}

/// Scales positive advantages down by `beta`.
pub fn negative_dominant(adv: &AdvantageVector, beta: f64) -> AdvantageVector {
    adv.map_positive(Variant::NegativeDominant, |a| a / beta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DifficultyMode {
    /// Weight `gamma / sqrt(p)`: low success rates get larger updates.
    Hard,
    /// Weight `gamma / sqrt(1 - p)`: high success rates get larger updates.
    Easy,
}

/// Rescales a whole group by a function of its success rate.
///
/// With `gamma = 0.5` the absolute advantage sum of a mixed group becomes
/// `G * sqrt(1 - p)` (hard) or `G * sqrt(p)` (easy). Groups with `p` in {0, 1}
/// are left at zero.
pub fn difficulty_rescale(
    adv: &AdvantageVector,
    stats: &GroupStats,
    mode: DifficultyMode,
    gamma: f64,
) -> Result<AdvantageVector> {
    let variant = match mode {
        DifficultyMode::Hard => Variant::HardFocused,
        DifficultyMode::Easy => Variant::EasyFocused,
    };
    let p = stats.require_success_rate(variant.name())?;
    if adv.degenerate || p == 0.0 || p == 1.0 {
        return Ok(AdvantageVector::zeros(adv.len(), variant));
    }
    let denom = match mode {
        DifficultyMode::Hard => p.sqrt(),
        DifficultyMode::Easy => (1.0 - p).sqrt(),
    };
    Ok(AdvantageVector {
        values: adv.values.iter().map(|a| gamma * a / denom).collect(),
        variant,
        degenerate: false,
    })
}

/// Blends the hard- and easy-focused weights by the batch mean reward.
///
/// ```text
/// A_i = (w/2) * z_i / sqrt(p) + ((1 - w)/2) * z_i / sqrt(1 - p)
/// ```
///
/// where `z` is the standard advantage and `w = omega_s`. Early in training
/// (`w` near 0) the easy-focused term dominates; as the batch mean reward
/// rises the weight moves to the hard-focused term.
pub fn a_grae_sample_level(group: &RewardGroup, state: &TrainState) -> Result<AdvantageVector> {
    let stats = group_stats(group);
    let p = stats.require_success_rate(Variant::AGraeSample.name())?;
    let z = grae(group);
    if z.degenerate {
        return Ok(AdvantageVector::zeros(group.len(), Variant::AGraeSample));
    }
    let w = state.omega_s;
    let (sp, sq) = (p.sqrt(), (1.0 - p).sqrt());
    Ok(AdvantageVector {
        values: z
            .values
            .iter()
            .map(|a| (w / 2.0) * (a / sp) + ((1.0 - w) / 2.0) * (a / sq))
            .collect(),
        variant: Variant::AGraeSample,
        degenerate: false,
    })
}

/// Attenuates positive advantages by `min(1, omega_s / alpha)`; the identity
/// once `omega_s >= alpha`.
pub fn a_grae_group_level(adv: &AdvantageVector, state: &TrainState) -> AdvantageVector {
    let factor = (state.omega_s / state.alpha).min(1.0);
    let variant = match adv.variant {
        Variant::AGraeSample => Variant::AGraeFull,
        v => v,
    };
    adv.map_positive(variant, |a| a * factor)
}

/// Sample-level blending followed by group-level attenuation.
pub fn a_grae_full(group: &RewardGroup, state: &TrainState) -> Result<AdvantageVector> {
    let refined = a_grae_sample_level(group, state)?;
    let mut out = a_grae_group_level(&refined, state);
    out.variant = Variant::AGraeFull;
    Ok(out)
}

/// Total update magnitude of a group, `sum |A_i|`.
pub fn abs_advantage_sum(adv: &AdvantageVector) -> f64 {
    adv.values.iter().map(|a| a.abs()).sum()
}

/// Mean reward over every trajectory in the batch.
pub fn batch_mean_reward(groups: &[RewardGroup]) -> Result<f64> {
    if groups.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let (sum, count) = groups.iter().fold((0.0, 0usize), |(s, n), g| {
        (s + g.rewards.iter().sum::<f64>(), n + g.len())
    });
    Ok(sum / count as f64)
}

/// An estimator together with its constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Estimator {
    pub variant: Variant,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

fn default_beta() -> f64 {
    DEFAULT_BETA
}
fn default_gamma() -> f64 {
    DEFAULT_GAMMA
}
fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

impl Default for Estimator {
    fn default() -> Self {
        Self::new(Variant::Grae)
    }
}

impl Estimator {
    pub fn new(variant: Variant) -> Self {
        Self {
            variant,
            beta: DEFAULT_BETA,
            gamma: DEFAULT_GAMMA,
            alpha: DEFAULT_ALPHA,
        }
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.beta > 1.0) {
            return Err(invalid(
                "beta",
                format!("must be a finite value > 1, got {}", self.beta),
            ));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(invalid(
                "gamma",
                format!("must be a finite value > 0, got {}", self.gamma),
            ));
        }
        validate_alpha(self.alpha)
    }

    /// Advantages for a single group. `omega_s` is only read by the
    /// asymmetric variants.
    pub fn compute(&self, group: &RewardGroup, step: u64, omega_s: f64) -> Result<AdvantageVector> {
        if self.variant.needs_binary() && !group.is_binary() {
            return Err(Error::NonBinaryRewards {
                variant: self.variant.name(),
            });
        }
        match self.variant {
            Variant::Grae => Ok(grae(group)),
            Variant::GraeNoStd => Ok(grae_no_std(group)),
            Variant::PositiveDominant => Ok(positive_dominant(&grae(group), self.beta)),
            Variant::NegativeDominant => Ok(negative_dominant(&grae(group), self.beta)),
            Variant::HardFocused => difficulty_rescale(&grae(group), &group.stats(), DifficultyMode::Hard, self.gamma),
            Variant::EasyFocused => difficulty_rescale(&grae(group), &group.stats(), DifficultyMode::Easy, self.gamma),
            Variant::AGraeSample => a_grae_sample_level(group, &TrainState::new(step, omega_s, self.alpha)?),
            Variant::AGraeFull => a_grae_full(group, &TrainState::new(step, omega_s, self.alpha)?),
        }
    }

    /// Advantages for a whole rollout batch. The batch mean reward is computed
    /// once over every group before any group is processed.
    pub fn compute_batch(&self, groups: &[RewardGroup], step: u64) -> Result<Vec<AdvantageVector>> {
        self.validate()?;
        let omega_s = batch_mean_reward(groups)?;
        groups.iter().map(|g| self.compute(g, step, omega_s)).collect()
    }
}
