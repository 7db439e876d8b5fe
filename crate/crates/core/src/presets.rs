//! Named experiment configurations.
//!
//! All presets share the same ensemble (64 queries of 64 behaviors, 4 of them
//! correct, initial success probability spread over [0.02, 0.9]), 8 rollouts
//! per query and 500 steps; they differ only in the advantage estimator.

use crate::advantage::{Estimator, Variant};
use crate::error::{invalid, Result};
use crate::trainer::ExperimentConfig;

pub const PRESET_NAMES: [&str; 6] = [
    "grpo",
    "positive-dominant",
    "negative-dominant",
    "hard-focused",
    "easy-focused",
    "a-grae",
];

pub fn describe(name: &str) -> Option<&'static str> {
    Some(match name {
        "grpo" => "standard group-relative advantages (symmetric control)",
        "positive-dominant" => "positive advantages multiplied by beta = 10",
        "negative-dominant" => "positive advantages divided by beta = 10",
        "hard-focused" => "advantages scaled by gamma / sqrt(p), gamma = 0.5",
        "easy-focused" => "advantages scaled by gamma / sqrt(1 - p), gamma = 0.5",
        "a-grae" => "batch-mean-reward blended difficulty weights plus positive attenuation, alpha = 1",
        _ => return None,
    })
}

pub fn variant_for(name: &str) -> Option<Variant> {
    Some(match name {
        "grpo" => Variant::Grae,
        "positive-dominant" => Variant::PositiveDominant,
        "negative-dominant" => Variant::NegativeDominant,
        "hard-focused" => Variant::HardFocused,
        "easy-focused" => Variant::EasyFocused,
        "a-grae" => Variant::AGraeFull,
        _ => return None,
    })
}

pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let variant = variant_for(name).ok_or_else(|| {
        invalid(
            "preset",
            format!("unknown preset `{name}`; valid presets: {}", PRESET_NAMES.join(", ")),
        )
    })?;
    Ok(ExperimentConfig {
        estimator: Estimator::new(variant),
        ..ExperimentConfig::default()
    })
}
