//! Plot-ready output: the per-step metrics table and the run summary.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::advantage::Variant;
use crate::trainer::{ExperimentConfig, ExperimentResult, StepMetrics};

pub const METRICS_HEADER: &str = "step,omega_s,mean_entropy,correct_count,unsolved_count,greedy_accuracy";

/// Writes metrics as CSV with six-decimal floats.
pub fn write_metrics_csv<W: Write>(mut out: W, metrics: &[StepMetrics]) -> std::io::Result<()> {
    writeln!(out, "{METRICS_HEADER}")?;
    for m in metrics {
        writeln!(
            out,
            "{},{:.6},{:.6},{},{},{:.6}",
            m.step, m.omega_s, m.mean_entropy, m.correct_count, m.unsolved_count, m.greedy_accuracy
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub variant: Variant,
    pub steps: usize,
    pub seed: u64,
    pub num_queries: usize,
    pub final_omega_s: Option<f64>,
    pub final_mean_entropy: f64,
    pub final_correct_count: Option<usize>,
    pub final_unsolved_count: Option<usize>,
    pub final_greedy_accuracy: f64,
    /// Correct-set probability mass averaged over queries.
    pub final_mean_success_probability: f64,
    pub collapse_step: Option<usize>,
}

impl Summary {
    pub fn new(config: &ExperimentConfig, result: &ExperimentResult) -> Self {
        let spaces = &result.final_ensemble;
        let nq = spaces.len().max(1) as f64;
        let last = result.metrics.last();
        let greedy = spaces.iter().filter(|s| s.is_correct(s.greedy_index())).count() as f64 / nq;
        Self {
            variant: config.estimator.variant,
            steps: config.steps,
            seed: config.seed,
            num_queries: spaces.len(),
            final_omega_s: last.map(|m| m.omega_s),
            final_mean_entropy: spaces.iter().map(|s| s.entropy()).sum::<f64>() / nq,
            final_correct_count: last.map(|m| m.correct_count),
            final_unsolved_count: last.map(|m| m.unsolved_count),
            final_greedy_accuracy: greedy,
            final_mean_success_probability: spaces.iter().map(|s| s.success_probability()).sum::<f64>() / nq,
            collapse_step: result.collapse_step,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("summary serializes");
        s.push('\n');
        s
    }
}
