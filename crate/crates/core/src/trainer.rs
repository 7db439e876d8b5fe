//! Desk-scale RLVR training loop over an ensemble of behavior spaces.
//!
//! One step, for every query: draw `G` behaviors from the frozen rollout
//! policy, reward each by correct-set membership, compute advantages with the
//! configured estimator (the batch mean reward is pooled over the whole batch
//! first), then take `minibatch_passes` gradient-ascent steps on the clipped
//! surrogate
//!
//! ```text
//! L = (1/G) sum_k min(rho_k A_k, clip(rho_k, 1-eps, 1+eps) A_k)
//!     - kl_beta * (1/N) sum_i (x_i - ln x_i - 1),    x_i = pi_ref_i / pi_i
//! ```
//!
//! Logits move by `eta` times the gradient of the group-summed surrogate
//! `G * L`, so a single pass at `rho = 1` without KL moves them by exactly
//! `eta` times the behavior-space field of [`BehaviorSpace::logit_gradient`].
//!
//! Each query owns a ChaCha stream derived from the master seed and its
//! index, so the parallel and serial schedules produce identical runs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::advantage::{batch_mean_reward, AdvantageVector, Estimator, RewardGroup};
use crate::behavior::{log_softmax, BehaviorSpace, CorrectSet, InitScheme, SampledGroupAssignment, SpaceSpec};
use crate::error::{invalid, Error, Result};
use crate::passk::{passk_table, PassKRecord};

/// Per-query correct-set size and initial success probability.
///
/// Query `i` of `Q` starts with success probability
/// `success_min + (success_max - success_min) * i / (Q - 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DifficultyScheme {
    pub correct_count: usize,
    pub noise_std: f64,
    pub success_min: f64,
    pub success_max: f64,
}

impl Default for DifficultyScheme {
    fn default() -> Self {
        Self {
            correct_count: 4,
            noise_std: 1.0,
            success_min: 0.02,
            success_max: 0.9,
        }
    }
}

impl DifficultyScheme {
    pub fn target_success(&self, query: usize, num_queries: usize) -> f64 {
        if num_queries <= 1 {
            return self.success_min;
        }
        let t = query as f64 / (num_queries - 1) as f64;
        self.success_min + (self.success_max - self.success_min) * t
    }
}

/// When the unsolved-query count is considered to have collapsed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollapseRule {
    /// Collapse once unsolved_count > factor * max(baseline, 1).
    pub factor: f64,
    /// Step whose unsolved count serves as the baseline.
    pub baseline_step: usize,
}

impl Default for CollapseRule {
    fn default() -> Self {
        Self {
            factor: 3.0,
            baseline_step: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub num_queries: usize,
    /// Behaviors per query.
    pub n: usize,
    /// Rollouts per query per step.
    pub g: usize,
    pub steps: usize,
    pub eta: f64,
    pub estimator: Estimator,
    pub clip_epsilon: f64,
    pub kl_beta: f64,
    pub minibatch_passes: usize,
    pub seed: u64,
    pub difficulty: DifficultyScheme,
    #[serde(default)]
    pub collapse: CollapseRule,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            num_queries: 64,
            n: 64,
            g: 8,
            steps: 500,
            eta: 0.02,
            estimator: Estimator::default(),
            clip_epsilon: 0.2,
            kl_beta: 0.0,
            minibatch_passes: 1,
            seed: 0,
            difficulty: DifficultyScheme::default(),
            collapse: CollapseRule::default(),
        }
    }
}

fn config_err(field: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        field: field.to_owned(),
        reason: reason.into(),
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_queries == 0 {
            return Err(config_err("num_queries", "must be at least 1"));
        }
        if self.n < 2 {
            return Err(config_err("n", "must be at least 2"));
        }
        if self.g == 0 {
            return Err(config_err("g", "must be at least 1"));
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(config_err("eta", format!("must be finite and > 0, got {}", self.eta)));
        }
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return Err(config_err(
                "clip_epsilon",
                format!("must lie in (0, 1), got {}", self.clip_epsilon),
            ));
        }
        if !(self.kl_beta.is_finite() && self.kl_beta >= 0.0) {
            return Err(config_err(
                "kl_beta",
                format!("must be finite and >= 0, got {}", self.kl_beta),
            ));
        }
        if self.minibatch_passes == 0 {
            return Err(config_err("minibatch_passes", "must be at least 1"));
        }
        self.estimator.validate().map_err(|e| match e {
            Error::InvalidParameter { name, reason } => config_err(&format!("estimator.{name}"), reason),
            other => other,
        })?;
        let d = &self.difficulty;
        if d.correct_count == 0 || d.correct_count >= self.n {
            return Err(config_err(
                "difficulty.correct_count",
                format!("must lie in [1, n), got {} with n = {}", d.correct_count, self.n),
            ));
        }
        if !(d.noise_std.is_finite() && d.noise_std >= 0.0) {
            return Err(config_err("difficulty.noise_std", "must be finite and >= 0"));
        }
        for (name, v) in [
            ("difficulty.success_min", d.success_min),
            ("difficulty.success_max", d.success_max),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(config_err(name, format!("must lie in (0, 1), got {v}")));
            }
        }
        if d.success_min > d.success_max {
            return Err(config_err("difficulty.success_min", "must not exceed success_max"));
        }
        if !(self.collapse.factor.is_finite() && self.collapse.factor > 0.0) {
            return Err(config_err("collapse.factor", "must be finite and > 0"));
        }
        Ok(())
    }
}

/// Metrics recorded after each training step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: usize,
    pub omega_s: f64,
    /// Policy entropy averaged over queries, after the update.
    pub mean_entropy: f64,
    /// Correct responses among this step's rollouts.
    pub correct_count: usize,
    /// Queries whose rollout group had no correct response.
    pub unsolved_count: usize,
    /// Fraction of queries whose argmax behavior is correct, after the update.
    pub greedy_accuracy: f64,
}

/// One query's rollout at a step.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub indices: Vec<usize>,
    /// Probabilities of the sampled behaviors under the rollout policy.
    pub rollout_probs: Vec<f64>,
    pub advantages: AdvantageVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub metrics: StepMetrics,
    pub rollouts: Vec<Rollout>,
}

#[derive(Debug, Clone)]
pub struct Query {
    pub space: BehaviorSpace,
    rng: ChaCha8Rng,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// The set of queries trained together, each with its own rollout stream.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub queries: Vec<Query>,
}

impl Ensemble {
    /// Builds the ensemble described by the config's difficulty scheme.
    pub fn from_config(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let d = &config.difficulty;
        let spaces = (0..config.num_queries)
            .map(|i| {
                let spec = SpaceSpec {
                    n: config.n,
                    correct: CorrectSet::Count(d.correct_count),
                    init: InitScheme {
                        noise_std: d.noise_std,
                        success_probability: Some(d.target_success(i, config.num_queries)),
                    },
                    seed: config.seed,
                };
                spec.build_with(&mut stream(config.seed, 2 * i as u64))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_spaces(spaces, config.seed))
    }

    /// Wraps hand-built spaces; query `i` samples from stream `2i + 1` of `seed`.
    pub fn from_spaces(spaces: Vec<BehaviorSpace>, seed: u64) -> Self {
        let queries = spaces
            .into_iter()
            .enumerate()
            .map(|(i, space)| Query {
                space,
                rng: stream(seed, 2 * i as u64 + 1),
            })
            .collect();
        Self { queries }
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    pub fn spaces(&self) -> Vec<BehaviorSpace> {
        self.queries.iter().map(|q| q.space.clone()).collect()
    }
}

fn check_rollout_probs(rollout_probs: &[f64], assignment: &SampledGroupAssignment) -> Result<()> {
    if rollout_probs.len() != assignment.len() {
        return Err(invalid(
            "rollout_probs",
            format!("{} probabilities for {} samples", rollout_probs.len(), assignment.len()),
        ));
    }
    if let Some(p) = rollout_probs.iter().find(|p| p.is_nan() || **p <= 0.0) {
        return Err(invalid("rollout_probs", format!("must be strictly positive, got {p}")));
    }
    Ok(())
}

/// `(1/N) sum_i (x_i - ln x_i - 1)` with `x_i = pi_ref_i / pi_i`.
pub fn kl_penalty(space: &BehaviorSpace) -> f64 {
    let lp = space.log_probabilities();
    let lref = log_softmax(space.ref_logits());
    let n = lp.len() as f64;
    lp.iter()
        .zip(&lref)
        .map(|(l, r)| {
            let log_x = r - l;
            log_x.exp() - log_x - 1.0
        })
        .sum::<f64>()
        / n
}

fn kl_penalty_gradient(space: &BehaviorSpace, pi: &[f64]) -> Vec<f64> {
    let lp = space.log_probabilities();
    let lref = log_softmax(space.ref_logits());
    let n = lp.len() as f64;
    let one_minus_x: Vec<f64> = lp.iter().zip(&lref).map(|(l, r)| 1.0 - (r - l).exp()).collect();
    let total: f64 = one_minus_x.iter().sum();
    one_minus_x.iter().zip(pi).map(|(d, p)| (d - p * total) / n).collect()
}

fn clip(rho: f64, eps: f64) -> f64 {
    rho.clamp(1.0 - eps, 1.0 + eps)
}

/// Clipped surrogate objective for one query (to be maximized).
pub fn surrogate_loss(
    space: &BehaviorSpace,
    rollout_probs: &[f64],
    assignment: &SampledGroupAssignment,
    clip_epsilon: f64,
    kl_beta: f64,
) -> Result<f64> {
    check_rollout_probs(rollout_probs, assignment)?;
    let pi = space.probabilities();
    let g = assignment.len().max(1) as f64;
    let policy: f64 = assignment
        .indices
        .iter()
        .zip(&assignment.advantages)
        .zip(rollout_probs)
        .map(|((&i, &a), &old)| {
            let rho = pi[i] / old;
            (rho * a).min(clip(rho, clip_epsilon) * a)
        })
        .sum::<f64>()
        / g;
    let kl = if kl_beta > 0.0 {
        kl_beta * kl_penalty(space)
    } else {
        0.0
    };
    Ok(policy - kl)
}

/// Gradient of `G * surrogate_loss` with respect to the logits.
fn summed_surrogate_gradient(
    space: &BehaviorSpace,
    rollout_probs: &[f64],
    assignment: &SampledGroupAssignment,
    clip_epsilon: f64,
    kl_beta: f64,
) -> Vec<f64> {
    let pi = space.probabilities();
    let mut grad = vec![0.0; pi.len()];
    let mut weight_sum = 0.0;
    for ((&i, &a), &old) in assignment.indices.iter().zip(&assignment.advantages).zip(rollout_probs) {
        let rho = pi[i] / old;
        // d/dh of min(rho A, clip(rho) A) is rho A dlog(pi_i) while the
        // unclipped branch is the minimum, 0 otherwise.
        if rho * a <= clip(rho, clip_epsilon) * a {
            let w = rho * a;
            grad[i] += w;
            weight_sum += w;
        }
    }
    for (gj, p) in grad.iter_mut().zip(&pi) {
        *gj -= weight_sum * p;
    }
    if kl_beta > 0.0 {
        let g = assignment.len() as f64;
        for (gj, k) in grad.iter_mut().zip(kl_penalty_gradient(space, &pi)) {
            *gj -= g * kl_beta * k;
        }
    }
    grad
}

/// Analytic gradient of [`surrogate_loss`] with respect to the logits.
pub fn surrogate_gradient(
    space: &BehaviorSpace,
    rollout_probs: &[f64],
    assignment: &SampledGroupAssignment,
    clip_epsilon: f64,
    kl_beta: f64,
) -> Result<Vec<f64>> {
    check_rollout_probs(rollout_probs, assignment)?;
    let g = assignment.len().max(1) as f64;
    let grad = summed_surrogate_gradient(space, rollout_probs, assignment, clip_epsilon, kl_beta);
    Ok(grad.into_iter().map(|x| x / g).collect())
}

/// Runs one rollout/advantage/update step over the whole ensemble.
pub fn train_step(ensemble: &mut Ensemble, config: &ExperimentConfig, step: usize) -> Result<StepOutcome> {
    let g = config.g;

    let sampled: Vec<(Vec<usize>, Vec<f64>, RewardGroup)> = ensemble
        .queries
        .par_iter_mut()
        .map(|q| {
            let pi = q.space.probabilities();
            let indices = q.space.sample_group(g, &mut q.rng);
            let probs = indices.iter().map(|&i| pi[i]).collect();
            let group = RewardGroup::from_outcomes(indices.iter().map(|&i| q.space.is_correct(i)))?;
            Ok((indices, probs, group))
        })
        .collect::<Result<_>>()?;

    let groups: Vec<RewardGroup> = sampled.iter().map(|(_, _, grp)| grp.clone()).collect();
    let omega_s = batch_mean_reward(&groups)?;
    let estimator = config.estimator;

    let rollouts: Vec<Rollout> = ensemble
        .queries
        .par_iter_mut()
        .zip(sampled.into_par_iter())
        .map(|(q, (indices, rollout_probs, group))| {
            let advantages = estimator.compute(&group, step as u64, omega_s)?;
            let assignment = SampledGroupAssignment::from_vector(indices, &advantages)?;
            for _ in 0..config.minibatch_passes {
                let grad = summed_surrogate_gradient(
                    &q.space,
                    &rollout_probs,
                    &assignment,
                    config.clip_epsilon,
                    config.kl_beta,
                );
                q.space.apply_update(&grad, config.eta);
            }
            Ok(Rollout {
                indices: assignment.indices,
                rollout_probs,
                advantages,
            })
        })
        .collect::<Result<_>>()?;

    let correct_count = groups
        .iter()
        .map(|grp| grp.rewards().iter().filter(|&&r| r == 1.0).count())
        .sum();
    let unsolved_count = groups
        .iter()
        .filter(|grp| grp.rewards().iter().all(|&r| r == 0.0))
        .count();
    let nq = ensemble.len() as f64;
    let mean_entropy = ensemble.queries.iter().map(|q| q.space.entropy()).sum::<f64>() / nq;
    let greedy_hits = ensemble
        .queries
        .iter()
        .filter(|q| q.space.is_correct(q.space.greedy_index()))
        .count();

    Ok(StepOutcome {
        metrics: StepMetrics {
            step,
            omega_s,
            mean_entropy,
            correct_count,
            unsolved_count,
            greedy_accuracy: greedy_hits as f64 / nq,
        },
        rollouts,
    })
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub metrics: Vec<StepMetrics>,
    pub final_ensemble: Vec<BehaviorSpace>,
    /// First step at which the unsolved count exceeded the collapse threshold.
    pub collapse_step: Option<usize>,
}

/// Builds the configured ensemble and trains it for `config.steps` steps.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    let ensemble = Ensemble::from_config(config)?;
    run_ensemble(ensemble, config)
}

/// Trains an existing ensemble for `config.steps` steps (numbered from 1).
pub fn run_ensemble(mut ensemble: Ensemble, config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let mut metrics = Vec::with_capacity(config.steps);
    for step in 1..=config.steps {
        metrics.push(train_step(&mut ensemble, config, step)?.metrics);
    }
    let collapse_step = detect_collapse(&metrics, &config.collapse);
    Ok(ExperimentResult {
        metrics,
        final_ensemble: ensemble.spaces(),
        collapse_step,
    })
}

pub fn detect_collapse(metrics: &[StepMetrics], rule: &CollapseRule) -> Option<usize> {
    let baseline = metrics.iter().find(|m| m.step == rule.baseline_step)?.unsolved_count;
    let threshold = rule.factor * baseline.max(1) as f64;
    metrics
        .iter()
        .filter(|m| m.step > rule.baseline_step)
        .find(|m| m.unsolved_count as f64 > threshold)
        .map(|m| m.step)
}

/// Samples `n` responses per query and reports mean pass@k over queries.
pub fn evaluate_passk<R: Rng + ?Sized>(
    spaces: &[BehaviorSpace],
    n: u64,
    k_grid: &[u64],
    rng: &mut R,
) -> Result<Vec<(u64, f64)>> {
    if let Some(&k) = k_grid.iter().max() {
        if n < k {
            return Err(Error::PassK(format!("n = {n} is smaller than the largest k = {k}")));
        }
    }
    let records = spaces
        .iter()
        .enumerate()
        .map(|(i, space)| {
            let c = space
                .sample_group(n as usize, rng)
                .into_iter()
                .filter(|&b| space.is_correct(b))
                .count() as u64;
            PassKRecord::new(i.to_string(), n, c)
        })
        .collect::<Result<Vec<_>>>()?;
    passk_table(&records, k_grid)
}
