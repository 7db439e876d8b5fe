//! Acceptance suite: exact formulas, gradient field, pass@k estimator and
//! simulator dynamics. Each criterion prints one PASS/FAIL line; every suite
//! also checks its wall-clock budget.
//!
//! Run with `cargo test -p grae-core --test acceptance -- --nocapture` to see
//! the report.

use std::time::{Duration, Instant};

use grae_core::advantage::{
    a_grae_group_level, a_grae_sample_level, abs_advantage_sum, difficulty_rescale, grae, DifficultyMode,
};
use grae_core::behavior::SampledGroupAssignment;
use grae_core::passk::passk_single;
use grae_core::presets::{preset, PRESET_NAMES};
use grae_core::report::write_metrics_csv;
use grae_core::trainer::{run_experiment, train_step, Ensemble, ExperimentConfig};
use grae_core::{BehaviorSpace, Estimator, RewardGroup, TrainState, Variant};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};

type Outcome = Result<String, String>;

struct Report {
    suite: &'static str,
    failures: Vec<String>,
}

impl Report {
    fn new(suite: &'static str) -> Self {
        Self {
            suite,
            failures: Vec::new(),
        }
    }

    fn check(&mut self, name: &str, f: impl FnOnce() -> Outcome) {
        match f() {
            Ok(detail) => println!("PASS [{}] {name}: {detail}", self.suite),
            Err(detail) => {
                println!("FAIL [{}] {name}: {detail}", self.suite);
                self.failures.push(format!("{name}: {detail}"));
            }
        }
    }

    fn finish(mut self, started: Instant, budget: Duration) {
        let elapsed = started.elapsed();
        self.check("wall-clock budget", || {
            if elapsed < budget {
                Ok(format!("{elapsed:.2?} < {budget:?}"))
            } else {
                Err(format!("{elapsed:.2?} exceeds {budget:?}"))
            }
        });
        assert!(
            self.failures.is_empty(),
            "[{}] failed criteria:\n{}",
            self.suite,
            self.failures.join("\n")
        );
    }
}

fn binary_group(g: usize, c: usize) -> RewardGroup {
    let mut rewards: Vec<f64> = (0..g).map(|i| if i < c { 1.0 } else { 0.0 }).collect();
    rewards.shuffle(&mut ChaCha8Rng::seed_from_u64((g * 64 + c) as u64));
    RewardGroup::new(rewards).unwrap()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------------------
// exact formulas
// ---------------------------------------------------------------------------

#[test]
fn exact_formula_suite() {
    let started = Instant::now();
    let mut r = Report::new("exact");

    r.check("zero-sum and positive/negative magnitude equality, G <= 32", || {
        let mut worst: f64 = 0.0;
        let mut count = 0;
        for g in 1..=32 {
            for c in 0..=g {
                let group = binary_group(g, c);
                let a = grae(&group);
                if c == 0 || c == g {
                    ensure(a.degenerate && a.values.iter().all(|&v| v == 0.0), || {
                        format!("G={g} c={c} not all-zero")
                    })?;
                    continue;
                }
                let pos: f64 = a.values.iter().filter(|&&v| v > 0.0).sum();
                let neg: f64 = a.values.iter().filter(|&&v| v < 0.0).map(|v| -v).sum();
                let err = a.sum().abs().max((pos - neg).abs());
                worst = worst.max(err);
                count += 1;
                ensure(err < 1e-9, || {
                    format!("G={g} c={c}: sum {} pos {pos} neg {neg}", a.sum())
                })?;
            }
        }
        Ok(format!("{count} mixed groups, max error {worst:.1e}"))
    });

    r.check(
        "update magnitude law sum|A| = 2G sqrt(p(1-p)), peak G at p = 1/2",
        || {
            let mut worst: f64 = 0.0;
            for g in 2..=32usize {
                let mut best = (0.0, 0);
                for c in 1..g {
                    let p = c as f64 / g as f64;
                    let s = abs_advantage_sum(&grae(&binary_group(g, c)));
                    let law = 2.0 * g as f64 * (p * (1.0 - p)).sqrt();
                    worst = worst.max((s - law).abs());
                    ensure((s - law).abs() < 1e-9, || format!("G={g} c={c}: {s} vs {law}"))?;
                    let mirrored = abs_advantage_sum(&grae(&binary_group(g, g - c)));
                    ensure((s - mirrored).abs() < 1e-9, || format!("G={g}: p and 1-p differ"))?;
                    if s > best.0 + 1e-12 {
                        best = (s, c);
                    }
                }
                if g % 2 == 0 {
                    ensure(best.1 == g / 2, || format!("G={g}: peak at c={} not G/2", best.1))?;
                    ensure((best.0 - g as f64).abs() < 1e-9, || {
                        format!("G={g}: peak {} != G", best.0)
                    })?;
                }
            }
            Ok(format!("max error {worst:.1e}"))
        },
    );

    r.check(
        "difficulty rescale magnitudes G sqrt(1-p) and G sqrt(p) at gamma = 0.5",
        || {
            let mut worst: f64 = 0.0;
            for g in 2..=32usize {
                for c in 1..g {
                    let group = binary_group(g, c);
                    let p = c as f64 / g as f64;
                    let z = grae(&group);
                    let hard = difficulty_rescale(&z, &group.stats(), DifficultyMode::Hard, 0.5).unwrap();
                    let easy = difficulty_rescale(&z, &group.stats(), DifficultyMode::Easy, 0.5).unwrap();
                    let eh = (abs_advantage_sum(&hard) - g as f64 * (1.0 - p).sqrt()).abs();
                    let ee = (abs_advantage_sum(&easy) - g as f64 * p.sqrt()).abs();
                    worst = worst.max(eh).max(ee);
                    ensure(eh < 1e-9 && ee < 1e-9, || {
                        format!("G={g} c={c}: errors {eh:.1e} {ee:.1e}")
                    })?;
                }
            }
            Ok(format!("max error {worst:.1e}"))
        },
    );

    r.check("asymmetric estimator limits and attenuation identity", || {
        let mut worst: f64 = 0.0;
        for g in 2..=32usize {
            for c in 1..g {
                let group = binary_group(g, c);
                let z = grae(&group);
                let stats = group.stats();
                for (omega, mode) in [(1.0, DifficultyMode::Hard), (0.0, DifficultyMode::Easy)] {
                    let blended = a_grae_sample_level(&group, &TrainState::new(0, omega, 1.0).unwrap()).unwrap();
                    let reference = difficulty_rescale(&z, &stats, mode, 0.5).unwrap();
                    for (a, b) in blended.values.iter().zip(&reference.values) {
                        worst = worst.max((a - b).abs());
                        ensure((a - b).abs() < 1e-12, || {
                            format!("G={g} c={c} omega={omega}: {a} vs {b}")
                        })?;
                    }
                }
                for alpha in [0.25, 0.5, 1.0] {
                    for omega in [alpha, (alpha + 1.0) / 2.0, 1.0] {
                        let state = TrainState::new(0, omega, alpha).unwrap();
                        let refined = a_grae_sample_level(&group, &state).unwrap();
                        let out = a_grae_group_level(&refined, &state);
                        ensure(out.values == refined.values, || {
                            format!("alpha={alpha} omega={omega} not identity")
                        })?;
                    }
                }
            }
        }
        Ok(format!("max limit error {worst:.1e}"))
    });

    r.finish(started, Duration::from_secs(1));
}

// ---------------------------------------------------------------------------
// gradient field
// ---------------------------------------------------------------------------

fn finite_difference(space: &BehaviorSpace, a: &SampledGroupAssignment, step: f64) -> Vec<f64> {
    (0..space.n())
        .map(|i| {
            let shifted = |delta: f64| {
                let mut logits = space.logits().to_vec();
                logits[i] += delta;
                BehaviorSpace::new(logits, space.correct_indices())
                    .unwrap()
                    .objective(a)
            };
            (shifted(step) - shifted(-step)) / (2.0 * step)
        })
        .collect()
}

fn random_instance(rng: &mut ChaCha8Rng) -> (BehaviorSpace, SampledGroupAssignment) {
    let n = rng.random_range(2..=16);
    let g = rng.random_range(1..=8);
    let logits: Vec<f64> = (0..n).map(|_| 1.5 * rng.sample::<f64, _>(StandardNormal)).collect();
    let correct: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.3)).collect();
    let space = BehaviorSpace::new(logits, correct).unwrap();
    let indices = space.sample_group(g, rng);
    let advantages: Vec<f64> = match rng.random_range(0..3) {
        0 => (0..g).map(|_| rng.sample::<f64, _>(StandardNormal)).collect(),
        k => {
            let group = RewardGroup::from_outcomes(indices.iter().map(|&i| space.is_correct(i))).unwrap();
            let variant = if k == 1 {
                Variant::Grae
            } else {
                Variant::NegativeDominant
            };
            let adv = Estimator::new(variant).compute(&group, 0, 0.5).unwrap();
            if adv.degenerate {
                (0..g).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
            } else {
                adv.values
            }
        }
    };
    (space, SampledGroupAssignment::new(indices, advantages).unwrap())
}

#[test]
fn gradient_suite() {
    let started = Instant::now();
    let mut r = Report::new("gradient");

    r.check(
        "analytic field matches central differences (100 instances, rel err < 1e-6)",
        || {
            let mut rng = ChaCha8Rng::seed_from_u64(2024);
            let mut worst: f64 = 0.0;
            for trial in 0..100 {
                let (space, a) = random_instance(&mut rng);
                let analytic = space.logit_gradient(&a);
                let numeric = finite_difference(&space, &a, 1e-5);
                let diff = analytic
                    .iter()
                    .zip(&numeric)
                    .map(|(x, y)| (x - y).powi(2))
                    .sum::<f64>()
                    .sqrt();
                let scale = analytic.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-8);
                let rel = diff / scale;
                worst = worst.max(rel);
                ensure(rel < 1e-6, || format!("trial {trial}: relative error {rel:.2e}"))?;
                let total: f64 = analytic.iter().sum();
                ensure(total.abs() < 1e-9, || {
                    format!("trial {trial}: gradient sums to {total:.2e}")
                })?;
            }
            Ok(format!("max relative error {worst:.2e}"))
        },
    );

    r.check("unsampled components: exactly 0 at C = 0, -C pi at C != 0", || {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut zero_cases = 0;
        let mut worst: f64 = 0.0;
        for _ in 0..200 {
            let n = rng.random_range(4..=16);
            let logits: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let space = BehaviorSpace::new(logits, [0]).unwrap();
            let pi = space.probabilities();
            let g = 2 * rng.random_range(1..=4);
            let indices: Vec<usize> = (0..g).map(|_| rng.random_range(0..n / 2)).collect();
            // p = 1/2 groups: GRAE gives exactly +1 / -1, so C is exactly 0
            let rewards = RewardGroup::new((0..g).map(|k| if k < g / 2 { 1.0 } else { 0.0 }).collect()).unwrap();
            let z = grae(&rewards);
            for adv in [
                z.values.clone(),
                z.values.iter().map(|&v| if v > 0.0 { v / 10.0 } else { v }).collect(),
            ] {
                let a = SampledGroupAssignment::new(indices.clone(), adv).unwrap();
                let grad = space.logit_gradient(&a);
                for i in (0..n).filter(|i| !a.contains(*i)) {
                    if a.intragroup_sum == 0.0 {
                        ensure(grad[i] == 0.0, || {
                            format!("unsampled {i} moved by {} at C = 0", grad[i])
                        })?;
                        zero_cases += 1;
                    } else {
                        let err = (grad[i] + a.intragroup_sum * pi[i]).abs();
                        worst = worst.max(err);
                        ensure(err < 1e-12, || {
                            format!("unsampled {i}: {} vs {}", grad[i], -a.intragroup_sum * pi[i])
                        })?;
                        ensure(grad[i] > 0.0, || {
                            "negative-dominant unsampled component not positive".into()
                        })?;
                    }
                }
            }
        }
        Ok(format!(
            "{zero_cases} exact-zero components, max |grad + C pi| {worst:.1e}"
        ))
    });

    r.check("trainer update equals eta * analytic field over 50 steps", || {
        let cfg = ExperimentConfig {
            steps: 50,
            seed: 31,
            minibatch_passes: 1,
            kl_beta: 0.0,
            estimator: Estimator::new(Variant::Grae),
            ..ExperimentConfig::default()
        };
        let mut ens = Ensemble::from_config(&cfg).unwrap();
        let mut worst: f64 = 0.0;
        for step in 1..=cfg.steps {
            let before = ens.spaces();
            let out = train_step(&mut ens, &cfg, step).map_err(|e| e.to_string())?;
            for ((space, q), roll) in before.iter().zip(&ens.queries).zip(&out.rollouts) {
                let a = SampledGroupAssignment::from_vector(roll.indices.clone(), &roll.advantages).unwrap();
                let field = space.logit_gradient(&a);
                for ((h0, h1), f) in space.logits().iter().zip(q.space.logits()).zip(&field) {
                    let err = ((h1 - h0) - cfg.eta * f).abs();
                    worst = worst.max(err);
                    ensure(err < 1e-9, || format!("step {step}: deviation {err:.2e}"))?;
                }
            }
        }
        Ok(format!("64 queries x 50 steps, max deviation {worst:.1e}"))
    });

    r.finish(started, Duration::from_secs(10));
}

// ---------------------------------------------------------------------------
// pass@k
// ---------------------------------------------------------------------------

fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    (0..k).fold(1u128, |acc, j| acc * (n - j) as u128 / (j + 1) as u128)
}

#[test]
fn passk_suite() {
    let started = Instant::now();
    let mut r = Report::new("passk");

    r.check(
        "pass@1 = c/n exactly; product form matches exact binomials for n <= 20",
        || {
            for n in 1..=256u64 {
                for c in 0..=n {
                    let v = passk_single(n, c, 1).unwrap();
                    ensure(v == c as f64 / n as f64, || format!("n={n} c={c}: {v}"))?;
                }
            }
            let mut worst: f64 = 0.0;
            for n in 1..=20u64 {
                for c in 0..=n {
                    for k in 1..=n {
                        let total = binomial(n, k);
                        let miss = binomial(n - c, k);
                        let exact = (total - miss) as f64 / total as f64;
                        let v = passk_single(n, c, k).unwrap();
                        worst = worst.max((v - exact).abs());
                        ensure((v - exact).abs() < 1e-12, || {
                            format!("n={n} c={c} k={k}: {v} vs {exact}")
                        })?;
                    }
                }
            }
            Ok(format!("max deviation from exact {worst:.1e}"))
        },
    );

    r.check(
        "unbiased under binomial sampling (20,000 draws, 3 standard errors)",
        || {
            let mut rng = ChaCha8Rng::seed_from_u64(37);
            let n = 32u64;
            let draws = 20_000;
            let mut worst_z: f64 = 0.0;
            for q in [0.1, 0.3, 0.7] {
                let dist = Binomial::new(n, q).unwrap();
                for k in [1u64, 4, 16] {
                    let samples: Vec<f64> = (0..draws)
                        .map(|_| passk_single(n, dist.sample(&mut rng), k).unwrap())
                        .collect();
                    let mean = samples.iter().sum::<f64>() / draws as f64;
                    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
                    let se = (var / draws as f64).sqrt();
                    let truth = 1.0 - (1.0 - q).powi(k as i32);
                    let z = if se > 0.0 { (mean - truth).abs() / se } else { 0.0 };
                    worst_z = worst_z.max(z);
                    ensure((mean - truth).abs() <= 3.0 * se + 1e-15, || {
                        format!("q={q} k={k}: mean {mean:.5} vs {truth:.5} (se {se:.2e})")
                    })?;
                }
            }
            Ok(format!("largest deviation {worst_z:.2} standard errors"))
        },
    );

    r.finish(started, Duration::from_secs(30));
}

// ---------------------------------------------------------------------------
// dynamics
// ---------------------------------------------------------------------------

fn final_entropy(name: &str, seed: u64) -> f64 {
    let cfg = ExperimentConfig {
        seed,
        ..preset(name).unwrap()
    };
    run_experiment(&cfg).unwrap().metrics.last().unwrap().mean_entropy
}

fn rare_arm_space() -> BehaviorSpace {
    // behavior 0 is a likely correct answer, 15 a correct answer with
    // probability ~5e-6, the rest are wrong
    let mut logits = vec![1.5; 16];
    logits[0] = 2.0;
    logits[15] = -8.0;
    BehaviorSpace::new(logits, [0, 15]).unwrap()
}

fn rare_arm_window(variant: Variant) -> Result<(f64, f64, usize), String> {
    let space = rare_arm_space();
    let start = space.logits()[15];
    ensure(space.probabilities()[15] < 1e-3, || "rare arm is not rare".into())?;
    let cfg = ExperimentConfig {
        num_queries: 1,
        n: 16,
        g: 8,
        eta: 0.1,
        estimator: Estimator::new(variant),
        ..ExperimentConfig::default()
    };
    let mut ens = Ensemble::from_spaces(vec![space], 5);
    let mut mixed = 0;
    for step in 1..=60 {
        let out = train_step(&mut ens, &cfg, step).map_err(|e| e.to_string())?;
        let roll = &out.rollouts[0];
        ensure(!roll.indices.contains(&15), || {
            format!("{variant}: rare arm sampled at step {step}")
        })?;
        mixed += usize::from(!roll.advantages.degenerate);
    }
    Ok((start, ens.queries[0].space.logits()[15], mixed))
}

#[test]
fn dynamics_suite() {
    let started = Instant::now();
    let mut r = Report::new("dynamics");

    r.check(
        "final entropy negative-dominant > GRPO > positive-dominant in >= 18/20 seeds",
        || {
            let mut ordered = 0;
            let mut lines = Vec::new();
            for seed in 0..20 {
                let neg = final_entropy("negative-dominant", seed);
                let std = final_entropy("grpo", seed);
                let pos = final_entropy("positive-dominant", seed);
                if neg > std && std > pos {
                    ordered += 1;
                } else {
                    lines.push(format!("seed {seed}: {neg:.4} / {std:.4} / {pos:.4}"));
                }
            }
            ensure(ordered >= 18, || {
                format!("ordered in {ordered}/20 seeds; {}", lines.join("; "))
            })?;
            Ok(format!("ordered in {ordered}/20 seeds"))
        },
    );

    r.check(
        "never-sampled correct behavior: static under GRPO, rising under negative-dominant",
        || {
            let (start, after_std, mixed_std) = rare_arm_window(Variant::Grae)?;
            ensure(mixed_std > 0, || "GRPO window had no informative group".into())?;
            ensure(after_std == start, || {
                format!("GRPO moved the rare logit {start} -> {after_std}")
            })?;
            let (start, after_neg, mixed_neg) = rare_arm_window(Variant::NegativeDominant)?;
            ensure(mixed_neg > 0, || {
                "negative-dominant window had no informative group".into()
            })?;
            ensure(after_neg > start, || {
                format!("negative-dominant did not raise the rare logit: {after_neg}")
            })?;
            Ok(format!(
                "GRPO {start} -> {after_std}; negative-dominant {start} -> {after_neg:.9}"
            ))
        },
    );

    r.check("same seed gives byte-identical metric files for every preset", || {
        for name in PRESET_NAMES {
            let cfg = ExperimentConfig {
                seed: 7,
                ..preset(name).unwrap()
            };
            let mut files = Vec::new();
            for _ in 0..2 {
                let mut buf = Vec::new();
                write_metrics_csv(&mut buf, &run_experiment(&cfg).unwrap().metrics).unwrap();
                files.push(buf);
            }
            ensure(files[0] == files[1], || format!("{name}: metric files differ"))?;
        }
        Ok(format!("{} presets", PRESET_NAMES.len()))
    });

    r.finish(started, Duration::from_secs(300));
}
