//! A single query modelled as a softmax policy over `N` whole responses.
//!
//! Each behavior is one complete trajectory; a subset of them is verified
//! correct. A sampled group with advantages `A_k` defines the objective
//!
//! ```text
//! J(h) = sum_k A_k * ln pi_{b_k}(h)
//! ```
//!
//! whose gradient with respect to the logits is
//!
//! ```text
//! dJ/dh_i = 1(b_i sampled) * A_i - C * pi_i,    C = sum_k A_k
//! ```
//!
//! With zero-sum advantages (`C = 0`) the logit of an unsampled behavior never
//! moves; with `C < 0` every unsampled behavior gains `-C * pi_i`.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::advantage::AdvantageVector;
use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorSpace {
    logits: Vec<f64>,
    correct: Vec<bool>,
    ref_logits: Vec<f64>,
}

impl BehaviorSpace {
    /// Creates a space whose reference policy is the initial logits.
    ///
    /// The correct set may be empty (an unsolvable query) or cover every
    /// behavior (a trivial one).
    pub fn new(logits: Vec<f64>, correct: impl IntoIterator<Item = usize>) -> Result<Self> {
        let n = logits.len();
        if n < 2 {
            return Err(invalid(
                "n",
                format!("a behavior space needs at least 2 behaviors, got {n}"),
            ));
        }
        if let Some(h) = logits.iter().find(|h| !h.is_finite()) {
            return Err(invalid("logits", format!("must be finite, got {h}")));
        }
        let mut mask = vec![false; n];
        for i in correct {
            if i >= n {
                return Err(invalid(
                    "correct_set",
                    format!("index {i} out of range for {n} behaviors"),
                ));
            }
            mask[i] = true;
        }
        Ok(Self {
            ref_logits: logits.clone(),
            logits,
            correct: mask,
        })
    }

    /// Uniform policy over `n` behaviors.
    pub fn uniform(n: usize, correct: impl IntoIterator<Item = usize>) -> Result<Self> {
        Self::new(vec![0.0; n], correct)
    }

    pub fn n(&self) -> usize {
        self.logits.len()
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn ref_logits(&self) -> &[f64] {
        &self.ref_logits
    }

    pub fn is_correct(&self, i: usize) -> bool {
        self.correct[i]
    }

    pub fn correct_mask(&self) -> &[bool] {
        &self.correct
    }

    pub fn correct_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.correct.iter().enumerate().filter_map(|(i, &c)| c.then_some(i))
    }

    pub fn probabilities(&self) -> Vec<f64> {
        softmax(&self.logits)
    }

    pub fn ref_probabilities(&self) -> Vec<f64> {
        softmax(&self.ref_logits)
    }

    pub fn log_probabilities(&self) -> Vec<f64> {
        log_softmax(&self.logits)
    }

    /// Draws `g` behaviors i.i.d. from the current policy.
    pub fn sample_group<R: Rng + ?Sized>(&self, g: usize, rng: &mut R) -> Vec<usize> {
        let dist = WeightedIndex::new(self.probabilities()).expect("softmax probabilities are finite and sum to one");
        (0..g).map(|_| dist.sample(rng)).collect()
    }

    /// `sum_k A_k ln pi_{b_k}`. Only used as a check on [`Self::logit_gradient`].
    pub fn objective(&self, assignment: &SampledGroupAssignment) -> f64 {
        let log_pi = self.log_probabilities();
        assignment
            .indices
            .iter()
            .zip(&assignment.advantages)
            .map(|(&i, a)| a * log_pi[i])
            .sum()
    }

    /// Exact gradient of [`Self::objective`] with respect to the logits.
    /// Repeated indices accumulate their advantages.
    pub fn logit_gradient(&self, assignment: &SampledGroupAssignment) -> Vec<f64> {
        let pi = self.probabilities();
        let c = assignment.intragroup_sum;
        let mut grad: Vec<f64> = pi.iter().map(|p| -c * p).collect();
        for (&i, a) in assignment.indices.iter().zip(&assignment.advantages) {
            grad[i] += a;
        }
        grad
    }

    /// Gradient ascent step `h <- h + eta * gradient`. The reference logits
    /// are left untouched.
    pub fn apply_update(&mut self, gradient: &[f64], eta: f64) {
        assert_eq!(
            gradient.len(),
            self.n(),
            "gradient length must match the behavior count"
        );
        for (h, g) in self.logits.iter_mut().zip(gradient) {
            *h += eta * g;
        }
    }

    /// Shannon entropy of the policy in nats.
    pub fn entropy(&self) -> f64 {
        let log_pi = self.log_probabilities();
        -log_pi
            .iter()
            .map(|&lp| {
                let p = lp.exp();
                if p > 0.0 {
                    p * lp
                } else {
                    0.0
                }
            })
            .sum::<f64>()
    }

    /// Probability mass on the correct set.
    pub fn success_probability(&self) -> f64 {
        self.probabilities()
            .iter()
            .zip(&self.correct)
            .filter(|(_, &c)| c)
            .map(|(p, _)| p)
            .sum()
    }

    /// Highest-logit behavior, lowest index on ties.
    pub fn greedy_index(&self) -> usize {
        let mut best = 0;
        for (i, &h) in self.logits.iter().enumerate().skip(1) {
            if h > self.logits[best] {
                best = i;
            }
        }
        best
    }
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|h| (h - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

pub(crate) fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|h| (h - max).exp()).sum::<f64>().ln();
    logits.iter().map(|h| h - lse).collect()
}

/// A sampled group together with the advantages assigned to its members.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledGroupAssignment {
    pub indices: Vec<usize>,
    pub advantages: Vec<f64>,
    /// `C = sum_k A_k`.
    pub intragroup_sum: f64,
}

impl SampledGroupAssignment {
    pub fn new(indices: Vec<usize>, advantages: Vec<f64>) -> Result<Self> {
        if indices.len() != advantages.len() {
            return Err(invalid(
                "advantages",
                format!("{} advantages for {} sampled indices", advantages.len(), indices.len()),
            ));
        }
        let intragroup_sum = advantages.iter().sum();
        Ok(Self {
            indices,
            advantages,
            intragroup_sum,
        })
    }

    pub fn from_vector(indices: Vec<usize>, adv: &AdvantageVector) -> Result<Self> {
        Self::new(indices, adv.values.clone())
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Whether index `i` appears in the group.
    pub fn contains(&self, i: usize) -> bool {
        self.indices.contains(&i)
    }
}

/// Which behaviors are correct.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum CorrectSet {
    /// A seeded random subset of this size.
    Count(usize),
    /// Explicit behavior indices.
    Indices(Vec<usize>),
}

/// Initial logit scheme: i.i.d. Gaussian logits, then a common offset on the
/// correct behaviors so their total probability hits `success_probability`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitScheme {
    #[serde(default)]
    pub noise_std: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub success_probability: Option<f64>,
}

/// Serializable description of a behavior space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceSpec {
    pub n: usize,
    pub correct: CorrectSet,
    pub init: InitScheme,
    pub seed: u64,
}

impl SpaceSpec {
    pub fn build(&self) -> Result<BehaviorSpace> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        self.build_with(&mut rng)
    }

    /// Builds the space from an explicit random stream; `seed` is ignored.
    pub fn build_with<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<BehaviorSpace> {
        let n = self.n;
        if n < 2 {
            return Err(invalid(
                "n",
                format!("a behavior space needs at least 2 behaviors, got {n}"),
            ));
        }
        let sd = self.init.noise_std;
        if !(sd.is_finite() && sd >= 0.0) {
            return Err(invalid("noise_std", format!("must be finite and >= 0, got {sd}")));
        }
        let correct: Vec<usize> = match &self.correct {
            CorrectSet::Count(k) => {
                if *k > n {
                    return Err(invalid("correct", format!("count {k} exceeds {n} behaviors")));
                }
                let mut v = index::sample(rng, n, *k).into_vec();
                v.sort_unstable();
                v
            }
            CorrectSet::Indices(v) => v.clone(),
        };
        let mut logits: Vec<f64> = (0..n).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect();
        let mut space = BehaviorSpace::new(logits.clone(), correct)?;

        if let Some(q) = self.init.success_probability {
            if !(q > 0.0 && q < 1.0) {
                return Err(invalid("success_probability", format!("must lie in (0, 1), got {q}")));
            }
            let k = space.correct_indices().count();
            if k == 0 || k == n {
                return Err(invalid(
                    "success_probability",
                    "needs a correct set that is neither empty nor full",
                ));
            }
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let (mut s_correct, mut s_wrong) = (0.0, 0.0);
            for (h, &c) in logits.iter().zip(space.correct_mask()) {
                let e = (h - max).exp();
                if c {
                    s_correct += e;
                } else {
                    s_wrong += e;
                }
            }
            let offset = (q * s_wrong / ((1.0 - q) * s_correct)).ln();
            for (h, &c) in logits.iter_mut().zip(space.correct_mask()) {
                if c {
                    *h += offset;
                }
            }
            let mask = space.correct_mask().to_vec();
            space = BehaviorSpace::new(logits, mask.iter().enumerate().filter_map(|(i, &c)| c.then_some(i)))?;
        }
        Ok(space)
    }
}
