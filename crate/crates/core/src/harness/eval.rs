//! Monte Carlo evaluation of a director against a simulated matcher.

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::color::{ColorContext, Condition};
use crate::episode::{run_episode, Baseline, Director, EpisodeRecord};
use crate::error::Result;
use crate::lexicon::DescriptionModel;
use crate::matcher::MatcherProfile;
use crate::parallel::{map_indexed, Execution};
use crate::policies::PolicyKind;
use crate::rl::dqn::LearnedDirector;
use crate::rl::reward::RewardParams;
use crate::rl::weights::load_network;

/// 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

/// SplitMix64 finalizer, used to derive independent per-episode seeds.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the `replicate`-th episode on context `index`. It does not depend
/// on the policy, so different policies are compared on paired randomness.
pub fn episode_seed(seed: u64, index: usize, replicate: usize) -> u64 {
    mix64(mix64(seed ^ mix64(index as u64)) ^ replicate as u64)
}

pub fn make_director(policy: &PolicyKind) -> Result<Box<dyn Director>> {
    Ok(match policy {
        PolicyKind::Learned(path) => {
            let net = load_network(Path::new(path))?;
            Box::new(LearnedDirector::new(net, policy.id())?)
        }
        other => Box::new(Baseline(other.clone())),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    pub profile: MatcherProfile,
    pub rewards: RewardParams,
    pub seed: u64,
    /// Episodes per context.
    pub replicates: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            profile: MatcherProfile::always_select(),
            rewards: RewardParams::default(),
            seed: 0,
            replicates: 1,
        }
    }
}

/// One episode per (context, replicate), in context-major order.
pub fn run_episodes(
    director: &dyn Director,
    contexts: &[ColorContext],
    model: &dyn DescriptionModel,
    settings: &EvalSettings,
    execution: Execution,
) -> Result<Vec<EpisodeRecord>> {
    settings.profile.validate()?;
    settings.rewards.validate()?;
    let reps = settings.replicates.max(1);
    map_indexed(contexts.len() * reps, execution, |k| {
        let (i, r) = (k / reps, k % reps);
        let mut rng = ChaCha8Rng::seed_from_u64(episode_seed(settings.seed, i, r));
        run_episode(
            director,
            &settings.profile,
            &contexts[i],
            model,
            &settings.rewards,
            &mut rng,
        )
    })
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Tally {
    pub episodes: usize,
    pub successes: usize,
    pub reward_sum: f64,
    pub term_sum: usize,
    /// Episodes in which the matcher asked at least one clarification.
    pub clarified: usize,
}

impl Tally {
    pub fn add(&mut self, e: &EpisodeRecord) {
        self.episodes += 1;
        self.successes += usize::from(e.success);
        self.reward_sum += e.reward;
        self.term_sum += e.term_count;
        self.clarified += usize::from(e.clarifications > 0);
    }

    fn ratio(&self, x: f64) -> f64 {
        if self.episodes == 0 {
            0.0
        } else {
            x / self.episodes as f64
        }
    }

    pub fn success_rate(&self) -> f64 {
        self.ratio(self.successes as f64)
    }

    pub fn avg_reward(&self) -> f64 {
        self.ratio(self.reward_sum)
    }

    pub fn avg_terms(&self) -> f64 {
        self.ratio(self.term_sum as f64)
    }

    pub fn clarification_rate(&self) -> f64 {
        self.ratio(self.clarified as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionStats {
    pub episodes: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub avg_reward: f64,
    pub avg_terms: f64,
    pub clarification_rate: f64,
}

impl From<&Tally> for ConditionStats {
    fn from(t: &Tally) -> Self {
        ConditionStats {
            episodes: t.episodes,
            successes: t.successes,
            success_rate: t.success_rate(),
            avg_reward: t.avg_reward(),
            avg_terms: t.avg_terms(),
            clarification_rate: t.clarification_rate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub policy: String,
    pub episodes: usize,
    pub success_rate: f64,
    pub avg_reward: f64,
    pub avg_terms: f64,
    pub clarification_rate: f64,
    /// Half-width of the 95% normal-approximation interval on `success_rate`.
    pub ci_half_width: f64,
    pub per_condition: BTreeMap<Condition, ConditionStats>,
}

pub fn summarize(policy: &str, episodes: &[EpisodeRecord]) -> EvalResult {
    let mut all = Tally::default();
    let mut by: BTreeMap<Condition, Tally> = BTreeMap::new();
    for e in episodes {
        all.add(e);
        by.entry(e.condition).or_default().add(e);
    }
    let p = all.success_rate();
    let ci = if all.episodes == 0 {
        0.0
    } else {
        Z95 * (p * (1.0 - p) / all.episodes as f64).sqrt()
    };
    EvalResult {
        policy: policy.to_string(),
        episodes: all.episodes,
        success_rate: p,
        avg_reward: all.avg_reward(),
        avg_terms: all.avg_terms(),
        clarification_rate: all.clarification_rate(),
        ci_half_width: ci,
        per_condition: by.iter().map(|(c, t)| (*c, ConditionStats::from(t))).collect(),
    }
}

pub fn evaluate_director(
    director: &dyn Director,
    contexts: &[ColorContext],
    model: &dyn DescriptionModel,
    settings: &EvalSettings,
    execution: Execution,
) -> Result<EvalResult> {
    let episodes = run_episodes(director, contexts, model, settings, execution)?;
    Ok(summarize(&director.name(), &episodes))
}

pub fn evaluate(
    policy: &PolicyKind,
    contexts: &[ColorContext],
    model: &dyn DescriptionModel,
    settings: &EvalSettings,
    execution: Execution,
) -> Result<EvalResult> {
    let director = make_director(policy)?;
    evaluate_director(director.as_ref(), contexts, model, settings, execution)
}
