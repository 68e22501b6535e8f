//! Expected reward of each policy as a function of the term penalty, from
//! measured success rates and term counts.

use serde::{Deserialize, Serialize};

use crate::rl::reward::RewardParams;

use super::eval::EvalResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyStats {
    pub policy: String,
    pub success_rate: f64,
    pub avg_terms: f64,
}

impl From<&EvalResult> for PolicyStats {
    fn from(r: &EvalResult) -> Self {
        PolicyStats {
            policy: r.policy.clone(),
            success_rate: r.success_rate,
            avg_terms: r.avg_terms,
        }
    }
}

impl PolicyStats {
    /// Expected reward: `s * r_success + (1 - s) * r_failure + r_term * terms`.
    pub fn expected_reward(&self, r_term: f64, rewards: &RewardParams) -> f64 {
        self.intercept(rewards) + self.avg_terms * r_term
    }

    fn intercept(&self, rewards: &RewardParams) -> f64 {
        self.success_rate * rewards.r_success + (1.0 - self.success_rate) * rewards.r_failure
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardSpaceRow {
    pub r_term: f64,
    pub policy: String,
    pub expected_reward: f64,
    pub best: bool,
}

pub fn reward_space(stats: &[PolicyStats], grid: &[f64], rewards: &RewardParams) -> Vec<RewardSpaceRow> {
    let mut rows = Vec::with_capacity(stats.len() * grid.len());
    for &x in grid {
        let values: Vec<f64> = stats.iter().map(|s| s.expected_reward(x, rewards)).collect();
        let top = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (s, v) in stats.iter().zip(values) {
            rows.push(RewardSpaceRow {
                r_term: x,
                policy: s.policy.clone(),
                expected_reward: v,
                best: v == top,
            });
        }
    }
    rows
}

/// Open interval of penalties, within `[lo, hi]`, on which `winner` has a
/// strictly higher expected reward than every rival. Each comparison is
/// linear in the penalty, so the region is an interval or empty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lo < x && x < self.hi
    }

    /// Distance from `x` to the interval (0 inside or on the boundary).
    pub fn distance(&self, x: f64) -> f64 {
        if x < self.lo {
            self.lo - x
        } else if x > self.hi {
            x - self.hi
        } else {
            0.0
        }
    }
}

pub fn dominance_interval(
    winner: &PolicyStats,
    rivals: &[PolicyStats],
    rewards: &RewardParams,
    bounds: (f64, f64),
) -> Option<Interval> {
    let (mut lo, mut hi) = bounds;
    for r in rivals {
        // winner - rival = a + b x > 0
        let a = winner.intercept(rewards) - r.intercept(rewards);
        let b = winner.avg_terms - r.avg_terms;
        if b == 0.0 {
            if a <= 0.0 {
                return None;
            }
        } else if b > 0.0 {
            lo = lo.max(-a / b);
        } else {
            hi = hi.min(-a / b);
        }
    }
    (lo < hi).then_some(Interval { lo, hi })
}
