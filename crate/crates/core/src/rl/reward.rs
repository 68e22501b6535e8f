use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Success,
    Failure,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardParams {
    pub r_success: f64,
    pub r_failure: f64,
    /// Penalty per director description; never positive.
    pub r_term: f64,
    pub gamma: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        RewardParams {
            r_success: 1.0,
            r_failure: -0.8,
            r_term: -0.025,
            gamma: 1.0,
        }
    }
}

impl RewardParams {
    pub fn validate(&self) -> crate::Result<()> {
        if self.r_term > 0.0 {
            return Err(crate::Error::InvalidConfig("r_term must be <= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(crate::Error::InvalidConfig("gamma must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Episode-level reward: `r_outcome + r_term * term_count` at the terminal
/// step, zero before it.
pub fn reward(outcome: Outcome, term_count: usize, params: &RewardParams) -> f64 {
    let r_outcome = match outcome {
        Outcome::Success => params.r_success,
        Outcome::Failure => params.r_failure,
        Outcome::None => return 0.0,
    };
    r_outcome + params.r_term * term_count as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn substitutions() {
        let p = RewardParams::default();
        assert!((reward(Outcome::Success, 2, &p) - 0.95).abs() < 1e-12);
        assert!((reward(Outcome::Failure, 1, &p) + 0.825).abs() < 1e-12);
        assert_eq!(reward(Outcome::Success, 0, &p), 1.0);
        assert_eq!(reward(Outcome::None, 3, &p), 0.0);
    }
}
