//! Bisection on the clarifying matcher's select threshold to hit a target
//! clarification rate.

use serde::{Deserialize, Serialize};

use crate::color::ColorContext;
use crate::episode::Director;
use crate::error::{Error, Result};
use crate::lexicon::DescriptionModel;
use crate::matcher::MatcherKind;
use crate::parallel::Execution;

use super::config::CalibrationConfig;
use super::eval::{evaluate_director, EvalResult, EvalSettings};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub threshold: f64,
    pub clarification_rate: f64,
    pub iterations: usize,
    pub result: EvalResult,
}

/// The clarification rate rises with the threshold, so bisection applies.
/// Stops once the rate is within half the tolerance of the target, and fails
/// if the best point found is still outside the tolerance.
pub fn calibrate_threshold(
    director: &dyn Director,
    contexts: &[ColorContext],
    model: &dyn DescriptionModel,
    settings: &EvalSettings,
    config: &CalibrationConfig,
    execution: Execution,
) -> Result<Calibration> {
    let run = |t: f64| {
        let mut s = settings.clone();
        s.profile.kind = MatcherKind::Clarifying;
        s.profile.select_threshold = t;
        evaluate_director(director, contexts, model, &s, execution)
    };
    let (mut lo, mut hi) = (config.lo, config.hi);
    let mut best: Option<Calibration> = None;
    for it in 1..=config.max_iterations {
        let mid = 0.5 * (lo + hi);
        let result = run(mid)?;
        let rate = result.clarification_rate;
        let miss = (rate - config.target_rate).abs();
        if best
            .as_ref()
            .is_none_or(|b| miss < (b.clarification_rate - config.target_rate).abs())
        {
            best = Some(Calibration {
                threshold: mid,
                clarification_rate: rate,
                iterations: it,
                result,
            });
        }
        if miss <= 0.5 * config.tolerance {
            break;
        }
        if rate < config.target_rate {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let best = best.ok_or_else(|| Error::Calibration("no iterations run".into()))?;
    if (best.clarification_rate - config.target_rate).abs() > config.tolerance {
        return Err(Error::Calibration(format!(
            "closest rate {:.4} at threshold {:.4} misses target {} by more than {}",
            best.clarification_rate, best.threshold, config.target_rate, config.tolerance
        )));
    }
    Ok(best)
}
