//! One-parameter sweeps of the matcher profile with paired seeds.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::color::{ColorContext, Condition};
use crate::error::{Error, Result};
use crate::lexicon::DescriptionModel;
use crate::matcher::{MatcherKind, MatcherProfile};
use crate::parallel::Execution;
use crate::policies::PolicyKind;

use super::eval::{evaluate, EvalResult, EvalSettings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepKind {
    /// Select threshold of a clarifying matcher.
    Threshold,
    Tau,
    Alpha,
}

impl SweepKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepKind::Threshold => "threshold",
            SweepKind::Tau => "tau",
            SweepKind::Alpha => "alpha",
        }
    }

    /// `base` with the swept parameter set to `value`.
    pub fn apply(&self, base: &MatcherProfile, value: f64) -> MatcherProfile {
        let mut p = base.clone();
        match self {
            SweepKind::Threshold => {
                p.kind = MatcherKind::Clarifying;
                p.select_threshold = value;
            }
            SweepKind::Tau => p.tau = Some(value),
            SweepKind::Alpha => p.alpha = Some(value),
        }
        p
    }
}

impl fmt::Display for SweepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "threshold" => Ok(SweepKind::Threshold),
            "tau" => Ok(SweepKind::Tau),
            "alpha" => Ok(SweepKind::Alpha),
            other => Err(Error::InvalidConfig(format!("unknown sweep {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub results: Vec<EvalResult>,
}

/// Flat CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub sweep: SweepKind,
    pub value: f64,
    pub policy: String,
    pub episodes: usize,
    pub success_rate: f64,
    pub ci_half_width: f64,
    pub avg_reward: f64,
    pub avg_terms: f64,
    pub clarification_rate: f64,
    pub far_success: f64,
    pub split_success: f64,
    pub close_success: f64,
}

/// Every grid point reuses `settings.seed`, so episodes differ between
/// points only through the swept parameter.
pub fn sweep(
    kind: SweepKind,
    grid: &[f64],
    policies: &[PolicyKind],
    contexts: &[ColorContext],
    model: &dyn DescriptionModel,
    settings: &EvalSettings,
    execution: Execution,
) -> Result<Vec<SweepPoint>> {
    grid.iter()
        .map(|&value| {
            let s = EvalSettings {
                profile: kind.apply(&settings.profile, value),
                ..settings.clone()
            };
            let results = policies
                .iter()
                .map(|p| evaluate(p, contexts, model, &s, execution))
                .collect::<Result<Vec<_>>>()?;
            Ok(SweepPoint { value, results })
        })
        .collect()
}

pub fn sweep_rows(kind: SweepKind, points: &[SweepPoint]) -> Vec<SweepRow> {
    let cond = |r: &EvalResult, c: Condition| r.per_condition.get(&c).map_or(0.0, |s| s.success_rate);
    points
        .iter()
        .flat_map(|pt| {
            pt.results.iter().map(move |r| SweepRow {
                sweep: kind,
                value: pt.value,
                policy: r.policy.clone(),
                episodes: r.episodes,
                success_rate: r.success_rate,
                ci_half_width: r.ci_half_width,
                avg_reward: r.avg_reward,
                avg_terms: r.avg_terms,
                clarification_rate: r.clarification_rate,
                far_success: cond(r, Condition::Far),
                split_success: cond(r, Condition::Split),
                close_success: cond(r, Condition::Close),
            })
        })
        .collect()
}

pub fn write_csv<W: Write, T: Serialize>(w: W, rows: &[T]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Success-rate difference `a - b` at each sweep point.
pub fn gap_series(points: &[SweepPoint], a: &str, b: &str) -> Vec<(f64, f64)> {
    points
        .iter()
        .filter_map(|pt| {
            let find = |id: &str| pt.results.iter().find(|r| r.policy == id);
            Some((pt.value, find(a)?.success_rate - find(b)?.success_rate))
        })
        .collect()
}
