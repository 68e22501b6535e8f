//! Greedy decisions of a learned director right after its first description,
//! over a grid of posterior values.

use serde::{Deserialize, Serialize};

use crate::coherence::HistoryFlag;
use crate::color::{distance_features, ColorContext, DistanceFeatures};
use crate::policies::DirectorAction;
use crate::rl::dqn::masked_argmax;
use crate::rl::network::QNetwork;
use crate::rl::state::{
    StateVector, DISTANCES, DISTANCE_SCALE, FLAGS, LENGTH, LENGTH_SCALE, POSTERIOR, STATE_DIM,
    TARGET_MASS,
};

const SIMPLEX_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub p_target: f64,
    pub p_distractor: f64,
    /// `None` when the two probabilities exceed 1 together.
    pub action: Option<DirectorAction>,
}

/// State after one `DescribeTarget`: target in slot 0, best distractor in
/// slot 1, the remaining mass on slot 2.
pub fn post_description_state(
    p_target: f64,
    p_distractor: f64,
    features: &DistanceFeatures,
) -> Option<StateVector> {
    let rest = 1.0 - p_target - p_distractor;
    if rest < -SIMPLEX_SLACK || p_target < 0.0 || p_distractor < 0.0 {
        return None;
    }
    let mut v = [0.0; STATE_DIM];
    v[POSTERIOR] = p_target;
    v[POSTERIOR + 1] = p_distractor;
    v[POSTERIOR + 2] = rest.max(0.0);
    v[TARGET_MASS] = p_target;
    v[FLAGS + HistoryFlag::DescribeTarget as usize] = 1.0;
    v[DISTANCES] = features.d_min * DISTANCE_SCALE;
    v[DISTANCES + 1] = features.d_max * DISTANCE_SCALE;
    v[DISTANCES + 2] = features.d_avg * DISTANCE_SCALE;
    v[LENGTH] = LENGTH_SCALE;
    Some(v)
}

/// Legal moves after an opening description with nothing pending.
pub const POST_DESCRIPTION_LEGAL: [bool; DirectorAction::COUNT] = [true, true, false, true, false, true];

/// Mean distance features of `contexts`, the default slice through state space.
pub fn mean_features(contexts: &[ColorContext]) -> DistanceFeatures {
    let n = contexts.len().max(1) as f64;
    let mut f = DistanceFeatures {
        d_min: 0.0,
        d_max: 0.0,
        d_avg: 0.0,
    };
    for c in contexts {
        let d = distance_features(c);
        f.d_min += d.d_min / n;
        f.d_max += d.d_max / n;
        f.d_avg += d.d_avg / n;
    }
    f
}

/// `resolution` points per axis spanning `[0, 1]`.
pub fn policy_grid(network: &QNetwork, resolution: usize, features: &DistanceFeatures) -> Vec<GridCell> {
    let steps = resolution.max(2) - 1;
    let mut cells = Vec::with_capacity(resolution * resolution);
    for i in 0..=steps {
        for j in 0..=steps {
            let (pt, pd) = (i as f64 / steps as f64, j as f64 / steps as f64);
            cells.push(grid_cell(network, pt, pd, features));
        }
    }
    cells
}

pub fn grid_cell(network: &QNetwork, p_target: f64, p_distractor: f64, features: &DistanceFeatures) -> GridCell {
    let action = post_description_state(p_target, p_distractor, features).map(|s| {
        let q = network.forward(&s);
        DirectorAction::ALL[masked_argmax(&q, &POST_DESCRIPTION_LEGAL)]
    });
    GridCell {
        p_target,
        p_distractor,
        action,
    }
}

/// Best single cut `t` for the rule "EndTurn iff P(target) >= t".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdFit {
    pub threshold: f64,
    /// Fraction of feasible cells the rule classifies correctly.
    pub agreement: f64,
}

pub fn fit_end_turn_threshold(cells: &[GridCell]) -> Option<ThresholdFit> {
    let mut pts: Vec<(f64, bool)> = cells
        .iter()
        .filter_map(|c| c.action.map(|a| (c.p_target, a == DirectorAction::EndTurn)))
        .collect();
    if pts.is_empty() {
        return None;
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = pts.len();
    let total_end = pts.iter().filter(|p| p.1).count();
    // Candidate cut before index k: everything from k on is predicted EndTurn.
    let mut best = (usize::MAX, 0.0);
    let mut ends_below = 0;
    let mut k = 0;
    while k <= n {
        let cut = if k == n { 1.0 + 1e-9 } else { pts[k].0 };
        let non_end_above = (n - k) - (total_end - ends_below);
        let errors = ends_below + non_end_above;
        if errors < best.0 {
            best = (errors, cut);
        }
        if k == n {
            break;
        }
        // Advance past every point sharing this target value.
        let v = pts[k].0;
        while k < n && pts[k].0 == v {
            ends_below += usize::from(pts[k].1);
            k += 1;
        }
    }
    Some(ThresholdFit {
        threshold: best.1,
        agreement: 1.0 - best.0 as f64 / n as f64,
    })
}
