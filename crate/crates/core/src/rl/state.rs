//! Fixed-length encoding of a dialogue state for the value network.

use crate::coherence::{DialogueState, Role, HISTORY_FLAGS};
use crate::color::distance_features;

pub const STATE_DIM: usize = 17;

/// Layout offsets.
pub const POSTERIOR: usize = 0;
pub const TARGET_MASS: usize = 3;
pub const FLAGS: usize = 4;
pub const DISTANCES: usize = FLAGS + HISTORY_FLAGS;
pub const LENGTH: usize = DISTANCES + 3;
pub const PREVIOUS_SPEAKER: usize = LENGTH + 1;

pub const DISTANCE_SCALE: f64 = 1.0 / 100.0;
pub const LENGTH_SCALE: f64 = 1.0 / 10.0;

pub type StateVector = [f64; STATE_DIM];

/// `[P(x0..2) | P(target) | 8 history flags | d_min, d_max, d_avg | l_conv | pt]`.
/// `pt` is 1 when the matcher spoke last.
pub fn encode_state(state: &DialogueState) -> StateVector {
    let mut v = [0.0; STATE_DIM];
    v[POSTERIOR..POSTERIOR + 3].copy_from_slice(&state.posterior);
    v[TARGET_MASS] = state.posterior[state.context().target()];
    for i in 0..HISTORY_FLAGS {
        v[FLAGS + i] = f64::from(u8::from(state.action_history.bit(i)));
    }
    let d = distance_features(state.context());
    v[DISTANCES] = d.d_min * DISTANCE_SCALE;
    v[DISTANCES + 1] = d.d_max * DISTANCE_SCALE;
    v[DISTANCES + 2] = d.d_avg * DISTANCE_SCALE;
    v[LENGTH] = state.l_conv as f64 * LENGTH_SCALE;
    v[PREVIOUS_SPEAKER] = match state.pt {
        Role::Director => 0.0,
        Role::Matcher => 1.0,
    };
    v
}
