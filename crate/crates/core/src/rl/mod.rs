//! Value-based director learning.

pub mod adam;
pub mod dqn;
pub mod network;
pub mod replay;
pub mod reward;
pub mod state;
pub mod weights;

pub use dqn::{train, td_delta, DqnLearner, LearnedDirector, TrainConfig, TrainLogRow, TrainOutcome};
pub use network::QNetwork;
pub use replay::{ReplayMemory, Transition};
pub use reward::{reward, Outcome, RewardParams};
pub use state::{encode_state, StateVector, STATE_DIM};
pub use weights::{load_network, WeightFile};
