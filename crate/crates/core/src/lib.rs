//! Simulated reference games over color patches: a director describes one of
//! three patches, a noisy matcher picks one, and directors can be handcrafted
//! or learned with DQN.

pub mod coherence;
pub mod color;
pub mod episode;
pub mod error;
pub mod harness;
pub mod lexicon;
pub mod logical_form;
pub mod matcher;
pub mod parallel;
pub mod parser;
pub mod policies;
pub mod rl;

pub use error::{Error, Result};
