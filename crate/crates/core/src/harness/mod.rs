//! Experiment drivers: evaluation, sweeps and the analyses built on them.

pub mod calibrate;
pub mod config;
pub mod eval;
pub mod grid;
pub mod manifest;
pub mod reward_space;
pub mod sweep;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::color::{balanced_counts, generate_mixed, ColorContext};
use crate::error::Result;
use crate::lexicon::Lexicon;
use crate::parallel::Execution;
use crate::parser::{Grammar, Parser};

pub use calibrate::{calibrate_threshold, Calibration};
pub use config::{CalibrationConfig, ExperimentConfig, Seeds, SweepGrids};
pub use eval::{evaluate, evaluate_director, run_episodes, summarize, EvalResult, EvalSettings};
pub use manifest::Manifest;

/// Balanced train and test sets. Each set has its own random stream, so the
/// test set does not depend on the number of training contexts.
pub fn generate_splits(config: &ExperimentConfig) -> Result<(Vec<ColorContext>, Vec<ColorContext>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seeds.contexts);
    rng.set_stream(0);
    let train = generate_mixed(balanced_counts(config.train_contexts), &config.generation, &mut rng)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seeds.contexts);
    rng.set_stream(1);
    let test = generate_mixed(balanced_counts(config.test_contexts), &config.generation, &mut rng)?;
    Ok((train, test))
}

pub fn load_lexicon(config: &ExperimentConfig) -> Result<Lexicon> {
    match &config.lexicon {
        Some(path) => Lexicon::load(path),
        None => Ok(Lexicon::default()),
    }
}

pub fn load_parser(config: &ExperimentConfig, lexicon: &Lexicon) -> Result<Parser> {
    let grammar = match &config.grammar {
        Some(path) => Grammar::load(path)?,
        None => Grammar::default(),
    };
    Parser::new(grammar, lexicon)
}

pub fn execution(config: &ExperimentConfig) -> Execution {
    if config.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    }
}

pub fn eval_settings(config: &ExperimentConfig) -> EvalSettings {
    EvalSettings {
        profile: config.matcher.clone(),
        rewards: config.rewards,
        seed: config.seeds.eval,
        replicates: config.replicates,
    }
}
