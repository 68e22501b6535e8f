//! One director/matcher dialogue from an empty state to the matcher's selection.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::coherence::{DialogueState, Role};
use crate::color::{ColorContext, Condition};
use crate::error::{Error, Result};
use crate::lexicon::DescriptionModel;
use crate::logical_form::LogicalForm;
use crate::matcher::{Matcher, MatcherAction, MatcherProfile};
use crate::policies::{baseline_turn, legal_actions, DirectorAction, PolicyKind};
use crate::rl::reward::{reward, Outcome, RewardParams};

/// Anything that can play the director role.
pub trait Director: Send + Sync {
    fn name(&self) -> String;

    /// The next action, given the state when the turn began, the current state and
    /// the actions already played in this turn.
    fn next_action(
        &self,
        turn_start: &DialogueState,
        current: &DialogueState,
        taken: &[DirectorAction],
        model: &dyn DescriptionModel,
    ) -> Result<DirectorAction>;
}

/// A handcrafted baseline director.
#[derive(Debug, Clone)]
pub struct Baseline(pub PolicyKind);

impl Director for Baseline {
    fn name(&self) -> String {
        self.0.id()
    }

    fn next_action(
        &self,
        turn_start: &DialogueState,
        _current: &DialogueState,
        taken: &[DirectorAction],
        model: &dyn DescriptionModel,
    ) -> Result<DirectorAction> {
        let plan = baseline_turn(&self.0, turn_start, model)?;
        Ok(plan.get(taken.len()).copied().unwrap_or(DirectorAction::EndTurn))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub speaker: Role,
    pub lf: LogicalForm,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub action: Option<DirectorAction>,
    pub turn_index: usize,
    /// Director-side posterior after the contribution.
    pub posterior: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub condition: Condition,
    pub target: usize,
    pub selected: usize,
    pub success: bool,
    pub reward: f64,
    pub term_count: usize,
    pub clarifications: usize,
    pub transcript: Vec<TranscriptEntry>,
}

impl EpisodeRecord {
    /// Director descriptions in the opening turn.
    pub fn opening_descriptions(&self) -> usize {
        self.transcript
            .iter()
            .filter(|e| {
                e.speaker == Role::Director
                    && e.turn_index == 0
                    && e.action.is_some_and(|a| a.is_description())
            })
            .count()
    }

    /// True when every matcher clarification got a director answer.
    pub fn all_clarifications_answered(&self) -> bool {
        self.transcript.iter().enumerate().all(|(i, e)| {
            if !(e.speaker == Role::Matcher && e.lf.act.is_clarification()) {
                return true;
            }
            self.transcript[i + 1..]
                .iter()
                .take_while(|n| n.speaker == Role::Director)
                .any(|n| n.lf.is_grounding())
        })
    }
}

/// Play one director turn to its `EndTurn`, appending to `transcript`.
pub fn play_director_turn(
    director: &dyn Director,
    state: DialogueState,
    model: &dyn DescriptionModel,
    transcript: &mut Vec<TranscriptEntry>,
) -> Result<DialogueState> {
    let turn_start = state.clone();
    let mut state = state;
    let mut taken = Vec::new();
    loop {
        let legal = legal_actions(&state, model);
        let mut action = director.next_action(&turn_start, &state, &taken, model)?;
        if !legal[action.index()] {
            if legal[DirectorAction::EndTurn.index()] && legal.iter().filter(|l| **l).count() == 1 {
                action = DirectorAction::EndTurn;
            } else {
                return Err(Error::IllegalAction {
                    action: action.name(),
                });
            }
        }
        let (lf, next) = crate::policies::execute_action(action, &state, model)?;
        transcript.push(TranscriptEntry {
            speaker: Role::Director,
            lf,
            action: Some(action),
            turn_index: state.turn_index,
            posterior: next.posterior,
        });
        taken.push(action);
        state = next;
        if action == DirectorAction::EndTurn {
            return Ok(state);
        }
    }
}

pub fn run_episode<R: Rng + ?Sized>(
    director: &dyn Director,
    profile: &MatcherProfile,
    context: &ColorContext,
    model: &dyn DescriptionModel,
    rewards: &RewardParams,
    rng: &mut R,
) -> Result<EpisodeRecord> {
    let mut state = DialogueState::new(context.clone());
    let mut matcher = Matcher::new(profile.clone());
    let mut transcript = Vec::new();
    loop {
        state = play_director_turn(director, state, model, &mut transcript)?;
        let action = matcher.step(&state, model, rng)?;
        let lf = action.to_logical_form();
        let turn_index = state.turn_index;
        state = state.attach(&lf, Role::Matcher, model)?;
        transcript.push(TranscriptEntry {
            speaker: Role::Matcher,
            lf,
            action: None,
            turn_index,
            posterior: state.posterior,
        });
        if let MatcherAction::Select(selected) = action {
            let success = selected == context.target();
            let outcome = if success {
                Outcome::Success
            } else {
                Outcome::Failure
            };
            return Ok(EpisodeRecord {
                condition: context.condition(),
                target: context.target(),
                selected,
                success,
                reward: reward(outcome, state.term_count, rewards),
                term_count: state.term_count,
                clarifications: state.clarifications,
                transcript,
            });
        }
    }
}
