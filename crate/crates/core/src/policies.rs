//! Director action alphabet, the handcrafted baselines and the shared
//! clarification-answering rule.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::coherence::{DialogueState, HistoryFlag, Role};
use crate::color::Condition;
use crate::error::{Error, Result};
use crate::lexicon::{argmax, DescriptionModel};
use crate::logical_form::{Act, LogicalForm};

/// Director actions that may be taken in one turn before `EndTurn` is forced.
pub const MAX_TURN_ACTIONS: usize = 4;

/// Target-mass threshold above which a clarification term is affirmed.
pub const AFFIRM_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DirectorAction {
    DescribeTarget,
    NegateBothDistractors,
    AffirmClarTerm,
    NegateClosestDistractor,
    NegateClarTerm,
    EndTurn,
}

impl DirectorAction {
    pub const ALL: [DirectorAction; 6] = [
        DirectorAction::DescribeTarget,
        DirectorAction::NegateBothDistractors,
        DirectorAction::AffirmClarTerm,
        DirectorAction::NegateClosestDistractor,
        DirectorAction::NegateClarTerm,
        DirectorAction::EndTurn,
    ];

    pub const COUNT: usize = 6;

    pub fn index(&self) -> usize {
        *self as usize
    }

    pub fn from_index(i: usize) -> Option<DirectorAction> {
        DirectorAction::ALL.get(i).copied()
    }

    pub fn name(&self) -> &'static str {
        match self {
            DirectorAction::DescribeTarget => "DescribeTarget",
            DirectorAction::NegateBothDistractors => "NegateBothDistractors",
            DirectorAction::AffirmClarTerm => "AffirmClarTerm",
            DirectorAction::NegateClosestDistractor => "NegateClosestDistractor",
            DirectorAction::NegateClarTerm => "NegateClarTerm",
            DirectorAction::EndTurn => "EndTurn",
        }
    }

    fn flag(&self) -> HistoryFlag {
        match self {
            DirectorAction::DescribeTarget => HistoryFlag::DescribeTarget,
            DirectorAction::NegateBothDistractors => HistoryFlag::NegateBothDistractors,
            DirectorAction::AffirmClarTerm => HistoryFlag::AffirmClarTerm,
            DirectorAction::NegateClosestDistractor => HistoryFlag::NegateClosestDistractor,
            DirectorAction::NegateClarTerm => HistoryFlag::NegateClarTerm,
            DirectorAction::EndTurn => HistoryFlag::EndTurn,
        }
    }

    pub fn is_description(&self) -> bool {
        !matches!(self, DirectorAction::EndTurn)
    }
}

impl fmt::Display for DirectorAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Direct,
    Extended,
    Mixed,
    /// Greedy DQN policy loaded from the weight artifact at this path.
    Learned(String),
}

impl PolicyKind {
    pub fn id(&self) -> String {
        match self {
            PolicyKind::Direct => "direct".into(),
            PolicyKind::Extended => "extended".into(),
            PolicyKind::Mixed => "mixed".into(),
            PolicyKind::Learned(path) => format!("dqn:{path}"),
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(PolicyKind::Direct),
            "extended" => Ok(PolicyKind::Extended),
            "mixed" => Ok(PolicyKind::Mixed),
            _ => match s.strip_prefix("dqn:") {
                Some(path) if !path.is_empty() => Ok(PolicyKind::Learned(path.to_string())),
                _ => Err(Error::InvalidConfig(format!("unknown policy {s:?}"))),
            },
        }
    }
}

/// The truthful answer to the pending clarification, if one is pending.
pub fn clarification_answer<M: DescriptionModel + ?Sized>(
    state: &DialogueState,
    model: &M,
) -> Option<DirectorAction> {
    let pending = state.pending_clarification.as_ref()?;
    let ctx = state.context();
    match pending.act {
        Act::ClarifyPatch => {
            if pending.patch_ref == Some(ctx.target()) {
                Some(DirectorAction::AffirmClarTerm)
            } else {
                Some(DirectorAction::NegateClosestDistractor)
            }
        }
        _ => {
            let term = pending
                .terms
                .first()
                .and_then(|id| model.lexicon().get(id))?;
            let listener = model.listener(term, ctx, false);
            let mut combined = state.posterior;
            for i in 0..3 {
                combined[i] *= listener[i];
            }
            let combined = crate::lexicon::normalize3(combined);
            if combined[ctx.target()] > AFFIRM_THRESHOLD {
                Some(DirectorAction::AffirmClarTerm)
            } else {
                Some(DirectorAction::NegateClarTerm)
            }
        }
    }
}

/// Which director actions may be taken now.
pub fn legal_actions<M: DescriptionModel + ?Sized>(
    state: &DialogueState,
    model: &M,
) -> [bool; DirectorAction::COUNT] {
    let mut legal = [false; DirectorAction::COUNT];
    if state.closed || state.turn != Role::Director {
        return legal;
    }
    let answer = clarification_answer(state, model);
    let pending_term = state
        .pending_clarification
        .as_ref()
        .is_some_and(|p| p.act == Act::ClarifyTerm);
    if state.director_nodes_this_turn() >= MAX_TURN_ACTIONS {
        legal[DirectorAction::EndTurn.index()] = true;
        return legal;
    }
    legal[DirectorAction::DescribeTarget.index()] = true;
    legal[DirectorAction::NegateBothDistractors.index()] = true;
    legal[DirectorAction::NegateClosestDistractor.index()] = true;
    match answer {
        Some(DirectorAction::AffirmClarTerm) => legal[DirectorAction::AffirmClarTerm.index()] = true,
        Some(DirectorAction::NegateClarTerm) => legal[DirectorAction::NegateClarTerm.index()] = true,
        _ => {}
    }
    // A pending term question must be answered before the turn can end.
    legal[DirectorAction::EndTurn.index()] = !pending_term;
    legal
}

fn best_unused_target_term<M: DescriptionModel + ?Sized>(
    state: &DialogueState,
    model: &M,
) -> String {
    let ctx = state.context();
    let used = state.described_terms();
    let mut scores = model.speaker(ctx.target(), ctx);
    let terms = model.lexicon().terms();
    if used.len() < terms.len() {
        for (i, t) in terms.iter().enumerate() {
            if used.contains(&t.id.as_str()) {
                scores[i] = f64::NEG_INFINITY;
            }
        }
    }
    terms[argmax(&scores)].id.clone()
}

fn best_term_for_patch<M: DescriptionModel + ?Sized>(
    state: &DialogueState,
    patch: usize,
    model: &M,
) -> String {
    let scores = model.speaker(patch, state.context());
    model.lexicon().terms()[argmax(&scores)].id.clone()
}

fn term_covering_distractors<M: DescriptionModel + ?Sized>(
    state: &DialogueState,
    model: &M,
) -> String {
    let ctx = state.context();
    let [a, b] = ctx.distractors().map(|i| ctx.patches()[i]);
    let scores: Vec<f64> = model
        .lexicon()
        .terms()
        .iter()
        .map(|t| model.applicability(t, &a).min(model.applicability(t, &b)))
        .collect();
    model.lexicon().terms()[argmax(&scores)].id.clone()
}

/// The logical form an action would produce in `state`.
pub fn action_logical_form<M: DescriptionModel + ?Sized>(
    action: DirectorAction,
    state: &DialogueState,
    model: &M,
) -> Result<LogicalForm> {
    let illegal = || Error::IllegalAction {
        action: action.name(),
    };
    let ctx = state.context();
    Ok(match action {
        DirectorAction::DescribeTarget => LogicalForm::describe(best_unused_target_term(state, model)),
        DirectorAction::NegateBothDistractors => {
            LogicalForm::negate_description(term_covering_distractors(state, model))
        }
        DirectorAction::NegateClosestDistractor => {
            LogicalForm::negate_description(best_term_for_patch(state, ctx.closest_distractor(), model))
        }
        DirectorAction::AffirmClarTerm | DirectorAction::NegateClarTerm => {
            let pending = state.pending_clarification.as_ref().ok_or_else(illegal)?;
            match (action, pending.act) {
                (DirectorAction::AffirmClarTerm, Act::ClarifyPatch) => {
                    LogicalForm::affirm_term(best_term_for_patch(state, ctx.target(), model))
                }
                (_, Act::ClarifyPatch) => return Err(illegal()),
                (DirectorAction::AffirmClarTerm, _) => {
                    LogicalForm::affirm_term(pending.terms.first().ok_or_else(illegal)?.clone())
                }
                _ => LogicalForm::negate_term(pending.terms.first().ok_or_else(illegal)?.clone()),
            }
        }
        DirectorAction::EndTurn => LogicalForm::end_turn(),
    })
}

/// Perform one director action, attaching its contribution to the dialogue.
pub fn execute_action<M: DescriptionModel + ?Sized>(
    action: DirectorAction,
    state: &DialogueState,
    model: &M,
) -> Result<(LogicalForm, DialogueState)> {
    if !legal_actions(state, model)[action.index()] {
        return Err(Error::IllegalAction {
            action: action.name(),
        });
    }
    let lf = action_logical_form(action, state, model)?;
    let mut next = if action == DirectorAction::EndTurn {
        state.end_turn()?
    } else {
        state.attach(&lf, Role::Director, model)?
    };
    next.mark(action.flag());
    Ok((lf, next))
}

/// The full action sequence a handcrafted baseline plays in the current turn.
pub fn baseline_turn<M: DescriptionModel + ?Sized>(
    policy: &PolicyKind,
    state: &DialogueState,
    model: &M,
) -> Result<Vec<DirectorAction>> {
    use DirectorAction::*;
    if state.closed || state.turn != Role::Director {
        return Err(Error::WrongTurn {
            expected: "director",
        });
    }
    if state.pending_clarification.is_some() {
        let answer = clarification_answer(state, model).expect("pending clarification");
        return Ok(vec![answer, EndTurn]);
    }
    let extended = match policy {
        PolicyKind::Direct => false,
        PolicyKind::Extended => true,
        PolicyKind::Mixed => state.context().condition() == Condition::Close,
        PolicyKind::Learned(_) => {
            return Err(Error::InvalidConfig(
                "learned policies do not have a fixed turn plan".into(),
            ))
        }
    };
    Ok(if extended {
        vec![DescribeTarget, NegateBothDistractors, EndTurn]
    } else {
        vec![DescribeTarget, EndTurn]
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policy_ids_roundtrip() {
        for p in ["direct", "extended", "mixed", "dqn:/tmp/w.json"] {
            assert_eq!(p.parse::<PolicyKind>().unwrap().id(), p);
        }
        assert!("dqn:".parse::<PolicyKind>().is_err());
        assert!("greedy".parse::<PolicyKind>().is_err());
    }

    #[test]
    fn action_indices() {
        for (i, a) in DirectorAction::ALL.iter().enumerate() {
            assert_eq!(a.index(), i);
            assert_eq!(DirectorAction::from_index(i), Some(*a));
        }
    }
}
