use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use refcomm::coherence::{CoherenceGraph, DialogueState, Role};
use refcomm::color::{ColorContext, Condition};
use refcomm::episode::{play_director_turn, Director};
use refcomm::lexicon::Lexicon;
use refcomm::logical_form::{Act, LogicalForm};
use refcomm::parser::{realize, Parser};
use refcomm::policies::PolicyKind;
use refcomm::rl::reward::{reward, Outcome, RewardParams};

use crate::error::ApiError;

/// Phrasings the 422 response offers when an utterance does not parse.
pub const EXAMPLE_PHRASINGS: [&str; 4] = [
    "is it the teal one?",
    "is it the first one?",
    "do you mean the dark blue one?",
    "i pick the second one",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    AwaitingMatcher,
    AwaitingDirector,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub speaker: Role,
    pub text: String,
    pub lf: LogicalForm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchView {
    pub index: usize,
    pub hex: String,
    pub rgb: [f64; 3],
}

/// What clients see. Target, posterior and graph (whose nodes carry
/// referent distributions) appear only once the session is closed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub policy: String,
    pub condition: Condition,
    pub status: Status,
    pub patches: Vec<PatchView>,
    pub transcript: Vec<Utterance>,
    pub term_count: usize,
    pub clarifications: usize,
    pub turn_index: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outcome: Option<Outcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reward: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub posterior: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub graph: Option<CoherenceGraph>,
}

/// A matcher move: free text or a patch index.
#[derive(Debug, Clone, Default, Deserialize)]
pub struct MatcherInput {
    pub utterance: Option<String>,
    pub select: Option<usize>,
}

pub struct Session {
    id: String,
    policy: PolicyKind,
    director: Box<dyn Director>,
    state: DialogueState,
    transcript: Vec<Utterance>,
    outcome: Option<(Outcome, f64)>,
}

fn director_utterances(
    director: &dyn Director,
    state: DialogueState,
    lexicon: &Lexicon,
) -> Result<(DialogueState, Vec<Utterance>), ApiError> {
    let mut entries = Vec::new();
    let state = play_director_turn(director, state, lexicon, &mut entries)?;
    let said = entries
        .into_iter()
        .filter(|e| e.lf.act != Act::EndTurn)
        .map(|e| Utterance {
            speaker: Role::Director,
            text: realize(&e.lf, lexicon),
            lf: e.lf,
        })
        .collect();
    Ok((state, said))
}

impl Session {
    /// Open a session and play the director's opening turn.
    pub fn start(
        id: String,
        policy: PolicyKind,
        director: Box<dyn Director>,
        context: ColorContext,
        lexicon: &Lexicon,
    ) -> Result<Session, ApiError> {
        let (state, transcript) = director_utterances(director.as_ref(), DialogueState::new(context), lexicon)?;
        Ok(Session {
            id,
            policy,
            director,
            state,
            transcript,
            outcome: None,
        })
    }

    pub fn status(&self) -> Status {
        if self.state.closed {
            Status::Closed
        } else if self.state.turn == Role::Matcher {
            Status::AwaitingMatcher
        } else {
            Status::AwaitingDirector
        }
    }

    pub fn view(&self) -> SessionView {
        let ctx = self.state.context();
        let closed = self.state.closed;
        SessionView {
            id: self.id.clone(),
            policy: self.policy.id(),
            condition: ctx.condition(),
            status: self.status(),
            patches: ctx
                .patches()
                .iter()
                .enumerate()
                .map(|(index, c)| PatchView {
                    index,
                    hex: c.hex(),
                    rgb: c.rgb(),
                })
                .collect(),
            transcript: self.transcript.clone(),
            term_count: self.state.term_count,
            clarifications: self.state.clarifications,
            turn_index: self.state.turn_index,
            outcome: self.outcome.map(|o| o.0),
            reward: self.outcome.map(|o| o.1),
            target: closed.then(|| ctx.target()),
            posterior: closed.then_some(self.state.posterior),
            graph: closed.then(|| self.state.graph.clone()),
        }
    }

    /// Apply a human matcher move. Human input is taken literally: no
    /// semantic or selection noise is applied.
    pub fn matcher_move(
        &mut self,
        input: &MatcherInput,
        parser: &Parser,
        lexicon: &Lexicon,
        rewards: &RewardParams,
    ) -> Result<(), ApiError> {
        if self.status() != Status::AwaitingMatcher {
            return Err(ApiError::Conflict(format!(
                "session is {:?}, not awaiting the matcher",
                self.status()
            )));
        }
        let (lf, text) = match (input.select, &input.utterance) {
            (Some(i), None) => {
                if i > 2 {
                    return Err(ApiError::BadRequest(format!("patch index {i} out of range")));
                }
                let lf = LogicalForm::select(i);
                let text = realize(&lf, lexicon);
                (lf, text)
            }
            (None, Some(text)) => {
                let lf = parser
                    .parse(text)
                    .into_iter()
                    .map(|p| p.lf)
                    .find(|lf| matches!(lf.act, Act::ClarifyTerm | Act::ClarifyPatch | Act::Select))
                    .ok_or_else(|| ApiError::Unparseable {
                        utterance: text.clone(),
                    })?;
                (lf, text.clone())
            }
            _ => {
                return Err(ApiError::BadRequest(
                    "send exactly one of \"utterance\" or \"select\"".into(),
                ))
            }
        };
        let state = self.state.attach(&lf, Role::Matcher, lexicon)?;
        self.transcript.push(Utterance {
            speaker: Role::Matcher,
            text,
            lf: lf.clone(),
        });
        if let (Act::Select, Some(selected)) = (lf.act, lf.patch_ref) {
            let outcome = if selected == state.context().target() {
                Outcome::Success
            } else {
                Outcome::Failure
            };
            self.outcome = Some((outcome, reward(outcome, state.term_count, rewards)));
            self.state = state;
            return Ok(());
        }
        let (state, said) = director_utterances(self.director.as_ref(), state, lexicon)?;
        self.state = state;
        self.transcript.extend(said);
        Ok(())
    }
}

struct Slot {
    session: Arc<Mutex<Session>>,
    last_access: Instant,
}

/// In-memory sessions with idle-time eviction. Each session has its own
/// lock, so moves on one session are serialized and different sessions do
/// not contend beyond the map lookup.
pub struct SessionStore {
    slots: Mutex<HashMap<String, Slot>>,
    ttl: Duration,
}

impl SessionStore {
    pub fn new(ttl: Duration) -> Self {
        SessionStore {
            slots: Mutex::new(HashMap::new()),
            ttl,
        }
    }

    pub fn ttl(&self) -> Duration {
        self.ttl
    }

    pub fn insert(&self, session: Session, now: Instant) -> Arc<Mutex<Session>> {
        let id = session.id.clone();
        let session = Arc::new(Mutex::new(session));
        self.slots.lock().expect("store lock").insert(
            id,
            Slot {
                session: session.clone(),
                last_access: now,
            },
        );
        session
    }

    /// Look up a live session and refresh its idle timer.
    pub fn get(&self, id: &str, now: Instant) -> Option<Arc<Mutex<Session>>> {
        let mut slots = self.slots.lock().expect("store lock");
        let slot = slots.get_mut(id)?;
        if now.saturating_duration_since(slot.last_access) > self.ttl {
            slots.remove(id);
            return None;
        }
        slot.last_access = now;
        Some(slot.session.clone())
    }

    /// Drop sessions idle for longer than the TTL; returns how many.
    pub fn evict_expired(&self, now: Instant) -> usize {
        let mut slots = self.slots.lock().expect("store lock");
        let before = slots.len();
        slots.retain(|_, s| now.saturating_duration_since(s.last_access) <= self.ttl);
        before - slots.len()
    }

    pub fn len(&self) -> usize {
        self.slots.lock().expect("store lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
