//! Coherence graph of attached contributions and the chained referent posterior.
//!
//! Every contribution attaches to the current frontier of the dialogue, so the
//! graph stays a single attachment chain and the posterior is the normalized
//! product of all grounding distributions on it (uniform prior).

use serde::{Deserialize, Serialize};

use crate::color::ColorContext;
use crate::error::{Error, Result};
use crate::lexicon::{normalize3, DescriptionModel};
use crate::logical_form::{Act, LogicalForm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Director,
    Matcher,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::Director => "director",
            Role::Matcher => "matcher",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    Elaboration,
    Contrast,
    QuestionAnswerPair,
    Acknowledge,
}

/// Actions whose occurrence the state remembers. The first six mirror the
/// director alphabet; the last two are the matcher's moves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HistoryFlag {
    DescribeTarget = 0,
    NegateBothDistractors = 1,
    AffirmClarTerm = 2,
    NegateClosestDistractor = 3,
    NegateClarTerm = 4,
    EndTurn = 5,
    Select = 6,
    Clarify = 7,
}

pub const HISTORY_FLAGS: usize = 8;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionHistory(u8);

impl ActionHistory {
    pub fn set(&mut self, flag: HistoryFlag) {
        self.0 |= 1 << flag as u8;
    }

    pub fn has(&self, flag: HistoryFlag) -> bool {
        self.0 & (1 << flag as u8) != 0
    }

    pub fn bit(&self, index: usize) -> bool {
        self.0 & (1 << index) != 0
    }

    pub fn bits(&self) -> u8 {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceNode {
    pub id: usize,
    pub lf: LogicalForm,
    pub speaker: Role,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distribution: Option<[f64; 3]>,
    pub turn_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub child: usize,
    pub parent: usize,
    pub relation: Relation,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CoherenceGraph {
    pub nodes: Vec<UtteranceNode>,
    pub edges: Vec<Edge>,
}

impl CoherenceGraph {
    pub fn parent_of(&self, node: usize) -> Option<(usize, Relation)> {
        self.edges
            .iter()
            .find(|e| e.child == node)
            .map(|e| (e.parent, e.relation))
    }

    /// Node ids from the root down to `leaf`.
    pub fn chain_to(&self, leaf: usize) -> Vec<usize> {
        let mut chain = vec![leaf];
        let mut cur = leaf;
        while let Some((parent, _)) = self.parent_of(cur) {
            chain.push(parent);
            cur = parent;
        }
        chain.reverse();
        chain
    }

    /// Every non-root node has exactly one parent that precedes it.
    pub fn is_tree(&self) -> bool {
        self.nodes.iter().enumerate().all(|(i, n)| {
            let parents: Vec<&Edge> = self.edges.iter().filter(|e| e.child == n.id).collect();
            if i == 0 {
                parents.is_empty()
            } else {
                parents.len() == 1 && parents[0].parent < n.id
            }
        }) && self.edges.iter().all(|e| e.child < self.nodes.len())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DialogueState {
    pub graph: CoherenceGraph,
    pub posterior: [f64; 3],
    context: ColorContext,
    pub term_count: usize,
    pub l_conv: usize,
    /// Who spoke last.
    pub pt: Role,
    /// Whose move it is.
    pub turn: Role,
    pub turn_index: usize,
    pub pending_clarification: Option<LogicalForm>,
    pub action_history: ActionHistory,
    pub clarifications: usize,
    pub closed: bool,
}

impl DialogueState {
    pub fn new(context: ColorContext) -> Self {
        DialogueState {
            graph: CoherenceGraph::default(),
            posterior: [1.0 / 3.0; 3],
            context,
            term_count: 0,
            l_conv: 0,
            pt: Role::Director,
            turn: Role::Director,
            turn_index: 0,
            pending_clarification: None,
            action_history: ActionHistory::default(),
            clarifications: 0,
            closed: false,
        }
    }

    pub fn context(&self) -> &ColorContext {
        &self.context
    }

    /// Grounding distribution a logical form contributes, if any.
    pub fn grounding_distribution<M: DescriptionModel + ?Sized>(
        &self,
        lf: &LogicalForm,
        speaker: Role,
        model: &M,
    ) -> Option<[f64; 3]> {
        if speaker != Role::Director || !lf.is_grounding() {
            return None;
        }
        let negated = matches!(lf.act, Act::NegateDescription | Act::NegateTerm);
        let lexicon = model.lexicon();
        let mut product = [1.0; 3];
        for id in &lf.terms {
            let term = lexicon.get(id)?;
            let l = model.listener(term, self.context(), negated);
            for i in 0..3 {
                product[i] *= l[i];
            }
        }
        Some(normalize3(product))
    }

    /// Attach a contribution and return the updated state.
    pub fn attach<M: DescriptionModel + ?Sized>(
        &self,
        lf: &LogicalForm,
        speaker: Role,
        model: &M,
    ) -> Result<DialogueState> {
        let distribution = self.grounding_distribution(lf, speaker, model);
        self.attach_with_distribution(lf, speaker, distribution)
    }

    /// Attach with an explicitly supplied grounding distribution.
    pub fn attach_with_distribution(
        &self,
        lf: &LogicalForm,
        speaker: Role,
        distribution: Option<[f64; 3]>,
    ) -> Result<DialogueState> {
        if self.closed {
            return Err(Error::DialogueClosed);
        }
        lf.validate()?;
        if speaker != self.turn {
            return Err(Error::WrongTurn {
                expected: self.turn.as_str(),
            });
        }
        if speaker == Role::Director && lf.act.is_answer() && self.pending_clarification.is_none()
        {
            return Err(Error::NoPendingClarification);
        }
        if let Some(d) = distribution {
            let sum: f64 = d.iter().sum();
            if (sum - 1.0).abs() > 1e-9 || d.iter().any(|x| *x < 0.0) {
                return Err(Error::InvalidLogicalForm(format!(
                    "grounding distribution {d:?} is not normalized"
                )));
            }
        }

        let mut next = self.clone();
        let id = next.graph.nodes.len();
        if let Some(parent) = id.checked_sub(1) {
            let relation = match (speaker, lf.act) {
                (_, Act::Select) => Relation::Acknowledge,
                (_, a) if a.is_answer() || a.is_clarification() => Relation::QuestionAnswerPair,
                (Role::Director, Act::NegateDescription) => Relation::Contrast,
                (Role::Director, _) if self.pending_clarification.is_some() => {
                    Relation::QuestionAnswerPair
                }
                _ => Relation::Elaboration,
            };
            next.graph.edges.push(Edge {
                child: id,
                parent,
                relation,
            });
        }
        next.graph.nodes.push(UtteranceNode {
            id,
            lf: lf.clone(),
            speaker,
            distribution,
            turn_index: self.turn_index,
        });

        if let Some(d) = distribution {
            let mut p = next.posterior;
            for i in 0..3 {
                p[i] *= d[i];
            }
            next.posterior = normalize3(p);
        }
        next.l_conv = next.graph.nodes.len();
        next.pt = speaker;
        if speaker == Role::Director && lf.is_grounding() {
            next.term_count += 1;
        }

        match (speaker, lf.act) {
            (Role::Matcher, a) if a.is_clarification() => {
                next.pending_clarification = Some(lf.clone());
                next.clarifications += 1;
                next.action_history.set(HistoryFlag::Clarify);
                next.turn = Role::Director;
                next.turn_index += 1;
            }
            (Role::Matcher, Act::Select) => {
                next.action_history.set(HistoryFlag::Select);
                next.closed = true;
            }
            (Role::Director, a) => {
                let answers_pending = match &self.pending_clarification {
                    Some(p) if p.act == Act::ClarifyTerm => a.is_answer(),
                    Some(_) => lf.is_grounding(),
                    None => false,
                };
                if answers_pending {
                    next.pending_clarification = None;
                }
            }
            _ => {}
        }
        Ok(next)
    }

    /// Director closes its turn; the matcher moves next.
    pub fn end_turn(&self) -> Result<DialogueState> {
        if self.closed {
            return Err(Error::DialogueClosed);
        }
        if self.turn != Role::Director {
            return Err(Error::WrongTurn {
                expected: "director",
            });
        }
        let mut next = self.clone();
        next.action_history.set(HistoryFlag::EndTurn);
        next.turn = Role::Matcher;
        Ok(next)
    }

    pub fn mark(&mut self, flag: HistoryFlag) {
        self.action_history.set(flag);
    }

    /// Recompute the posterior from scratch along the attachment chain ending at the newest node.
    pub fn chain_posterior(&self) -> [f64; 3] {
        let Some(last) = self.graph.nodes.len().checked_sub(1) else {
            return [1.0 / 3.0; 3];
        };
        let factors: Vec<[f64; 3]> = self
            .graph
            .chain_to(last)
            .into_iter()
            .filter_map(|i| self.graph.nodes[i].distribution)
            .collect();
        posterior_of(&factors)
    }

    /// Grounding distributions in attachment order.
    pub fn factors(&self) -> impl Iterator<Item = (usize, [f64; 3])> + '_ {
        self.graph
            .nodes
            .iter()
            .filter_map(|n| n.distribution.map(|d| (n.id, d)))
    }

    /// Terms the director has already used in target descriptions.
    pub fn described_terms(&self) -> Vec<&str> {
        self.graph
            .nodes
            .iter()
            .filter(|n| n.speaker == Role::Director && n.lf.act == Act::Describe)
            .flat_map(|n| n.lf.terms.iter().map(String::as_str))
            .collect()
    }

    /// Nodes the director has contributed during the current turn.
    pub fn director_nodes_this_turn(&self) -> usize {
        self.graph
            .nodes
            .iter()
            .filter(|n| n.speaker == Role::Director && n.turn_index == self.turn_index)
            .count()
    }

    pub fn is_initial_turn(&self) -> bool {
        self.turn_index == 0
    }
}

/// Normalized product of factors under a uniform prior.
pub fn posterior_of(factors: &[[f64; 3]]) -> [f64; 3] {
    let mut p = [1.0 / 3.0; 3];
    for f in factors {
        for i in 0..3 {
            p[i] *= f[i];
        }
        p = normalize3(p);
    }
    p
}

/// Serializable snapshot of a dialogue for external consumers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub graph: CoherenceGraph,
    pub posterior: [f64; 3],
    pub term_count: usize,
    pub l_conv: usize,
    pub pt: Role,
    pub turn: Role,
    pub clarifications: usize,
    pub closed: bool,
}

impl From<&DialogueState> for StateSnapshot {
    fn from(s: &DialogueState) -> Self {
        StateSnapshot {
            graph: s.graph.clone(),
            posterior: s.posterior,
            term_count: s.term_count,
            l_conv: s.l_conv,
            pt: s.pt,
            turn: s.turn,
            clarifications: s.clarifications,
            closed: s.closed,
        }
    }
}
