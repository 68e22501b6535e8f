use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Act {
    Describe,
    NegateDescription,
    AffirmTerm,
    NegateTerm,
    ClarifyTerm,
    ClarifyPatch,
    Select,
    EndTurn,
}

impl Act {
    pub const ALL: [Act; 8] = [
        Act::Describe,
        Act::NegateDescription,
        Act::AffirmTerm,
        Act::NegateTerm,
        Act::ClarifyTerm,
        Act::ClarifyPatch,
        Act::Select,
        Act::EndTurn,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Act::Describe => "Describe",
            Act::NegateDescription => "NegateDescription",
            Act::AffirmTerm => "AffirmTerm",
            Act::NegateTerm => "NegateTerm",
            Act::ClarifyTerm => "ClarifyTerm",
            Act::ClarifyPatch => "ClarifyPatch",
            Act::Select => "Select",
            Act::EndTurn => "EndTurn",
        }
    }

    pub fn from_name(name: &str) -> Option<Act> {
        Act::ALL.into_iter().find(|a| a.name() == name)
    }

    pub fn polarity(&self) -> Polarity {
        match self {
            Act::NegateDescription | Act::NegateTerm => Polarity::Negative,
            _ => Polarity::Positive,
        }
    }

    /// Acts a matcher uses to ask about a referent, and the director's answers to them.
    pub fn is_clarification_class(&self) -> bool {
        matches!(
            self,
            Act::ClarifyTerm | Act::ClarifyPatch | Act::AffirmTerm | Act::NegateTerm
        )
    }

    pub fn is_answer(&self) -> bool {
        matches!(self, Act::AffirmTerm | Act::NegateTerm)
    }

    pub fn is_clarification(&self) -> bool {
        matches!(self, Act::ClarifyTerm | Act::ClarifyPatch)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

/// Structured meaning of one dialogue contribution.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LogicalForm {
    pub act: Act,
    /// Lexicon term ids.
    #[serde(default)]
    pub terms: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patch_ref: Option<usize>,
    pub polarity: Polarity,
}

impl LogicalForm {
    fn with_terms(act: Act, terms: Vec<String>) -> Self {
        LogicalForm {
            act,
            terms,
            patch_ref: None,
            polarity: act.polarity(),
        }
    }

    fn with_patch(act: Act, patch: usize) -> Self {
        LogicalForm {
            act,
            terms: Vec::new(),
            patch_ref: Some(patch),
            polarity: act.polarity(),
        }
    }

    pub fn describe(term: impl Into<String>) -> Self {
        Self::with_terms(Act::Describe, vec![term.into()])
    }

    pub fn negate_description(term: impl Into<String>) -> Self {
        Self::with_terms(Act::NegateDescription, vec![term.into()])
    }

    pub fn affirm_term(term: impl Into<String>) -> Self {
        Self::with_terms(Act::AffirmTerm, vec![term.into()])
    }

    pub fn negate_term(term: impl Into<String>) -> Self {
        Self::with_terms(Act::NegateTerm, vec![term.into()])
    }

    pub fn clarify_term(term: impl Into<String>) -> Self {
        Self::with_terms(Act::ClarifyTerm, vec![term.into()])
    }

    pub fn clarify_patch(patch: usize) -> Self {
        Self::with_patch(Act::ClarifyPatch, patch)
    }

    pub fn select(patch: usize) -> Self {
        Self::with_patch(Act::Select, patch)
    }

    pub fn end_turn() -> Self {
        Self::with_terms(Act::EndTurn, Vec::new())
    }

    /// Build from parts, checking the per-act invariants.
    pub fn new(act: Act, terms: Vec<String>, patch_ref: Option<usize>) -> Result<Self> {
        let lf = LogicalForm {
            act,
            terms,
            patch_ref,
            polarity: act.polarity(),
        };
        lf.validate()?;
        Ok(lf)
    }

    pub fn validate(&self) -> Result<()> {
        let needs_terms = matches!(
            self.act,
            Act::Describe
                | Act::NegateDescription
                | Act::AffirmTerm
                | Act::NegateTerm
                | Act::ClarifyTerm
        );
        if needs_terms && self.terms.is_empty() {
            return Err(Error::InvalidLogicalForm(format!(
                "{} needs at least one term",
                self.act.name()
            )));
        }
        let needs_patch = matches!(self.act, Act::Select | Act::ClarifyPatch);
        match (needs_patch, self.patch_ref) {
            (true, None) => {
                return Err(Error::InvalidLogicalForm(format!(
                    "{} needs a patch reference",
                    self.act.name()
                )))
            }
            (true, Some(p)) if p > 2 => {
                return Err(Error::InvalidLogicalForm(format!("patch index {p} out of range")))
            }
            _ => {}
        }
        if self.polarity != self.act.polarity() {
            return Err(Error::InvalidLogicalForm(format!(
                "{} cannot carry {:?} polarity",
                self.act.name(),
                self.polarity
            )));
        }
        Ok(())
    }

    /// True when the form grounds a referent distribution (director descriptions and answers).
    pub fn is_grounding(&self) -> bool {
        matches!(
            self.act,
            Act::Describe | Act::NegateDescription | Act::AffirmTerm | Act::NegateTerm
        ) && !self.terms.is_empty()
    }
}

impl fmt::Display for LogicalForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.act.name())?;
        if !self.terms.is_empty() {
            write!(f, "[{}]", self.terms.join(","))?;
        }
        if let Some(p) = self.patch_ref {
            write!(f, "@{p}")?;
        }
        Ok(())
    }
}
