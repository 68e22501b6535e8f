//! Color-term semantics: applicability of terms to colors, the conservative
//! speaker and the literal listener.
//!
//! The default model is a set of Gaussian color categories in CIELAB. Anything
//! implementing [`DescriptionModel`] can stand in for it.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::color::{Color, ColorContext};
use crate::error::{Error, Result};

const DEFAULT_LEXICON: &str = include_str!("../assets/lexicon.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub id: String,
    pub label: String,
    /// Category center in CIELAB.
    pub center: [f64; 3],
    /// Per-axis category width (L, a, b).
    pub spread: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lexicon {
    terms: Vec<Term>,
}

impl Lexicon {
    pub fn new(terms: Vec<Term>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::InvalidLexicon("lexicon has no terms".into()));
        }
        let mut ids = HashSet::new();
        let mut labels = HashSet::new();
        for t in &terms {
            if !ids.insert(t.id.as_str()) {
                return Err(Error::InvalidLexicon(format!("duplicate term id {:?}", t.id)));
            }
            if !labels.insert(t.label.as_str()) {
                return Err(Error::InvalidLexicon(format!("duplicate label {:?}", t.label)));
            }
            if t.spread.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
                return Err(Error::InvalidLexicon(format!(
                    "term {:?} has a non-positive spread",
                    t.id
                )));
            }
            if t.label.trim().is_empty() || t.label != t.label.to_lowercase() {
                return Err(Error::InvalidLexicon(format!(
                    "term {:?} needs a non-empty lowercase label",
                    t.id
                )));
            }
        }
        Ok(Lexicon { terms })
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Lexicon::new(serde_json::from_str(s)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Lexicon::from_json(&text)
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Term> {
        self.terms.iter().find(|t| t.id == id)
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.terms.iter().position(|t| t.id == id)
    }

    pub fn by_label(&self, label: &str) -> Option<&Term> {
        self.terms.iter().find(|t| t.label == label)
    }
}

impl Default for Lexicon {
    fn default() -> Self {
        Lexicon::from_json(DEFAULT_LEXICON).expect("bundled lexicon is valid")
    }
}

/// Normalize non-negative scores; all-zero (or non-finite) mass becomes uniform.
pub fn normalize_or_uniform(scores: &[f64]) -> Vec<f64> {
    let total: f64 = scores.iter().sum();
    if total > 0.0 && total.is_finite() {
        scores.iter().map(|s| s / total).collect()
    } else {
        vec![1.0 / scores.len() as f64; scores.len()]
    }
}

pub fn normalize3(scores: [f64; 3]) -> [f64; 3] {
    let total = scores[0] + scores[1] + scores[2];
    if total > 0.0 && total.is_finite() {
        scores.map(|s| s / total)
    } else {
        [1.0 / 3.0; 3]
    }
}

/// Conservative speaker score of `term` for `target` against `distractors`.
pub fn conservative_score<M: DescriptionModel + ?Sized>(
    model: &M,
    term: &Term,
    target: &Color,
    distractors: &[&Color],
) -> f64 {
    distractors
        .iter()
        .fold(model.applicability(term, target), |acc, d| {
            acc * (1.0 - model.applicability(term, d))
        })
}

/// The semantic interface the dialogue machinery depends on.
pub trait DescriptionModel: Send + Sync {
    fn lexicon(&self) -> &Lexicon;

    /// Degree in `[0, 1]` to which `term` describes `color`.
    fn applicability(&self, term: &Term, color: &Color) -> f64;

    /// P(term | target patch, context), one entry per lexicon term.
    fn speaker(&self, target: usize, context: &ColorContext) -> Vec<f64> {
        let patches = context.patches();
        let distractors: Vec<&Color> = (0..3)
            .filter(|&i| i != target)
            .map(|i| &patches[i])
            .collect();
        let scores: Vec<f64> = self
            .lexicon()
            .terms()
            .iter()
            .map(|term| conservative_score(self, term, &patches[target], &distractors))
            .collect();
        normalize_or_uniform(&scores)
    }

    /// P(patch | term, context); with `negated`, mass follows `1 - applicability`.
    fn listener(&self, term: &Term, context: &ColorContext, negated: bool) -> [f64; 3] {
        let scores = context.patches().map(|p| {
            let a = self.applicability(term, &p);
            if negated {
                1.0 - a
            } else {
                a
            }
        });
        normalize3(scores)
    }
}

impl DescriptionModel for Lexicon {
    fn lexicon(&self) -> &Lexicon {
        self
    }

    fn applicability(&self, term: &Term, color: &Color) -> f64 {
        let lab = color.lab();
        let z2: f64 = (0..3)
            .map(|i| ((lab[i] - term.center[i]) / term.spread[i]).powi(2))
            .sum();
        (-0.5 * z2).exp()
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
