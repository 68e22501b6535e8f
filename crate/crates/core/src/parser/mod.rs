//! Probabilistic grammar for the dialogue's utterances: a CKY parser from
//! strings to [`LogicalForm`]s and template realization back to strings.
//!
//! The grammar covers the matcher's clarifications and selections plus the
//! director's templates. It is a reconstruction of a small domain grammar,
//! not a general English parser.

mod cky;
mod grammar;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexicon::Lexicon;
use crate::logical_form::{Act, LogicalForm};

pub use cky::BEAM;
pub use grammar::{Grammar, GrammarFile, Rule, PROBABILITY_TOLERANCE};

use cky::{Chart, Token};

/// One complete parse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parse {
    pub lf: LogicalForm,
    pub probability: f64,
    /// Grammar rule indices in pre-order; lexicon terms are not listed.
    pub derivation: Vec<usize>,
}

/// Lowercase, drop apostrophes and turn other punctuation into spaces.
pub fn normalize_words(utterance: &str) -> Vec<String> {
    let cleaned: String = utterance
        .to_lowercase()
        .chars()
        .filter(|c| *c != '\'' && *c != '’')
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    cleaned.split_whitespace().map(str::to_string).collect()
}

#[derive(Debug, Clone)]
pub struct Parser {
    grammar: Grammar,
    chart: Chart,
    term_ids: Vec<String>,
    labels: HashMap<String, usize>,
    max_label_words: usize,
}

impl Parser {
    /// Bind a grammar to a lexicon. Every label must survive normalization
    /// unchanged, otherwise it could never be parsed.
    pub fn new(grammar: Grammar, lexicon: &Lexicon) -> Result<Self> {
        let mut labels = HashMap::new();
        let mut max_label_words = 1;
        for (i, t) in lexicon.terms().iter().enumerate() {
            let words = normalize_words(&t.label);
            if words.join(" ") != t.label {
                return Err(Error::InvalidGrammar(format!(
                    "label {:?} does not tokenize to itself (got {:?})",
                    t.label,
                    words.join(" ")
                )));
            }
            max_label_words = max_label_words.max(words.len());
            labels.insert(t.label.clone(), i);
        }
        let chart = Chart::compile(&grammar, lexicon.len())?;
        Ok(Parser {
            grammar,
            chart,
            term_ids: lexicon.terms().iter().map(|t| t.id.clone()).collect(),
            labels,
            max_label_words,
        })
    }

    /// The bundled grammar over `lexicon`.
    pub fn with_lexicon(lexicon: &Lexicon) -> Result<Self> {
        Parser::new(Grammar::default(), lexicon)
    }

    pub fn grammar(&self) -> &Grammar {
        &self.grammar
    }

    /// Words with multi-word labels merged, longest match first. A window
    /// matches a label either as written or after word aliasing; aliases
    /// also apply to words outside labels.
    pub fn tokenize(&self, utterance: &str) -> Vec<String> {
        self.tokens(utterance).into_iter().map(|t| t.text).collect()
    }

    fn tokens(&self, utterance: &str) -> Vec<Token> {
        let raw = normalize_words(utterance);
        let aliases = self.grammar.aliases();
        let words: Vec<String> = raw
            .iter()
            .map(|w| aliases.get(w).cloned().unwrap_or_else(|| w.clone()))
            .collect();
        let mut out = Vec::new();
        let mut i = 0;
        while i < words.len() {
            let longest = self.max_label_words.min(words.len() - i);
            let hit = (1..=longest).rev().find_map(|k| {
                [&raw, &words].into_iter().find_map(|ws| {
                    let joined = ws[i..i + k].join(" ");
                    self.labels.get(&joined).map(|&t| (k, joined, t))
                })
            });
            match hit {
                Some((k, text, t)) => {
                    out.push(Token {
                        text,
                        term: Some(t),
                    });
                    i += k;
                }
                None => {
                    out.push(Token {
                        text: words[i].clone(),
                        term: None,
                    });
                    i += 1;
                }
            }
        }
        out
    }

    /// Ranked parses: probability descending, ties by leftmost derivation.
    /// Out-of-vocabulary input gives an empty list.
    pub fn parse(&self, utterance: &str) -> Vec<Parse> {
        let tokens = self.tokens(utterance);
        if tokens.is_empty() || !tokens.iter().all(|t| self.chart.knows(t)) {
            return Vec::new();
        }
        self.chart
            .parse(&tokens)
            .into_iter()
            .filter_map(|e| {
                let (lf, derivation) = self.interpret(&e.key)?;
                Some(Parse {
                    lf,
                    probability: e.prob,
                    derivation,
                })
            })
            .collect()
    }

    /// The top parse, if any.
    pub fn parse_best(&self, utterance: &str) -> Option<LogicalForm> {
        self.parse(utterance).into_iter().next().map(|p| p.lf)
    }

    fn interpret(&self, key: &[u32]) -> Option<(LogicalForm, Vec<usize>)> {
        let rules = self.grammar.rules();
        let offset = self.chart.term_offset();
        let mut act = None;
        let mut patch = None;
        let mut terms: Vec<String> = Vec::new();
        let mut derivation = Vec::new();
        for &k in key {
            if k >= offset {
                let id = &self.term_ids[(k - offset) as usize];
                if !terms.contains(id) {
                    terms.push(id.clone());
                }
            } else {
                let rule = &rules[k as usize];
                derivation.push(k as usize);
                act = act.or(rule.act);
                patch = patch.or(rule.patch);
            }
        }
        let lf = LogicalForm::new(act?, terms, patch).ok()?;
        Some((lf, derivation))
    }
}

fn ordinal(patch: usize) -> &'static str {
    match patch {
        0 => "first",
        1 => "second",
        _ => "third",
    }
}

/// Template surface form of a logical form.
pub fn realize(lf: &LogicalForm, lexicon: &Lexicon) -> String {
    let label = lf
        .terms
        .iter()
        .map(|id| match lexicon.get(id) {
            Some(t) => t.label.clone(),
            None => id.replace('_', " "),
        })
        .collect::<Vec<_>>()
        .join(" and ");
    let patch = ordinal(lf.patch_ref.unwrap_or(0));
    match lf.act {
        Act::Describe => format!("the {label} one"),
        Act::NegateDescription => format!("not the {label} one"),
        Act::AffirmTerm => format!("yes, {label}"),
        Act::NegateTerm => format!("no, not {label}"),
        Act::ClarifyTerm => format!("is it the {label} one?"),
        Act::ClarifyPatch => format!("is it the {patch} one?"),
        Act::Select => format!("i pick the {patch} one"),
        Act::EndTurn => "done".into(),
    }
}
