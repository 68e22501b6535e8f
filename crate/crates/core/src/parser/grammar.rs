use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logical_form::Act;

const DEFAULT_GRAMMAR: &str = include_str!("../../assets/grammar.json");

/// Allowed drift of a nonterminal's rule probabilities from 1.
pub const PROBABILITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub lhs: String,
    pub rhs: Vec<String>,
    pub p: f64,
    /// Dialogue act contributed by this rule; the outermost one wins.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub act: Option<Act>,
    /// Patch index contributed by this rule.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patch: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrammarFile {
    #[serde(default = "default_version")]
    pub version: u32,
    pub start: String,
    /// Preterminal that expands to every lexicon label.
    #[serde(default = "default_term_symbol")]
    pub term_symbol: String,
    /// Word substitutions applied before matching, e.g. `darker -> dark`.
    #[serde(default)]
    pub aliases: BTreeMap<String, String>,
    pub rules: Vec<Rule>,
}

fn default_version() -> u32 {
    1
}

fn default_term_symbol() -> String {
    "TERM".into()
}

/// A validated PCFG over single-word terminals.
///
/// Symbols that appear as a left-hand side, plus the term symbol, are
/// nonterminals. Everything else on a right-hand side is a terminal word.
#[derive(Debug, Clone, PartialEq)]
pub struct Grammar {
    file: GrammarFile,
}

fn is_word(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit())
}

impl Grammar {
    pub fn new(file: GrammarFile) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvalidGrammar(msg));
        let nonterminals: HashSet<&str> = file.rules.iter().map(|r| r.lhs.as_str()).collect();
        if file.rules.is_empty() {
            return bad("no rules".into());
        }
        if !nonterminals.contains(file.start.as_str()) {
            return bad(format!("start symbol {:?} has no rules", file.start));
        }
        if nonterminals.contains(file.term_symbol.as_str()) {
            return bad(format!("term symbol {:?} cannot have rules", file.term_symbol));
        }
        let mut sums: HashMap<&str, f64> = HashMap::new();
        for (i, r) in file.rules.iter().enumerate() {
            if r.rhs.is_empty() {
                return bad(format!("rule {i} ({}) has an empty right-hand side", r.lhs));
            }
            if !(r.p > 0.0 && r.p <= 1.0) {
                return bad(format!("rule {i} ({}) has probability {}", r.lhs, r.p));
            }
            if r.patch.is_some_and(|p| p > 2) {
                return bad(format!("rule {i} ({}) refers to patch {:?}", r.lhs, r.patch));
            }
            for s in &r.rhs {
                let nt = nonterminals.contains(s.as_str()) || *s == file.term_symbol;
                if !nt && !is_word(s) {
                    return bad(format!("rule {i} ({}): undefined symbol {s:?}", r.lhs));
                }
            }
            *sums.entry(r.lhs.as_str()).or_default() += r.p;
        }
        let mut sums: Vec<_> = sums.into_iter().collect();
        sums.sort_by(|a, b| a.0.cmp(b.0));
        for (lhs, total) in sums {
            if (total - 1.0).abs() > PROBABILITY_TOLERANCE {
                return bad(format!("rules for {lhs} sum to {total}"));
            }
        }
        for (from, to) in &file.aliases {
            if !is_word(from) || !is_word(to) {
                return bad(format!("alias {from:?} -> {to:?} is not word to word"));
            }
        }

        // Reachability from the start symbol.
        let mut seen = HashSet::from([file.start.as_str()]);
        let mut stack = vec![file.start.as_str()];
        while let Some(sym) = stack.pop() {
            for r in file.rules.iter().filter(|r| r.lhs == sym) {
                for s in &r.rhs {
                    if (nonterminals.contains(s.as_str()) || *s == file.term_symbol)
                        && seen.insert(s.as_str())
                    {
                        stack.push(s);
                    }
                }
            }
        }
        if !seen.contains(file.term_symbol.as_str()) {
            return bad(format!("term symbol {:?} is unreachable", file.term_symbol));
        }
        let mut unreachable: Vec<&str> = nonterminals.difference(&seen).copied().collect();
        if !unreachable.is_empty() {
            unreachable.sort();
            return bad(format!("unreachable nonterminals {unreachable:?}"));
        }

        let grammar = Grammar { file };
        grammar.unary_order()?;
        Ok(grammar)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Grammar::new(serde_json::from_str(s)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Grammar::from_json(&text)
    }

    pub fn file(&self) -> &GrammarFile {
        &self.file
    }

    pub fn rules(&self) -> &[Rule] {
        &self.file.rules
    }

    pub fn start(&self) -> &str {
        &self.file.start
    }

    pub fn term_symbol(&self) -> &str {
        &self.file.term_symbol
    }

    pub fn aliases(&self) -> &BTreeMap<String, String> {
        &self.file.aliases
    }

    pub fn is_nonterminal(&self, symbol: &str) -> bool {
        symbol == self.file.term_symbol || self.file.rules.iter().any(|r| r.lhs == symbol)
    }

    /// Nonterminals ordered so that for every unary rule `A -> B`, `B` comes
    /// before `A`. Fails on a unary cycle.
    pub(crate) fn unary_order(&self) -> Result<Vec<String>> {
        let mut names: Vec<&str> = self.file.rules.iter().map(|r| r.lhs.as_str()).collect();
        names.push(&self.file.term_symbol);
        names.sort();
        names.dedup();
        let mut deps: HashMap<&str, Vec<&str>> = HashMap::new();
        for r in &self.file.rules {
            if r.rhs.len() == 1 && self.is_nonterminal(&r.rhs[0]) {
                deps.entry(r.lhs.as_str()).or_default().push(r.rhs[0].as_str());
            }
        }
        // 0 = unvisited, 1 = on stack, 2 = done
        let mut mark: HashMap<&str, u8> = HashMap::new();
        let mut order = Vec::new();
        fn visit<'a>(
            n: &'a str,
            deps: &HashMap<&'a str, Vec<&'a str>>,
            mark: &mut HashMap<&'a str, u8>,
            order: &mut Vec<String>,
        ) -> Result<()> {
            match mark.get(n) {
                Some(2) => return Ok(()),
                Some(1) => {
                    return Err(Error::InvalidGrammar(format!("unary cycle through {n}")))
                }
                _ => {}
            }
            mark.insert(n, 1);
            for d in deps.get(n).into_iter().flatten() {
                visit(d, deps, mark, order)?;
            }
            mark.insert(n, 2);
            order.push(n.to_string());
            Ok(())
        }
        for n in names {
            visit(n, &deps, &mut mark, &mut order)?;
        }
        Ok(order)
    }
}

impl Default for Grammar {
    fn default() -> Self {
        Grammar::from_json(DEFAULT_GRAMMAR).expect("bundled grammar is valid")
    }
}
