//! Chart parsing over a binarized copy of the grammar.

use std::cmp::Ordering;
use std::collections::HashMap;

use crate::error::Result;

use super::grammar::Grammar;

/// Derivations kept per chart cell and symbol.
pub const BEAM: usize = 64;

/// One partial derivation. `key` is the pre-order sequence of grammar events:
/// an original rule index, or `rules.len() + t` for the lexicon term `t`.
#[derive(Debug, Clone)]
pub(crate) struct Entry {
    pub prob: f64,
    pub key: Vec<u32>,
}

fn rank(a: &Entry, b: &Entry) -> Ordering {
    b.prob.total_cmp(&a.prob).then_with(|| a.key.cmp(&b.key))
}

#[derive(Debug, Clone, Copy)]
struct Lexical {
    lhs: usize,
    prob: f64,
    tag: Option<u32>,
}

#[derive(Debug, Clone, Copy)]
struct Unary {
    lhs: usize,
    rhs: usize,
    prob: f64,
    tag: u32,
}

#[derive(Debug, Clone, Copy)]
struct Binary {
    lhs: usize,
    left: usize,
    right: usize,
    prob: f64,
    tag: Option<u32>,
}

/// Token as seen by the chart: a plain word, a lexicon term, or both.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Token {
    pub text: String,
    pub term: Option<usize>,
}

#[derive(Debug, Clone)]
pub(crate) struct Chart {
    n_symbols: usize,
    start: usize,
    term_symbol: usize,
    term_prob: f64,
    term_offset: u32,
    lexical: HashMap<String, Vec<Lexical>>,
    /// Grouped by right-hand side, in the grammar's unary order.
    unary: Vec<Vec<Unary>>,
    binary: Vec<Binary>,
    order: Vec<usize>,
}

impl Chart {
    pub fn compile(grammar: &Grammar, n_terms: usize) -> Result<Chart> {
        let mut ids: HashMap<String, usize> = HashMap::new();
        let intern = |name: &str, ids: &mut HashMap<String, usize>| -> usize {
            let n = ids.len();
            *ids.entry(name.to_string()).or_insert(n)
        };
        let order_names = grammar.unary_order()?;
        for n in &order_names {
            intern(n, &mut ids);
        }
        let start = ids[grammar.start()];
        let term_symbol = ids[grammar.term_symbol()];

        let mut lexical: HashMap<String, Vec<Lexical>> = HashMap::new();
        let mut unary_flat = Vec::new();
        let mut binary = Vec::new();
        for (r, rule) in grammar.rules().iter().enumerate() {
            let tag = r as u32;
            let lhs = ids[&rule.lhs];
            if rule.rhs.len() == 1 {
                let s = &rule.rhs[0];
                if grammar.is_nonterminal(s) {
                    unary_flat.push(Unary {
                        lhs,
                        rhs: ids[s],
                        prob: rule.p,
                        tag,
                    });
                } else {
                    lexical.entry(s.clone()).or_default().push(Lexical {
                        lhs,
                        prob: rule.p,
                        tag: Some(tag),
                    });
                }
                continue;
            }
            // Terminals inside longer rules get a preterminal of their own.
            let syms: Vec<usize> = rule
                .rhs
                .iter()
                .map(|s| {
                    if grammar.is_nonterminal(s) {
                        ids[s]
                    } else {
                        let pre = format!("'{s}'");
                        let fresh = !ids.contains_key(&pre);
                        let id = intern(&pre, &mut ids);
                        if fresh {
                            lexical.entry(s.clone()).or_default().push(Lexical {
                                lhs: id,
                                prob: 1.0,
                                tag: None,
                            });
                        }
                        id
                    }
                })
                .collect();
            // A -> X1 @1, @1 -> X2 @2, ..., @k -> X(n-1) Xn
            let mut lhs_cur = lhs;
            let mut prob = rule.p;
            let mut tag_cur = Some(tag);
            for k in 0..syms.len() - 2 {
                let next = intern(&format!("@{r}.{k}"), &mut ids);
                binary.push(Binary {
                    lhs: lhs_cur,
                    left: syms[k],
                    right: next,
                    prob,
                    tag: tag_cur,
                });
                lhs_cur = next;
                prob = 1.0;
                tag_cur = None;
            }
            let n = syms.len();
            binary.push(Binary {
                lhs: lhs_cur,
                left: syms[n - 2],
                right: syms[n - 1],
                prob,
                tag: tag_cur,
            });
        }

        let n_symbols = ids.len();
        // Symbols without unary links can go anywhere in the order.
        let mut order: Vec<usize> = order_names.iter().map(|n| ids[n]).collect();
        let mut extra: Vec<usize> = (0..n_symbols).filter(|s| !order.contains(s)).collect();
        extra.append(&mut order);
        let order = extra;
        let mut unary = vec![Vec::new(); n_symbols];
        for u in unary_flat {
            unary[u.rhs].push(u);
        }
        Ok(Chart {
            n_symbols,
            start,
            term_symbol,
            term_prob: 1.0 / n_terms.max(1) as f64,
            term_offset: grammar.rules().len() as u32,
            lexical,
            unary,
            binary,
            order,
        })
    }

    pub fn term_offset(&self) -> u32 {
        self.term_offset
    }

    pub fn knows(&self, token: &Token) -> bool {
        token.term.is_some() || self.lexical.contains_key(&token.text)
    }

    /// All complete derivations of the start symbol, best first.
    pub fn parse(&self, tokens: &[Token]) -> Vec<Entry> {
        let n = tokens.len();
        if n == 0 {
            return Vec::new();
        }
        // cells[i][len - 1][symbol]
        let mut cells: Vec<Vec<Vec<Vec<Entry>>>> = vec![Vec::with_capacity(n); n];
        for len in 1..=n {
            for i in 0..=n - len {
                let mut cell: Vec<Vec<Entry>> = vec![Vec::new(); self.n_symbols];
                if len == 1 {
                    let tok = &tokens[i];
                    for lx in self.lexical.get(&tok.text).into_iter().flatten() {
                        cell[lx.lhs].push(Entry {
                            prob: lx.prob,
                            key: lx.tag.into_iter().collect(),
                        });
                    }
                    if let Some(t) = tok.term {
                        cell[self.term_symbol].push(Entry {
                            prob: self.term_prob,
                            key: vec![self.term_offset + t as u32],
                        });
                    }
                } else {
                    for split in 1..len {
                        let left = &cells[i][split - 1];
                        let right = &cells[i + split][len - split - 1];
                        for b in &self.binary {
                            for el in &left[b.left] {
                                for er in &right[b.right] {
                                    let mut key = Vec::with_capacity(1 + el.key.len() + er.key.len());
                                    key.extend(b.tag);
                                    key.extend_from_slice(&el.key);
                                    key.extend_from_slice(&er.key);
                                    cell[b.lhs].push(Entry {
                                        prob: b.prob * el.prob * er.prob,
                                        key,
                                    });
                                }
                            }
                        }
                    }
                }
                for &s in &self.order {
                    cell[s].sort_by(rank);
                    cell[s].truncate(BEAM);
                    for u in &self.unary[s] {
                        let derived: Vec<Entry> = cell[s]
                            .iter()
                            .map(|e| {
                                let mut key = Vec::with_capacity(e.key.len() + 1);
                                key.push(u.tag);
                                key.extend_from_slice(&e.key);
                                Entry {
                                    prob: u.prob * e.prob,
                                    key,
                                }
                            })
                            .collect();
                        cell[u.lhs].extend(derived);
                    }
                }
                cells[i].push(cell);
            }
        }
        let mut out = std::mem::take(&mut cells[0][n - 1][self.start]);
        out.sort_by(rank);
        out
    }
}
