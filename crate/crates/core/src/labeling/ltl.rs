//! Linear temporal logic over finite traces.
//!
//! Formulas are evaluated with LTLf semantics: positions run from 1 to the
//! trace length, `X` is strong (it fails at the last position), `F`/`G`/`U`
//! quantify over the remaining positions only.
//!
//! Text syntax: atoms are double-quoted activity names; operators are `!`,
//! `X`, `F`, `G` (prefix), `U`, `&&`, `||`, `->` (infix, listed from tightest
//! to loosest binding); parentheses group. `U` and `->` associate to the
//! right, `&&` and `||` to the left.

use std::fmt;

use crate::error::{Error, Result};
use crate::event_log::Trace;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum LtlFormula {
    Atom(String),
    Not(Box<LtlFormula>),
    And(Box<LtlFormula>, Box<LtlFormula>),
    Or(Box<LtlFormula>, Box<LtlFormula>),
    Implies(Box<LtlFormula>, Box<LtlFormula>),
    Next(Box<LtlFormula>),
    Eventually(Box<LtlFormula>),
    Globally(Box<LtlFormula>),
    Until(Box<LtlFormula>, Box<LtlFormula>),
}

impl LtlFormula {
    pub fn atom(activity: impl Into<String>) -> Self {
        LtlFormula::Atom(activity.into())
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: LtlFormula) -> Self {
        LtlFormula::Not(Box::new(f))
    }

    pub fn and(f: LtlFormula, g: LtlFormula) -> Self {
        LtlFormula::And(Box::new(f), Box::new(g))
    }

    pub fn or(f: LtlFormula, g: LtlFormula) -> Self {
        LtlFormula::Or(Box::new(f), Box::new(g))
    }

    pub fn implies(f: LtlFormula, g: LtlFormula) -> Self {
        LtlFormula::Implies(Box::new(f), Box::new(g))
    }

    pub fn next(f: LtlFormula) -> Self {
        LtlFormula::Next(Box::new(f))
    }

    pub fn eventually(f: LtlFormula) -> Self {
        LtlFormula::Eventually(Box::new(f))
    }

    pub fn globally(f: LtlFormula) -> Self {
        LtlFormula::Globally(Box::new(f))
    }

    pub fn until(f: LtlFormula, g: LtlFormula) -> Self {
        LtlFormula::Until(Box::new(f), Box::new(g))
    }

    pub fn parse(text: &str) -> Result<Self> {
        Parser::new(text).parse()
    }

    /// Truth value at every position `1..=n`, computed right to left.
    pub fn truth_table<'a>(&self, activities: &[&'a str]) -> Vec<bool> {
        let n = activities.len();
        match self {
            LtlFormula::Atom(a) => activities.iter().map(|x| *x == a).collect(),
            LtlFormula::Not(f) => f.truth_table(activities).into_iter().map(|v| !v).collect(),
            LtlFormula::And(f, g) => zip_with(f, g, activities, |a, b| a && b),
            LtlFormula::Or(f, g) => zip_with(f, g, activities, |a, b| a || b),
            LtlFormula::Implies(f, g) => zip_with(f, g, activities, |a, b| !a || b),
            LtlFormula::Next(f) => {
                let inner = f.truth_table(activities);
                (0..n).map(|i| i + 1 < n && inner[i + 1]).collect()
            }
            LtlFormula::Eventually(f) => scan_back(f.truth_table(activities), false, |now, later| now || later),
            LtlFormula::Globally(f) => scan_back(f.truth_table(activities), true, |now, later| now && later),
            LtlFormula::Until(f, g) => {
                let hold = f.truth_table(activities);
                let target = g.truth_table(activities);
                let mut out = vec![false; n];
                let mut later = false;
                for i in (0..n).rev() {
                    later = target[i] || (hold[i] && later);
                    out[i] = later;
                }
                out
            }
        }
    }

    /// Nesting depth; an atom has depth 0.
    pub fn depth(&self) -> usize {
        match self {
            LtlFormula::Atom(_) => 0,
            LtlFormula::Not(f) | LtlFormula::Next(f) | LtlFormula::Eventually(f) | LtlFormula::Globally(f) => {
                1 + f.depth()
            }
            LtlFormula::And(f, g) | LtlFormula::Or(f, g) | LtlFormula::Implies(f, g) | LtlFormula::Until(f, g) => {
                1 + f.depth().max(g.depth())
            }
        }
    }
}

fn zip_with(f: &LtlFormula, g: &LtlFormula, activities: &[&str], op: impl Fn(bool, bool) -> bool) -> Vec<bool> {
    f.truth_table(activities)
        .into_iter()
        .zip(g.truth_table(activities))
        .map(|(a, b)| op(a, b))
        .collect()
}

fn scan_back(mut values: Vec<bool>, past_end: bool, op: impl Fn(bool, bool) -> bool) -> Vec<bool> {
    let mut later = past_end;
    for v in values.iter_mut().rev() {
        later = op(*v, later);
        *v = later;
    }
    values
}

/// Evaluates `formula` on `trace` at the 1-based position `pos`.
pub fn eval_ltl(trace: &Trace, formula: &LtlFormula, pos: usize) -> Result<bool> {
    let activities: Vec<&str> = trace.activities().collect();
    eval_on_activities(&activities, formula, pos)
}

pub fn eval_on_activities(activities: &[&str], formula: &LtlFormula, pos: usize) -> Result<bool> {
    if pos == 0 || pos > activities.len() {
        return Err(Error::PositionOutOfRange {
            pos,
            len: activities.len(),
        });
    }
    Ok(formula.truth_table(activities)[pos - 1])
}

impl fmt::Display for LtlFormula {
    /// Fully parenthesised; re-parses to an equal formula.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LtlFormula::Atom(a) => {
                write!(f, "\"")?;
                for c in a.chars() {
                    if c == '"' || c == '\\' {
                        write!(f, "\\")?;
                    }
                    write!(f, "{c}")?;
                }
                write!(f, "\"")
            }
            LtlFormula::Not(g) => write!(f, "!({g})"),
            LtlFormula::Next(g) => write!(f, "X({g})"),
            LtlFormula::Eventually(g) => write!(f, "F({g})"),
            LtlFormula::Globally(g) => write!(f, "G({g})"),
            LtlFormula::And(a, b) => write!(f, "({a}) && ({b})"),
            LtlFormula::Or(a, b) => write!(f, "({a}) || ({b})"),
            LtlFormula::Implies(a, b) => write!(f, "({a}) -> ({b})"),
            LtlFormula::Until(a, b) => write!(f, "({a}) U ({b})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Atom(String),
    Not,
    And,
    Or,
    Implies,
    Next,
    Eventually,
    Globally,
    Until,
    Open,
    Close,
}

struct Parser<'a> {
    text: &'a str,
    tokens: Vec<(usize, Token)>,
    cursor: usize,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        Parser {
            text,
            tokens: Vec::new(),
            cursor: 0,
        }
    }

    fn error(offset: usize, message: impl Into<String>) -> Error {
        Error::FormulaParse {
            offset,
            message: message.into(),
        }
    }

    fn tokenize(&mut self) -> Result<()> {
        let bytes = self.text.as_bytes();
        let mut i = 0;
        while i < bytes.len() {
            let c = bytes[i];
            let start = i;
            let token = match c {
                b' ' | b'\t' | b'\n' | b'\r' => {
                    i += 1;
                    continue;
                }
                b'(' => Token::Open,
                b')' => Token::Close,
                b'!' => Token::Not,
                b'&' if bytes.get(i + 1) == Some(&b'&') => {
                    i += 1;
                    Token::And
                }
                b'|' if bytes.get(i + 1) == Some(&b'|') => {
                    i += 1;
                    Token::Or
                }
                b'-' if bytes.get(i + 1) == Some(&b'>') => {
                    i += 1;
                    Token::Implies
                }
                b'X' | b'F' | b'G' | b'U'
                    if !bytes.get(i + 1).is_some_and(|n| n.is_ascii_alphanumeric() || *n == b'_') =>
                {
                    match c {
                        b'X' => Token::Next,
                        b'F' => Token::Eventually,
                        b'G' => Token::Globally,
                        _ => Token::Until,
                    }
                }
                b'"' => {
                    let mut name = String::new();
                    let mut chars = self.text[i + 1..].char_indices();
                    let mut closed = None;
                    while let Some((off, ch)) = chars.next() {
                        match ch {
                            '"' => {
                                closed = Some(i + 1 + off);
                                break;
                            }
                            '\\' => match chars.next() {
                                Some((_, esc)) => name.push(esc),
                                None => break,
                            },
                            _ => name.push(ch),
                        }
                    }
                    match closed {
                        Some(end) => i = end,
                        None => return Err(Self::error(start, "unterminated atom")),
                    }
                    if name.is_empty() {
                        return Err(Self::error(start, "empty atom"));
                    }
                    Token::Atom(name)
                }
                _ => return Err(Self::error(start, "unexpected character")),
            };
            self.tokens.push((start, token));
            i += 1;
        }
        Ok(())
    }

    fn parse(mut self) -> Result<LtlFormula> {
        self.tokenize()?;
        let f = self.implication()?;
        match self.tokens.get(self.cursor) {
            None => Ok(f),
            Some((off, _)) => Err(Self::error(*off, "unexpected trailing input")),
        }
    }

    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.cursor).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.tokens.get(self.cursor).map_or(self.text.len(), |(o, _)| *o)
    }

    fn eat(&mut self, token: &Token) -> bool {
        if self.peek() == Some(token) {
            self.cursor += 1;
            true
        } else {
            false
        }
    }

    fn implication(&mut self) -> Result<LtlFormula> {
        let lhs = self.disjunction()?;
        if self.eat(&Token::Implies) {
            let rhs = self.implication()?;
            return Ok(LtlFormula::implies(lhs, rhs));
        }
        Ok(lhs)
    }

    fn disjunction(&mut self) -> Result<LtlFormula> {
        let mut lhs = self.conjunction()?;
        while self.eat(&Token::Or) {
            lhs = LtlFormula::or(lhs, self.conjunction()?);
        }
        Ok(lhs)
    }

    fn conjunction(&mut self) -> Result<LtlFormula> {
        let mut lhs = self.until()?;
        while self.eat(&Token::And) {
            lhs = LtlFormula::and(lhs, self.until()?);
        }
        Ok(lhs)
    }

    fn until(&mut self) -> Result<LtlFormula> {
        let lhs = self.unary()?;
        if self.eat(&Token::Until) {
            let rhs = self.until()?;
            return Ok(LtlFormula::until(lhs, rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<LtlFormula> {
        let offset = self.offset();
        let token = self
            .tokens
            .get(self.cursor)
            .map(|(_, t)| t.clone())
            .ok_or_else(|| Self::error(offset, "unexpected end of formula"))?;
        self.cursor += 1;
        match token {
            Token::Not => Ok(LtlFormula::not(self.unary()?)),
            Token::Next => Ok(LtlFormula::next(self.unary()?)),
            Token::Eventually => Ok(LtlFormula::eventually(self.unary()?)),
            Token::Globally => Ok(LtlFormula::globally(self.unary()?)),
            Token::Atom(a) => Ok(LtlFormula::Atom(a)),
            Token::Open => {
                let inner = self.implication()?;
                if !self.eat(&Token::Close) {
                    return Err(Self::error(self.offset(), "expected `)`"));
                }
                Ok(inner)
            }
            _ => Err(Self::error(offset, "expected an atom, a unary operator or `(`")),
        }
    }
}
