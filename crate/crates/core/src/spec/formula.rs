use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

/// Propositional formula with a one-step `next` over atoms.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum PropFormula {
    True,
    False,
    Atom(String),
    Not(Box<PropFormula>),
    And(Box<PropFormula>, Box<PropFormula>),
    Or(Box<PropFormula>, Box<PropFormula>),
    Implies(Box<PropFormula>, Box<PropFormula>),
    Next(String),
}

/// Assignment of truth values to atomic propositions.
pub type Valuation = BTreeMap<String, bool>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("syntax error at offset {offset}: {message}")]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("atom `{0}` has no value in the current valuation")]
    MissingAtom(String),
    #[error("X({0}) needs a next-step valuation")]
    MissingNext(String),
    #[error("atom `{0}` has no value in the next-step valuation")]
    MissingNextAtom(String),
}

impl PropFormula {
    pub fn atom(name: &str) -> Self {
        PropFormula::Atom(name.to_string())
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: PropFormula) -> Self {
        PropFormula::Not(Box::new(f))
    }

    pub fn and(a: PropFormula, b: PropFormula) -> Self {
        PropFormula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: PropFormula, b: PropFormula) -> Self {
        PropFormula::Or(Box::new(a), Box::new(b))
    }

    pub fn implies(a: PropFormula, b: PropFormula) -> Self {
        PropFormula::Implies(Box::new(a), Box::new(b))
    }

    pub fn next(name: &str) -> Self {
        PropFormula::Next(name.to_string())
    }

    /// Atoms read in the current step.
    pub fn current_atoms(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.visit(&mut |f| {
            if let PropFormula::Atom(a) = f {
                out.insert(a.clone());
            }
        });
        out
    }

    /// Atoms read through `X(..)`.
    pub fn next_atoms(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.visit(&mut |f| {
            if let PropFormula::Next(a) = f {
                out.insert(a.clone());
            }
        });
        out
    }

    pub fn has_next(&self) -> bool {
        !self.next_atoms().is_empty()
    }

    fn visit(&self, f: &mut impl FnMut(&PropFormula)) {
        f(self);
        match self {
            PropFormula::Not(a) => a.visit(f),
            PropFormula::And(a, b) | PropFormula::Or(a, b) | PropFormula::Implies(a, b) => {
                a.visit(f);
                b.visit(f);
            }
            _ => {}
        }
    }

    pub fn eval(&self, current: &Valuation, next_env: Option<&Valuation>) -> Result<bool, EvalError> {
        Ok(match self {
            PropFormula::True => true,
            PropFormula::False => false,
            PropFormula::Atom(a) => *current
                .get(a)
                .ok_or_else(|| EvalError::MissingAtom(a.clone()))?,
            PropFormula::Next(a) => {
                let next = next_env.ok_or_else(|| EvalError::MissingNext(a.clone()))?;
                *next
                    .get(a)
                    .ok_or_else(|| EvalError::MissingNextAtom(a.clone()))?
            }
            PropFormula::Not(a) => !a.eval(current, next_env)?,
            PropFormula::And(a, b) => {
                // evaluate both sides so a missing atom is always reported
                let (x, y) = (a.eval(current, next_env)?, b.eval(current, next_env)?);
                x && y
            }
            PropFormula::Or(a, b) => {
                let (x, y) = (a.eval(current, next_env)?, b.eval(current, next_env)?);
                x || y
            }
            PropFormula::Implies(a, b) => {
                let (x, y) = (a.eval(current, next_env)?, b.eval(current, next_env)?);
                !x || y
            }
        })
    }

    fn precedence(&self) -> u8 {
        match self {
            PropFormula::Implies(..) => 1,
            PropFormula::Or(..) => 2,
            PropFormula::And(..) => 3,
            _ => 4,
        }
    }
}

pub fn eval_prop(
    f: &PropFormula,
    current: &Valuation,
    next_env: Option<&Valuation>,
) -> Result<bool, EvalError> {
    f.eval(current, next_env)
}

/// Canonical printer: binary operators are parenthesised whenever the child
/// binds no tighter than the parent, so the output re-parses to the same tree.
impl fmt::Display for PropFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn child(f: &mut fmt::Formatter<'_>, c: &PropFormula, parent: u8) -> fmt::Result {
            if c.precedence() <= parent {
                write!(f, "({c})")
            } else {
                write!(f, "{c}")
            }
        }
        match self {
            PropFormula::True => write!(f, "true"),
            PropFormula::False => write!(f, "false"),
            PropFormula::Atom(a) => write!(f, "{a}"),
            PropFormula::Next(a) => write!(f, "X({a})"),
            PropFormula::Not(a) => {
                write!(f, "!")?;
                child(f, a, 3)
            }
            PropFormula::And(a, b) => {
                child(f, a, 3)?;
                write!(f, " & ")?;
                child(f, b, 3)
            }
            PropFormula::Or(a, b) => {
                child(f, a, 2)?;
                write!(f, " | ")?;
                child(f, b, 2)
            }
            PropFormula::Implies(a, b) => {
                child(f, a, 1)?;
                write!(f, " -> ")?;
                child(f, b, 1)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Not,
    And,
    Or,
    Arrow,
    LParen,
    RParen,
}

fn tokenize(text: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' | '\r' | '\n' => i += 1,
            '!' => {
                out.push((i, Tok::Not));
                i += 1;
            }
            '&' => {
                out.push((i, Tok::And));
                i += 1;
            }
            '|' => {
                out.push((i, Tok::Or));
                i += 1;
            }
            '(' => {
                out.push((i, Tok::LParen));
                i += 1;
            }
            ')' => {
                out.push((i, Tok::RParen));
                i += 1;
            }
            '-' if bytes.get(i + 1) == Some(&b'>') => {
                out.push((i, Tok::Arrow));
                i += 2;
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((start, Tok::Ident(text[start..i].to_string())));
            }
            _ => {
                return Err(ParseError {
                    offset: i,
                    message: format!("unexpected character `{c}`"),
                })
            }
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |(o, _)| *o)
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError {
            offset: self.offset(),
            message: message.into(),
        })
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ParseError> {
        if self.peek() == Some(&tok) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(format!("expected {what}"))
        }
    }

    fn implies(&mut self) -> Result<PropFormula, ParseError> {
        let lhs = self.or()?;
        if self.peek() == Some(&Tok::Arrow) {
            self.pos += 1;
            let rhs = self.implies()?;
            return Ok(PropFormula::implies(lhs, rhs));
        }
        Ok(lhs)
    }

    fn or(&mut self) -> Result<PropFormula, ParseError> {
        let mut lhs = self.and()?;
        while self.peek() == Some(&Tok::Or) {
            self.pos += 1;
            lhs = PropFormula::or(lhs, self.and()?);
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<PropFormula, ParseError> {
        let mut lhs = self.unary()?;
        while self.peek() == Some(&Tok::And) {
            self.pos += 1;
            lhs = PropFormula::and(lhs, self.unary()?);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<PropFormula, ParseError> {
        match self.peek().cloned() {
            Some(Tok::Not) => {
                self.pos += 1;
                Ok(PropFormula::not(self.unary()?))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let f = self.implies()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(f)
            }
            Some(Tok::Ident(name)) => {
                if name == "X" && self.toks.get(self.pos + 1).map(|(_, t)| t) == Some(&Tok::LParen) {
                    self.pos += 2;
                    let atom = match self.peek().cloned() {
                        Some(Tok::Ident(a)) if !is_constant(&a) => a,
                        _ => return self.err("X(..) applies to a single atom"),
                    };
                    self.pos += 1;
                    self.expect(Tok::RParen, "`)` closing X(..); X applies to atoms only")?;
                    return Ok(PropFormula::Next(atom));
                }
                self.pos += 1;
                Ok(match name.as_str() {
                    "true" | "TRUE" => PropFormula::True,
                    "false" | "FALSE" => PropFormula::False,
                    _ => PropFormula::Atom(name),
                })
            }
            Some(_) => self.err("expected an atom, `!`, `(` or X(..)"),
            None => self.err("unexpected end of formula"),
        }
    }
}

fn is_constant(s: &str) -> bool {
    matches!(s, "true" | "TRUE" | "false" | "FALSE")
}

/// Parses `!`, `&`, `|`, `->` (right-associative) and `X(atom)` with the
/// precedence `! > & > | > ->`.
pub fn parse_prop(text: &str) -> Result<PropFormula, ParseError> {
    let mut p = Parser {
        toks: tokenize(text)?,
        pos: 0,
        end: text.len(),
    };
    if p.toks.is_empty() {
        return p.err("empty formula");
    }
    let f = p.implies()?;
    if p.pos != p.toks.len() {
        return p.err("trailing input");
    }
    Ok(f)
}
