//! Text syntax for formulas.
//!
//! ```text
//! implies := or ('->' implies)?
//! or      := and ('||' and)*
//! and     := since ('&&' since)*
//! since   := unary ('since' bound? unary)*
//! unary   := '!' unary | 'pre' unary | 'once' bound? unary
//!          | 'historically' bound? unary | primary
//! primary := 'true' | 'false' | atom | '(' implies ')'
//! bound   := '[' int ':' (int | '*') ']'
//! ```
//!
//! An omitted bound is `[0:*]`.

use thiserror::Error;

use super::{Bound, Formula};
use crate::trace::{is_valid_name, Time};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("syntax error at offset {pos}: {msg}")]
pub struct ParseError {
    pub pos: usize,
    pub msg: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Int(Time),
    True,
    False,
    Not,
    And,
    Or,
    Implies,
    Pre,
    Since,
    Once,
    Historically,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Colon,
    Star,
    Eof,
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("atom `{s}`"),
        Tok::Int(n) => format!("integer {n}"),
        Tok::Eof => "end of input".into(),
        other => format!("{other:?}"),
    }
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = text.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    let err = |pos: usize, msg: &str| ParseError {
        pos,
        msg: msg.to_string(),
    };
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'(' => toks.push((Tok::LParen, start)),
            b')' => toks.push((Tok::RParen, start)),
            b'[' => toks.push((Tok::LBracket, start)),
            b']' => toks.push((Tok::RBracket, start)),
            b':' => toks.push((Tok::Colon, start)),
            b'*' => toks.push((Tok::Star, start)),
            b'!' => toks.push((Tok::Not, start)),
            b'&' if bytes.get(i + 1) == Some(&b'&') => {
                toks.push((Tok::And, start));
                i += 1;
            }
            b'|' if bytes.get(i + 1) == Some(&b'|') => {
                toks.push((Tok::Or, start));
                i += 1;
            }
            b'-' if bytes.get(i + 1) == Some(&b'>') => {
                toks.push((Tok::Implies, start));
                i += 1;
            }
            b'0'..=b'9' => {
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let n = text[start..i]
                    .parse::<Time>()
                    .map_err(|_| err(start, "integer out of range"))?;
                toks.push((Tok::Int(n), start));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_' || bytes[i] == b'.')
                {
                    i += 1;
                }
                let word = &text[start..i];
                let tok = match word {
                    "true" => Tok::True,
                    "false" => Tok::False,
                    "pre" => Tok::Pre,
                    "since" => Tok::Since,
                    "once" => Tok::Once,
                    "historically" => Tok::Historically,
                    w if is_valid_name(w) => Tok::Ident(w.to_string()),
                    _ => return Err(err(start, &format!("invalid atom name `{word}`"))),
                };
                toks.push((tok, start));
                continue;
            }
            _ => {
                let ch = text[start..].chars().next().unwrap_or('?');
                return Err(err(start, &format!("unexpected character `{ch}`")));
            }
        }
        i += 1;
    }
    toks.push((Tok::Eof, text.len()));
    Ok(toks)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, msg: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError {
            pos: self.offset(),
            msg: msg.into(),
        })
    }

    fn expect(&mut self, want: Tok) -> Result<(), ParseError> {
        if *self.peek() == want {
            self.bump();
            Ok(())
        } else {
            self.error(format!(
                "expected {}, found {}",
                describe(&want),
                describe(self.peek())
            ))
        }
    }

    fn implies(&mut self) -> Result<Formula, ParseError> {
        let lhs = self.or()?;
        if *self.peek() == Tok::Implies {
            self.bump();
            let rhs = self.implies()?;
            return Ok(Formula::implies(lhs, rhs));
        }
        Ok(lhs)
    }

    fn or(&mut self) -> Result<Formula, ParseError> {
        let mut lhs = self.and()?;
        while *self.peek() == Tok::Or {
            self.bump();
            lhs = Formula::or(lhs, self.and()?);
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Formula, ParseError> {
        let mut lhs = self.since()?;
        while *self.peek() == Tok::And {
            self.bump();
            lhs = Formula::and(lhs, self.since()?);
        }
        Ok(lhs)
    }

    fn since(&mut self) -> Result<Formula, ParseError> {
        let mut lhs = self.unary()?;
        while *self.peek() == Tok::Since {
            self.bump();
            let bound = self.opt_bound()?;
            lhs = Formula::since(bound, lhs, self.unary()?);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Formula, ParseError> {
        match self.peek() {
            Tok::Not => {
                self.bump();
                Ok(Formula::not(self.unary()?))
            }
            Tok::Pre => {
                self.bump();
                Ok(Formula::pre(self.unary()?))
            }
            Tok::Once => {
                self.bump();
                let bound = self.opt_bound()?;
                Ok(Formula::once(bound, self.unary()?))
            }
            Tok::Historically => {
                self.bump();
                let bound = self.opt_bound()?;
                Ok(Formula::historically(bound, self.unary()?))
            }
            _ => self.primary(),
        }
    }

    fn primary(&mut self) -> Result<Formula, ParseError> {
        match self.peek().clone() {
            Tok::True => {
                self.bump();
                Ok(Formula::Const(true))
            }
            Tok::False => {
                self.bump();
                Ok(Formula::Const(false))
            }
            Tok::Ident(name) => {
                self.bump();
                Ok(Formula::Atom(name))
            }
            Tok::LParen => {
                self.bump();
                let f = self.implies()?;
                self.expect(Tok::RParen)?;
                Ok(f)
            }
            other => self.error(format!("expected a formula, found {}", describe(&other))),
        }
    }

    fn opt_bound(&mut self) -> Result<Bound, ParseError> {
        if *self.peek() != Tok::LBracket {
            return Ok(Bound::UNBOUNDED);
        }
        let start = self.offset();
        self.bump();
        let Tok::Int(lo) = self.peek().clone() else {
            return self.error("expected lower bound");
        };
        self.bump();
        self.expect(Tok::Colon)?;
        let hi = match self.peek().clone() {
            Tok::Int(h) => Some(h),
            Tok::Star => None,
            _ => return self.error("expected upper bound or `*`"),
        };
        self.bump();
        self.expect(Tok::RBracket)?;
        Bound::new(lo, hi).ok_or_else(|| ParseError {
            pos: start,
            msg: format!("lower bound {lo} exceeds upper bound {}", hi.unwrap_or(0)),
        })
    }
}

/// Parses formula text.
pub fn parse(text: &str) -> Result<Formula, ParseError> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
    };
    let f = p.implies()?;
    if *p.peek() != Tok::Eof {
        return p.error(format!("unexpected {}", describe(p.peek())));
    }
    Ok(f)
}
