//! The bracketed action-block language.
//!
//! A closed keyword-message subset: number and boolean literals, variable
//! references, unary messages (`t_vel negated`), keyword messages
//! (`robulab isThereAnObstacle: min_distance`) and parentheses. Unary
//! messages bind tighter than keyword messages.

mod eval;

use std::fmt;

pub use eval::{
    eval, Environment, EvalError, EvalMode, Frame, HostObject, HostRef, HostRegistry, Value,
};

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Number(f64),
    Boolean(bool),
    VarRef(String),
    Unary {
        receiver: Box<Expr>,
        selector: String,
    },
    /// `selector` is the concatenation of all keyword parts, e.g. `at:put:`.
    Keyword {
        receiver: Box<Expr>,
        selector: String,
        args: Vec<Expr>,
    },
    Parenthesized(Box<Expr>),
}

impl Expr {
    /// Keyword parts of a keyword selector (`at:put:` -> `["at:", "put:"]`).
    pub fn keyword_parts(selector: &str) -> Vec<&str> {
        let mut parts = Vec::new();
        let mut start = 0;
        for (i, c) in selector.char_indices() {
            if c == ':' {
                parts.push(&selector[start..=i]);
                start = i + 1;
            }
        }
        parts
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Number(n) => write!(f, "{n}"),
            Expr::Boolean(b) => write!(f, "{b}"),
            Expr::VarRef(name) => f.write_str(name),
            Expr::Unary { receiver, selector } => write!(f, "{receiver} {selector}"),
            Expr::Keyword {
                receiver,
                selector,
                args,
            } => {
                write!(f, "{receiver}")?;
                for (part, arg) in Expr::keyword_parts(selector).iter().zip(args) {
                    write!(f, " {part} {arg}")?;
                }
                Ok(())
            }
            Expr::Parenthesized(inner) => write!(f, "({inner})"),
        }
    }
}

/// Error from [`parse_expr`]; `offset` is a byte offset into the block text.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{message} (at offset {offset})")]
pub struct ExprParseError {
    pub offset: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Number(f64),
    Ident(String),
    Keyword(String),
    LParen,
    RParen,
}

const MAX_DEPTH: usize = 128;

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>, ExprParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c == '(' {
            out.push((i, Tok::LParen));
            i += 1;
        } else if c == ')' {
            out.push((i, Tok::RParen));
            i += 1;
        } else if c.is_ascii_digit()
            || (c == '-' && bytes.get(i + 1).is_some_and(|b| b.is_ascii_digit()))
        {
            let start = i;
            i += 1;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            if i + 1 < bytes.len() && bytes[i] == b'.' && bytes[i + 1].is_ascii_digit() {
                i += 1;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
            }
            let value: f64 = text[start..i].parse().map_err(|_| ExprParseError {
                offset: start,
                message: "malformed number".into(),
            })?;
            if !value.is_finite() {
                return Err(ExprParseError {
                    offset: start,
                    message: "number out of range".into(),
                });
            }
            out.push((start, Tok::Number(value)));
        } else if is_ident_start(c) {
            let start = i;
            while i < bytes.len() && is_ident_char(bytes[i] as char) {
                i += 1;
            }
            // `name:` is a keyword part, but `name:=` is not valid here.
            if i < bytes.len() && bytes[i] == b':' && bytes.get(i + 1) != Some(&b'=') {
                i += 1;
                out.push((start, Tok::Keyword(text[start..i].to_string())));
            } else {
                out.push((start, Tok::Ident(text[start..i].to_string())));
            }
        } else {
            let ch = text[i..].chars().next().unwrap_or('?');
            return Err(ExprParseError {
                offset: i,
                message: format!("unexpected character `{ch}`"),
            });
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

    fn fail<T>(&self, message: impl Into<String>) -> Result<T, ExprParseError> {
        Err(ExprParseError {
            offset: self.offset(),
            message: message.into(),
        })
    }

    fn expr(&mut self, depth: usize) -> Result<Expr, ExprParseError> {
        if depth > MAX_DEPTH {
            return self.fail("expression nested too deeply");
        }
        let receiver = self.unary_chain(depth)?;
        let mut selector = String::new();
        let mut args = Vec::new();
        while let Some(Tok::Keyword(part)) = self.peek() {
            selector.push_str(part);
            self.pos += 1;
            args.push(self.unary_chain(depth)?);
        }
        if args.is_empty() {
            Ok(receiver)
        } else {
            Ok(Expr::Keyword {
                receiver: Box::new(receiver),
                selector,
                args,
            })
        }
    }

    fn unary_chain(&mut self, depth: usize) -> Result<Expr, ExprParseError> {
        let mut expr = self.primary(depth)?;
        while let Some(Tok::Ident(name)) = self.peek() {
            let selector = name.clone();
            self.pos += 1;
            expr = Expr::Unary {
                receiver: Box::new(expr),
                selector,
            };
        }
        Ok(expr)
    }

    fn primary(&mut self, depth: usize) -> Result<Expr, ExprParseError> {
        match self.peek().cloned() {
            Some(Tok::Number(n)) => {
                self.pos += 1;
                Ok(Expr::Number(n))
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                Ok(match name.as_str() {
                    "true" => Expr::Boolean(true),
                    "false" => Expr::Boolean(false),
                    _ => Expr::VarRef(name),
                })
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let inner = self.expr(depth + 1)?;
                match self.peek() {
                    Some(Tok::RParen) => {
                        self.pos += 1;
                        Ok(Expr::Parenthesized(Box::new(inner)))
                    }
                    _ => self.fail("expected `)`"),
                }
            }
            Some(Tok::RParen) => self.fail("unexpected `)`"),
            Some(Tok::Keyword(k)) => self.fail(format!("keyword `{k}` has no receiver")),
            None => self.fail("expected an expression"),
        }
    }
}

/// Parses the interior of a `[...]` action block.
pub fn parse_expr(text: &str) -> Result<Expr, ExprParseError> {
    let toks = lex(text)?;
    let mut parser = Parser {
        toks,
        pos: 0,
        end: text.len(),
    };
    let expr = parser.expr(0)?;
    if parser.pos < parser.toks.len() {
        return parser.fail("unexpected trailing input");
    }
    Ok(expr)
}
