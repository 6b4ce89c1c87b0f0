//! Prefix s-expression text form, e.g. `(* 2 (ncdf S))`.
//!
//! `Display` writes the expanded tree. [`dump_dag`] writes one line per
//! distinct node, which stays small when the tree form would not.

use std::collections::HashMap;
use std::fmt::{self, Write as _};

use thiserror::Error;

use super::node::{Expression, Kind, NodeKind};

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind() {
            Kind::Const(c) => write!(f, "{c}"),
            Kind::Var(n) => f.write_str(n),
            other => {
                write!(f, "({}", other.tag().symbol())?;
                for ch in other.children().to_vec() {
                    write!(f, " {ch}")?;
                }
                f.write_char(')')
            }
        }
    }
}

/// Writes the DAG with each distinct node on its own line as `%k = (op ...)`,
/// children referring to earlier lines. The last line is the root.
pub fn dump_dag(root: &Expression) -> String {
    let mut ids: HashMap<usize, usize> = HashMap::new();
    let mut out = String::new();
    let mut stack: Vec<(Expression, bool)> = vec![(root.clone(), false)];
    while let Some((e, expanded)) = stack.pop() {
        if ids.contains_key(&e.addr()) {
            continue;
        }
        let kids = e.kind().children().to_vec();
        if !expanded && !kids.is_empty() {
            stack.push((e.clone(), true));
            for ch in kids.into_iter().rev() {
                stack.push((ch.clone(), false));
            }
            continue;
        }
        let id = ids.len();
        let body = match e.kind() {
            Kind::Const(c) => format!("{c}"),
            Kind::Var(n) => n.to_string(),
            other => {
                let mut s = format!("({}", other.tag().symbol());
                for ch in other.children().to_vec() {
                    let _ = write!(s, " %{}", ids[&ch.addr()]);
                }
                s.push(')');
                s
            }
        };
        let _ = writeln!(out, "%{id} = {body}");
        ids.insert(e.addr(), id);
    }
    out
}

#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("unexpected end of input")]
    Eof,
    #[error("unexpected `{0}`")]
    Unexpected(String),
    #[error("unknown operator `{0}`")]
    Operator(String),
    #[error("operator `{op}` takes {want} arguments, got {got}")]
    Arity { op: String, want: usize, got: usize },
}

fn tokenize(s: &str) -> Vec<String> {
    s.replace('(', " ( ").replace(')', " ) ").split_whitespace().map(str::to_string).collect()
}

/// Parses the `Display` form back into an expression, without simplifying.
pub fn parse(s: &str) -> Result<Expression, ParseError> {
    let toks = tokenize(s);
    let mut pos = 0;
    let e = parse_at(&toks, &mut pos)?;
    match toks.get(pos) {
        None => Ok(e),
        Some(t) => Err(ParseError::Unexpected(t.clone())),
    }
}

fn parse_at(toks: &[String], pos: &mut usize) -> Result<Expression, ParseError> {
    let tok = toks.get(*pos).ok_or(ParseError::Eof)?;
    *pos += 1;
    if tok == ")" {
        return Err(ParseError::Unexpected(tok.clone()));
    }
    if tok != "(" {
        if let Ok(c) = tok.parse::<f64>() {
            if c.is_finite() {
                return Ok(Expression::constant(c));
            }
        }
        return Ok(Expression::var(tok));
    }
    let op = toks.get(*pos).ok_or(ParseError::Eof)?.clone();
    *pos += 1;
    let tag = NodeKind::from_symbol(&op).ok_or_else(|| ParseError::Operator(op.clone()))?;
    let mut args = Vec::new();
    loop {
        match toks.get(*pos).map(String::as_str) {
            None => return Err(ParseError::Eof),
            Some(")") => {
                *pos += 1;
                break;
            }
            Some(_) => args.push(parse_at(toks, pos)?),
        }
    }
    if args.len() != tag.arity() {
        return Err(ParseError::Arity { op, want: tag.arity(), got: args.len() });
    }
    Ok(Expression::node(Kind::from_parts(tag, args)))
}
