//! The query-action script language: an indentation-delimited imperative
//! notation for acquisition chains over a design database.

pub mod ast;
pub mod infer;
mod lexer;
mod parser;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use ast::{BinOp, Expr, ExprKind, Loc, Script, Stmt};
pub use infer::{infer_types, CallSite, EnumRef, InferredType, TypedScript};
pub use lexer::KEYWORDS;
pub use parser::parse;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SyntaxError {
    pub line: u32,
    pub column: u32,
    pub message: String,
}

impl SyntaxError {
    pub fn new(line: u32, column: u32, message: impl Into<String>) -> Self {
        SyntaxError { line, column, message: message.into() }
    }
}

impl fmt::Display for SyntaxError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.column, self.message)
    }
}

/// Every syntax error found in one pass over a source text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntaxFailure {
    pub errors: Vec<SyntaxError>,
}

impl fmt::Display for SyntaxFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.errors.iter().map(|e| e.to_string()).collect();
        write!(f, "{}", parts.join("; "))
    }
}

impl std::error::Error for SyntaxFailure {}

/// Normalized statements of `source`; unparseable text falls back to
/// trimmed, whitespace-collapsed, comment-stripped lines.
pub fn normalize_source(source: &str) -> BTreeSet<String> {
    match parse(source) {
        Ok(s) => s.normalize_statements(),
        Err(_) => source
            .lines()
            .map(|l| {
                let code = strip_comment(l);
                code.split_whitespace().collect::<Vec<_>>().join(" ")
            })
            .filter(|l| !l.is_empty())
            .collect(),
    }
}

fn strip_comment(line: &str) -> &str {
    let mut quote: Option<char> = None;
    let mut escaped = false;
    for (i, c) in line.char_indices() {
        if escaped {
            escaped = false;
            continue;
        }
        match (quote, c) {
            (Some(_), '\\') => escaped = true,
            (Some(q), c) if c == q => quote = None,
            (None, '"') | (None, '\'') => quote = Some(c),
            (None, '#') => return &line[..i],
            _ => {}
        }
    }
    line
}

/// Jaccard similarity of two statement sets; two empty sets are identical.
pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}
