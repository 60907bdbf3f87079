use std::collections::BTreeSet;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct Loc {
    pub line: u32,
    pub col: u32,
}

impl Loc {
    pub fn new(line: u32, col: u32) -> Self {
        Loc { line, col }
    }
}

impl fmt::Display for Loc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Pow,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Mod => "%",
            BinOp::Pow => "**",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
        }
    }

    pub fn is_comparison(self) -> bool {
        matches!(self, BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge)
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => PREC_CMP,
            BinOp::Add | BinOp::Sub => PREC_ADD,
            BinOp::Mul | BinOp::Div | BinOp::Mod => PREC_MUL,
            BinOp::Pow => PREC_POW,
        }
    }
}

const PREC_CMP: u8 = 1;
const PREC_ADD: u8 = 2;
const PREC_MUL: u8 = 3;
const PREC_UNARY: u8 = 4;
const PREC_POW: u8 = 5;
const PREC_POSTFIX: u8 = 6;
const PREC_ATOM: u8 = 7;

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Name(String),
    Int(i64),
    Float(f64),
    Str(String),
    Bool(bool),
    None,
    Attr { object: Box<Expr>, name: String },
    Call { func: Box<Expr>, args: Vec<Expr> },
    Index { object: Box<Expr>, index: Box<Expr> },
    Binary { op: BinOp, lhs: Box<Expr>, rhs: Box<Expr> },
    Neg(Box<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub kind: ExprKind,
    pub loc: Loc,
}

impl Expr {
    pub fn new(kind: ExprKind, loc: Loc) -> Self {
        Expr { kind, loc }
    }

    fn precedence(&self) -> u8 {
        match &self.kind {
            ExprKind::Binary { op, .. } => op.precedence(),
            ExprKind::Neg(_) => PREC_UNARY,
            ExprKind::Attr { .. } | ExprKind::Call { .. } | ExprKind::Index { .. } => PREC_POSTFIX,
            _ => PREC_ATOM,
        }
    }

    /// `a.b.c` as segments when the expression is a pure attribute chain
    /// rooted at a name.
    pub fn dotted_path(&self) -> Option<Vec<&str>> {
        match &self.kind {
            ExprKind::Name(n) => Some(vec![n.as_str()]),
            ExprKind::Attr { object, name } => {
                let mut p = object.dotted_path()?;
                p.push(name.as_str());
                Some(p)
            }
            _ => None,
        }
    }

    /// Depth-first visit of this expression and all sub-expressions.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        match &self.kind {
            ExprKind::Attr { object, .. } => object.walk(f),
            ExprKind::Call { func, args } => {
                func.walk(f);
                for a in args {
                    a.walk(f);
                }
            }
            ExprKind::Index { object, index } => {
                object.walk(f);
                index.walk(f);
            }
            ExprKind::Binary { lhs, rhs, .. } => {
                lhs.walk(f);
                rhs.walk(f);
            }
            ExprKind::Neg(e) => e.walk(f),
            _ => {}
        }
    }

    pub fn is_method_call(&self) -> bool {
        matches!(&self.kind, ExprKind::Call { func, .. } if matches!(func.kind, ExprKind::Attr { .. }))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    Import { path: Vec<String>, loc: Loc },
    Assign { target: String, value: Expr, loc: Loc },
    Expr { expr: Expr, loc: Loc },
    For { var: String, iter: Expr, body: Vec<Stmt>, loc: Loc },
    If { cond: Expr, then_body: Vec<Stmt>, else_body: Option<Vec<Stmt>>, loc: Loc },
}

impl Stmt {
    pub fn loc(&self) -> Loc {
        match self {
            Stmt::Import { loc, .. }
            | Stmt::Assign { loc, .. }
            | Stmt::Expr { loc, .. }
            | Stmt::For { loc, .. }
            | Stmt::If { loc, .. } => *loc,
        }
    }

    /// The statement's own line in normalized form; compound statements
    /// render only their header.
    pub fn head(&self) -> String {
        match self {
            Stmt::Import { path, .. } => format!("import {}", path.join(".")),
            Stmt::Assign { target, value, .. } => format!("{target} = {value}"),
            Stmt::Expr { expr, .. } => expr.to_string(),
            Stmt::For { var, iter, .. } => format!("for {var} in {iter}:"),
            Stmt::If { cond, .. } => format!("if {cond}:"),
        }
    }

    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Stmt)) {
        f(self);
        match self {
            Stmt::For { body, .. } => body.iter().for_each(|s| s.walk(f)),
            Stmt::If { then_body, else_body, .. } => {
                then_body.iter().for_each(|s| s.walk(f));
                if let Some(b) = else_body {
                    b.iter().for_each(|s| s.walk(f));
                }
            }
            _ => {}
        }
    }

    /// Expressions directly owned by this statement (not nested bodies).
    pub fn exprs(&self) -> Vec<&Expr> {
        match self {
            Stmt::Import { .. } => vec![],
            Stmt::Assign { value, .. } => vec![value],
            Stmt::Expr { expr, .. } => vec![expr],
            Stmt::For { iter, .. } => vec![iter],
            Stmt::If { cond, .. } => vec![cond],
        }
    }
}

/// A parsed program.
#[derive(Debug, Clone, PartialEq)]
pub struct Script {
    pub source: String,
    pub statements: Vec<Stmt>,
}

impl Script {
    /// Normalized source: canonical spacing, 4-space indentation, no
    /// comments.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        write_block(&mut out, &self.statements, 0);
        out
    }

    pub fn walk<'a>(&'a self, mut f: impl FnMut(&'a Stmt)) {
        for s in &self.statements {
            s.walk(&mut f);
        }
    }

    pub fn walk_exprs<'a>(&'a self, mut f: impl FnMut(&'a Expr)) {
        self.walk(|s| {
            for e in s.exprs() {
                e.walk(&mut f);
            }
        });
    }

    pub fn method_call_count(&self) -> usize {
        let mut n = 0;
        self.walk_exprs(|e| {
            if e.is_method_call() {
                n += 1;
            }
        });
        n
    }

    pub fn normalize_statements(&self) -> BTreeSet<String> {
        let mut set = BTreeSet::new();
        self.walk(|s| {
            set.insert(s.head());
        });
        set
    }

    /// Structural equality ignoring source text and locations.
    pub fn same_shape(&self, other: &Script) -> bool {
        self.serialize() == other.serialize()
    }
}

fn write_block(out: &mut String, stmts: &[Stmt], depth: usize) {
    for s in stmts {
        let pad = "    ".repeat(depth);
        match s {
            Stmt::For { body, .. } => {
                let _ = writeln!(out, "{pad}{}", s.head());
                write_block(out, body, depth + 1);
            }
            Stmt::If { then_body, else_body, .. } => {
                let _ = writeln!(out, "{pad}{}", s.head());
                write_block(out, then_body, depth + 1);
                if let Some(b) = else_body {
                    let _ = writeln!(out, "{pad}else:");
                    write_block(out, b, depth + 1);
                }
            }
            _ => {
                let _ = writeln!(out, "{pad}{}", s.head());
            }
        }
    }
}

fn write_escaped(f: &mut fmt::Formatter<'_>, s: &str) -> fmt::Result {
    f.write_char('"')?;
    for c in s.chars() {
        match c {
            '"' => f.write_str("\\\"")?,
            '\\' => f.write_str("\\\\")?,
            '\n' => f.write_str("\\n")?,
            '\t' => f.write_str("\\t")?,
            c => f.write_char(c)?,
        }
    }
    f.write_char('"')
}

struct Wrapped<'a>(&'a Expr, bool);

impl fmt::Display for Wrapped<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.1 {
            write!(f, "({})", self.0)
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ExprKind::Name(n) => f.write_str(n),
            ExprKind::Int(i) => write!(f, "{i}"),
            ExprKind::Float(x) => write!(f, "{x:?}"),
            ExprKind::Str(s) => write_escaped(f, s),
            ExprKind::Bool(true) => f.write_str("True"),
            ExprKind::Bool(false) => f.write_str("False"),
            ExprKind::None => f.write_str("None"),
            ExprKind::Attr { object, name } => {
                write!(f, "{}.{name}", Wrapped(object, object.precedence() < PREC_POSTFIX))
            }
            ExprKind::Call { func, args } => {
                write!(f, "{}(", Wrapped(func, func.precedence() < PREC_POSTFIX))?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_char(')')
            }
            ExprKind::Index { object, index } => {
                write!(f, "{}[{index}]", Wrapped(object, object.precedence() < PREC_POSTFIX))
            }
            ExprKind::Neg(e) => write!(f, "-{}", Wrapped(e, e.precedence() < PREC_UNARY)),
            ExprKind::Binary { op, lhs, rhs } => {
                let p = op.precedence();
                let (lp, rp) = match op {
                    BinOp::Pow => (lhs.precedence() < PREC_POSTFIX, rhs.precedence() < PREC_UNARY),
                    o if o.is_comparison() => (lhs.precedence() <= p, rhs.precedence() <= p),
                    _ => (lhs.precedence() < p, rhs.precedence() <= p),
                };
                write!(f, "{} {} {}", Wrapped(lhs, lp), op.symbol(), Wrapped(rhs, rp))
            }
        }
    }
}
