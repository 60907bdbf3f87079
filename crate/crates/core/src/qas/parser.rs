use super::ast::{BinOp, Expr, ExprKind, Loc, Script, Stmt};
use super::lexer::{lex, Tok, Token};
use super::{SyntaxError, SyntaxFailure};

/// Parse a program. All recoverable errors are reported together.
pub fn parse(source: &str) -> Result<Script, SyntaxFailure> {
    let (toks, mut errors) = lex(source);
    let mut p = Parser { toks, pos: 0, errors: Vec::new(), last_failed: false };
    let statements = p.block_body(true);
    errors.append(&mut p.errors);
    if errors.is_empty() {
        Ok(Script { source: source.to_string(), statements })
    } else {
        errors.sort_by_key(|e| (e.line, e.column));
        errors.dedup_by(|a, b| a.line == b.line && a.message == b.message);
        Err(SyntaxFailure { errors })
    }
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    errors: Vec<SyntaxError>,
    last_failed: bool,
}

type PResult<T> = Result<T, SyntaxError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        let i = (self.pos + n).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn loc(&self) -> Loc {
        self.toks[self.pos].loc
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == t {
            self.bump();
            true
        } else {
            false
        }
    }

    fn err_here(&self, msg: impl Into<String>) -> SyntaxError {
        let loc = self.loc();
        SyntaxError::new(loc.line, loc.col, msg)
    }

    fn expect(&mut self, t: Tok, what: &str) -> PResult<Token> {
        if *self.peek() == t {
            Ok(self.bump())
        } else {
            Err(self.err_here(format!("expected {what}, found {}", self.peek().describe())))
        }
    }

    fn sync(&mut self) {
        loop {
            match self.peek() {
                Tok::Newline => {
                    self.bump();
                    return;
                }
                Tok::Eof | Tok::Dedent => return,
                _ => {
                    self.bump();
                }
            }
        }
    }

    fn block_body(&mut self, top: bool) -> Vec<Stmt> {
        let mut out = Vec::new();
        loop {
            match self.peek() {
                Tok::Eof => break,
                Tok::Dedent if !top => break,
                Tok::Dedent => {
                    self.bump();
                }
                Tok::Indent => {
                    if !self.last_failed {
                        let e = self.err_here("unexpected indent");
                        self.errors.push(e);
                    }
                    self.bump();
                    let _ = self.block_body(false);
                    self.eat(&Tok::Dedent);
                    self.last_failed = true;
                }
                Tok::Newline => {
                    self.bump();
                }
                _ => match self.statement() {
                    Ok(s) => {
                        self.last_failed = false;
                        out.push(s);
                    }
                    Err(e) => {
                        self.errors.push(e);
                        self.last_failed = true;
                        self.sync();
                    }
                },
            }
        }
        out
    }

    fn suite(&mut self) -> PResult<Vec<Stmt>> {
        self.expect(Tok::Colon, "':'")?;
        self.expect(Tok::Newline, "end of line after ':'")?;
        if !self.eat(&Tok::Indent) {
            return Err(self.err_here("expected an indented block"));
        }
        let body = self.block_body(false);
        self.eat(&Tok::Dedent);
        self.last_failed = false;
        if body.is_empty() {
            return Err(self.err_here("empty block"));
        }
        Ok(body)
    }

    fn end_of_simple(&mut self) -> PResult<()> {
        match self.peek() {
            Tok::Newline => {
                self.bump();
                Ok(())
            }
            Tok::Eof | Tok::Dedent => Ok(()),
            other => Err(self.err_here(format!("expected end of line, found {}", other.describe()))),
        }
    }

    fn name(&mut self, what: &str) -> PResult<String> {
        match self.peek().clone() {
            Tok::Name(n) => {
                self.bump();
                Ok(n)
            }
            other => Err(self.err_here(format!("expected {what}, found {}", other.describe()))),
        }
    }

    fn statement(&mut self) -> PResult<Stmt> {
        let loc = self.loc();
        match self.peek().clone() {
            Tok::Import => {
                self.bump();
                let mut path = vec![self.name("module name")?];
                while self.eat(&Tok::Dot) {
                    path.push(self.name("module name")?);
                }
                self.end_of_simple()?;
                Ok(Stmt::Import { path, loc })
            }
            Tok::For => {
                self.bump();
                let var = self.name("loop variable")?;
                self.expect(Tok::In, "'in'")?;
                let iter = self.expr()?;
                let body = self.suite()?;
                Ok(Stmt::For { var, iter, body, loc })
            }
            Tok::If => {
                self.bump();
                let cond = self.expr()?;
                let then_body = self.suite()?;
                let else_body = if *self.peek() == Tok::Else {
                    self.bump();
                    Some(self.suite()?)
                } else {
                    None
                };
                Ok(Stmt::If { cond, then_body, else_body, loc })
            }
            Tok::Else => Err(self.err_here("'else' without matching 'if'")),
            Tok::Name(n) if *self.peek_at(1) == Tok::Assign => {
                self.bump();
                self.bump();
                let value = self.expr()?;
                self.end_of_simple()?;
                Ok(Stmt::Assign { target: n, value, loc })
            }
            _ => {
                let expr = self.expr()?;
                if *self.peek() == Tok::Assign {
                    return Err(self.err_here("can only assign to a plain name"));
                }
                self.end_of_simple()?;
                Ok(Stmt::Expr { expr, loc })
            }
        }
    }

    fn expr(&mut self) -> PResult<Expr> {
        let lhs = self.arith()?;
        let op = match self.peek() {
            Tok::Eq => BinOp::Eq,
            Tok::Ne => BinOp::Ne,
            Tok::Lt => BinOp::Lt,
            Tok::Le => BinOp::Le,
            Tok::Gt => BinOp::Gt,
            Tok::Ge => BinOp::Ge,
            _ => return Ok(lhs),
        };
        self.bump();
        let rhs = self.arith()?;
        if matches!(self.peek(), Tok::Eq | Tok::Ne | Tok::Lt | Tok::Le | Tok::Gt | Tok::Ge) {
            return Err(self.err_here("chained comparisons are not supported"));
        }
        let loc = lhs.loc;
        Ok(Expr::new(ExprKind::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) }, loc))
    }

    fn arith(&mut self) -> PResult<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            let loc = lhs.loc;
            lhs = Expr::new(ExprKind::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) }, loc);
        }
    }

    fn term(&mut self) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                Tok::Percent => BinOp::Mod,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            let loc = lhs.loc;
            lhs = Expr::new(ExprKind::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) }, loc);
        }
    }

    fn unary(&mut self) -> PResult<Expr> {
        if *self.peek() == Tok::Minus {
            let loc = self.loc();
            self.bump();
            let inner = self.unary()?;
            return Ok(Expr::new(ExprKind::Neg(Box::new(inner)), loc));
        }
        self.power()
    }

    fn power(&mut self) -> PResult<Expr> {
        let base = self.postfix()?;
        if *self.peek() == Tok::StarStar {
            self.bump();
            let exp = self.unary()?;
            let loc = base.loc;
            return Ok(Expr::new(ExprKind::Binary { op: BinOp::Pow, lhs: Box::new(base), rhs: Box::new(exp) }, loc));
        }
        Ok(base)
    }

    fn postfix(&mut self) -> PResult<Expr> {
        let mut e = self.atom()?;
        loop {
            match self.peek() {
                Tok::Dot => {
                    self.bump();
                    let name = self.name("attribute name")?;
                    let loc = e.loc;
                    e = Expr::new(ExprKind::Attr { object: Box::new(e), name }, loc);
                }
                Tok::LParen => {
                    self.bump();
                    let mut args = Vec::new();
                    if *self.peek() != Tok::RParen {
                        loop {
                            args.push(self.expr()?);
                            if !self.eat(&Tok::Comma) {
                                break;
                            }
                            if *self.peek() == Tok::RParen {
                                break;
                            }
                        }
                    }
                    self.expect(Tok::RParen, "')'")?;
                    let loc = e.loc;
                    e = Expr::new(ExprKind::Call { func: Box::new(e), args }, loc);
                }
                Tok::LBracket => {
                    self.bump();
                    let index = self.expr()?;
                    self.expect(Tok::RBracket, "']'")?;
                    let loc = e.loc;
                    e = Expr::new(ExprKind::Index { object: Box::new(e), index: Box::new(index) }, loc);
                }
                _ => return Ok(e),
            }
        }
    }

    fn atom(&mut self) -> PResult<Expr> {
        let loc = self.loc();
        let kind = match self.peek().clone() {
            Tok::Name(n) => ExprKind::Name(n),
            Tok::Int(i) => ExprKind::Int(i),
            Tok::Float(x) => ExprKind::Float(x),
            Tok::Str(s) => ExprKind::Str(s),
            Tok::True => ExprKind::Bool(true),
            Tok::False => ExprKind::Bool(false),
            Tok::None => ExprKind::None,
            Tok::LParen => {
                self.bump();
                let inner = self.expr()?;
                self.expect(Tok::RParen, "')'")?;
                return Ok(inner);
            }
            other => return Err(self.err_here(format!("expected an expression, found {}", other.describe()))),
        };
        self.bump();
        Ok(Expr::new(kind, loc))
    }
}
