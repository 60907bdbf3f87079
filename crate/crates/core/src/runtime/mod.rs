//! Mock execution environment: an interpreter for scripts over an
//! in-memory design database, with step and wall-clock budgets and
//! tool-call accounting.

mod db;
pub mod synthetic;
mod value;

use std::fmt;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use db::{load_snapshot, Behavior, DesignDb, Record, SnapshotError};
pub use value::Value;

use crate::qas::infer::binary_result;
use crate::qas::{BinOp, Expr, ExprKind, Script, Stmt};
use crate::schema::{ApiSchema, TypeRef};
use db::{dispatch_for, Dispatch};

pub const DEFAULT_STEP_BUDGET: u64 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecStatus {
    Ok,
    RuntimeError,
    Timeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ErrorKind {
    NameError,
    UnknownMethod,
    BadAttribute,
    NullAccess,
    TypeError,
    EnumError,
    /// The tool process died; injected by the session's crash fault.
    ProcessCrash,
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuntimeError {
    pub kind: ErrorKind,
    pub line: u32,
    pub message: String,
}

impl fmt::Display for RuntimeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}: {}", self.line, self.kind, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecOutcome {
    pub status: ExecStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<RuntimeError>,
    pub output: Vec<String>,
    pub mutations: u64,
    pub steps: u64,
}

impl ExecOutcome {
    pub fn is_ok(&self) -> bool {
        self.status == ExecStatus::Ok
    }

    /// Process exit status mirroring the outcome.
    pub fn exit_code(&self) -> i32 {
        match self.status {
            ExecStatus::Ok => 0,
            ExecStatus::RuntimeError => 1,
            ExecStatus::Timeout => 3,
        }
    }
}

/// Single-owner execution context over one design database.
#[derive(Debug, Clone)]
pub struct Session {
    pub schema: Arc<ApiSchema>,
    pub db: DesignDb,
    pub step_budget: u64,
    pub wall_budget: Option<Duration>,
    pub tool_calls: u64,
    pub crash_probability: f64,
    rng: ChaCha8Rng,
}

impl Session {
    pub fn new(schema: Arc<ApiSchema>, db: DesignDb) -> Self {
        Session {
            schema,
            db,
            step_budget: DEFAULT_STEP_BUDGET,
            wall_budget: None,
            tool_calls: 0,
            crash_probability: 0.0,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    pub fn with_step_budget(mut self, steps: u64) -> Self {
        self.step_budget = steps;
        self
    }

    pub fn with_wall_budget(mut self, budget: Duration) -> Self {
        self.wall_budget = Some(budget);
        self
    }

    /// Each execute crashes with probability `p`, drawn from a stream
    /// seeded by `seed`.
    pub fn with_crash_fault(mut self, p: f64, seed: u64) -> Self {
        self.crash_probability = p;
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self
    }
}

/// Deep copy of the session's design state.
pub fn snapshot_state(session: &Session) -> DesignDb {
    session.db.clone()
}

/// Replace the design state; the tool-call counter is untouched.
pub fn restore_state(session: &mut Session, db: DesignDb) {
    session.db = db;
}

enum Halt {
    Error(RuntimeError),
    Timeout,
}

type Env = std::collections::BTreeMap<String, Value>;

struct Interp<'s> {
    schema: Arc<ApiSchema>,
    db: &'s mut DesignDb,
    steps: u64,
    budget: u64,
    deadline: Option<Instant>,
    output: Vec<String>,
    mutations: u64,
}

fn err(kind: ErrorKind, line: u32, message: impl Into<String>) -> Halt {
    Halt::Error(RuntimeError { kind, line, message: message.into() })
}

/// Run a parsed script. Errors are reported inside the outcome; the
/// session's tool-call counter grows by exactly one.
pub fn execute(script: &Script, session: &mut Session) -> ExecOutcome {
    session.tool_calls += 1;
    if session.crash_probability > 0.0 && session.rng.gen::<f64>() < session.crash_probability {
        return ExecOutcome {
            status: ExecStatus::RuntimeError,
            error: Some(RuntimeError {
                kind: ErrorKind::ProcessCrash,
                line: 0,
                message: "tool process crashed".into(),
            }),
            output: Vec::new(),
            mutations: 0,
            steps: 0,
        };
    }
    let mut interp = Interp {
        schema: session.schema.clone(),
        db: &mut session.db,
        steps: 0,
        budget: session.step_budget,
        deadline: session.wall_budget.map(|d| Instant::now() + d),
        output: Vec::new(),
        mutations: 0,
    };
    let mut env = Env::new();
    for (name, ty) in &interp.schema.roots {
        if let Some(r) = interp.db.first_of(ty) {
            env.insert(name.clone(), Value::Obj { ty: ty.clone(), id: r.id.clone() });
        }
    }
    let result = interp.block(&script.statements, &mut env);
    let (status, error) = match result {
        Ok(()) => (ExecStatus::Ok, None),
        Err(Halt::Timeout) => (ExecStatus::Timeout, None),
        Err(Halt::Error(e)) => (ExecStatus::RuntimeError, Some(e)),
    };
    ExecOutcome { status, error, output: interp.output, mutations: interp.mutations, steps: interp.steps }
}

impl Interp<'_> {
    fn tick(&mut self) -> Result<(), Halt> {
        self.steps += 1;
        if self.steps > self.budget {
            return Err(Halt::Timeout);
        }
        if let Some(d) = self.deadline {
            if self.steps.is_multiple_of(64) && Instant::now() >= d {
                return Err(Halt::Timeout);
            }
        }
        Ok(())
    }

    fn block(&mut self, stmts: &[Stmt], env: &mut Env) -> Result<(), Halt> {
        for s in stmts {
            self.stmt(s, env)?;
        }
        Ok(())
    }

    fn stmt(&mut self, s: &Stmt, env: &mut Env) -> Result<(), Halt> {
        self.tick()?;
        let line = s.loc().line;
        match s {
            Stmt::Import { path, .. } => {
                let full = path.join(".");
                if !self.schema.modules.contains(&path[0]) || !self.schema.is_valid_import(&full) {
                    return Err(err(ErrorKind::NameError, line, format!("No module named '{full}'")));
                }
                env.insert(path[0].clone(), Value::Module(path[0].clone()));
            }
            Stmt::Assign { target, value, .. } => {
                let v = self.expr(value, env)?;
                env.insert(target.clone(), v);
            }
            Stmt::Expr { expr, .. } => {
                self.expr(expr, env)?;
            }
            Stmt::If { cond, then_body, else_body, .. } => {
                if self.expr(cond, env)?.truthy() {
                    self.block(then_body, env)?;
                } else if let Some(b) = else_body {
                    self.block(b, env)?;
                }
            }
            Stmt::For { var, iter, body, .. } => match self.expr(iter, env)? {
                Value::List(items) => {
                    for it in items {
                        self.tick()?;
                        env.insert(var.clone(), it);
                        self.block(body, env)?;
                    }
                }
                Value::Range(n) => {
                    for i in 0..n.max(0) {
                        self.tick()?;
                        env.insert(var.clone(), Value::Int(i));
                        self.block(body, env)?;
                    }
                }
                Value::None => return Err(err(ErrorKind::NullAccess, line, "cannot iterate over None")),
                other => {
                    return Err(err(
                        ErrorKind::TypeError,
                        line,
                        format!("'{}' object is not iterable", other.type_name()),
                    ))
                }
            },
        }
        Ok(())
    }

    fn expr(&mut self, e: &Expr, env: &Env) -> Result<Value, Halt> {
        let line = e.loc.line;
        Ok(match &e.kind {
            ExprKind::Int(i) => Value::Int(*i),
            ExprKind::Float(f) => Value::Float(*f),
            ExprKind::Str(s) => Value::Str(s.clone()),
            ExprKind::Bool(b) => Value::Bool(*b),
            ExprKind::None => Value::None,
            ExprKind::Name(n) => env
                .get(n)
                .cloned()
                .ok_or_else(|| err(ErrorKind::NameError, line, format!("name '{n}' is not defined")))?,
            ExprKind::Attr { object, name } => {
                let recv = self.expr(object, env)?;
                self.attribute(recv, name, line)?
            }
            ExprKind::Call { func, args } => self.call(func, args, env, line)?,
            ExprKind::Index { object, index } => {
                let obj = self.expr(object, env)?;
                let idx = self.expr(index, env)?;
                let i = match idx {
                    Value::Int(i) => i,
                    other => {
                        return Err(err(
                            ErrorKind::TypeError,
                            line,
                            format!("indices must be integers, not {}", other.type_name()),
                        ))
                    }
                };
                let pick = |len: i64| -> Option<usize> {
                    let j = if i < 0 { len + i } else { i };
                    (0..len).contains(&j).then_some(j as usize)
                };
                match obj {
                    Value::List(l) => pick(l.len() as i64)
                        .map(|j| l[j].clone())
                        .ok_or_else(|| err(ErrorKind::TypeError, line, "list index out of range"))?,
                    Value::Range(n) => pick(n.max(0))
                        .map(|j| Value::Int(j as i64))
                        .ok_or_else(|| err(ErrorKind::TypeError, line, "range index out of range"))?,
                    Value::None => {
                        return Err(err(ErrorKind::NullAccess, line, "'NoneType' object is not subscriptable"))
                    }
                    other => {
                        return Err(err(
                            ErrorKind::TypeError,
                            line,
                            format!("'{}' object is not subscriptable", other.type_name()),
                        ))
                    }
                }
            }
            ExprKind::Neg(inner) => match self.expr(inner, env)? {
                Value::Int(i) => {
                    Value::Int(i.checked_neg().ok_or_else(|| err(ErrorKind::TypeError, line, "integer overflow"))?)
                }
                Value::Float(f) => Value::Float(-f),
                other => {
                    return Err(err(
                        ErrorKind::TypeError,
                        line,
                        format!("bad operand type for unary -: '{}'", other.type_name()),
                    ))
                }
            },
            ExprKind::Binary { op, lhs, rhs } => {
                let l = self.expr(lhs, env)?;
                let r = self.expr(rhs, env)?;
                binary(*op, &l, &r).map_err(|m| err(ErrorKind::TypeError, line, m))?
            }
        })
    }

    fn attribute(&mut self, recv: Value, name: &str, line: u32) -> Result<Value, Halt> {
        match recv {
            Value::None => {
                Err(err(ErrorKind::NullAccess, line, format!("'NoneType' object has no attribute '{name}'")))
            }
            Value::Module(m) => {
                if self.schema.is_enum(name) {
                    Ok(Value::EnumNs(name.to_string()))
                } else {
                    Err(err(ErrorKind::BadAttribute, line, format!("module '{m}' has no attribute '{name}'")))
                }
            }
            Value::EnumNs(e) => {
                if self.schema.enums[&e].iter().any(|c| c == name) {
                    Ok(Value::Enum { name: e, konst: name.to_string() })
                } else {
                    Err(err(ErrorKind::EnumError, line, format!("{e} has no constant '{name}'")))
                }
            }
            Value::Obj { ty, id } => {
                let Some(t) = self.schema.lookup_attribute(&ty, name).cloned() else {
                    return Err(err(ErrorKind::BadAttribute, line, format!("'{ty}' object has no attribute '{name}'")));
                };
                let rec = self.db.get(&id).map(|(_, r)| r).expect("object ids resolve");
                if self.schema.is_object_type(&t.base) {
                    return Ok(self.children(rec.children.get(name).map(Vec::as_slice).unwrap_or(&[]), &t));
                }
                Ok(match rec.fields.get(name) {
                    Some(v) => Value::from_json(v, &t, &self.schema),
                    None => Value::default_for(&t, &self.schema),
                })
            }
            other => Err(err(
                ErrorKind::BadAttribute,
                line,
                format!("'{}' object has no attribute '{name}'", other.type_name()),
            )),
        }
    }

    fn children(&self, ids: &[String], t: &TypeRef) -> Value {
        let obj = |id: &String| Value::Obj { ty: t.base.clone(), id: id.clone() };
        if t.many {
            Value::List(ids.iter().map(obj).collect())
        } else {
            ids.first().map(obj).unwrap_or(Value::None)
        }
    }

    fn call(&mut self, func: &Expr, args: &[Expr], env: &Env, line: u32) -> Result<Value, Halt> {
        self.tick()?;
        match &func.kind {
            ExprKind::Attr { object, name } => {
                let recv = self.expr(object, env)?;
                let vals = args.iter().map(|a| self.expr(a, env)).collect::<Result<Vec<_>, _>>()?;
                self.method(recv, name, vals, line)
            }
            ExprKind::Name(n) => {
                let vals = args.iter().map(|a| self.expr(a, env)).collect::<Result<Vec<_>, _>>()?;
                self.builtin(n, vals, line)
            }
            _ => Err(err(ErrorKind::TypeError, line, format!("'{func}' is not callable"))),
        }
    }

    fn builtin(&mut self, name: &str, args: Vec<Value>, line: u32) -> Result<Value, Halt> {
        match name {
            "print" => {
                let parts: Vec<String> = args.iter().map(Value::to_string).collect();
                self.output.push(parts.join(" "));
                Ok(Value::None)
            }
            "len" => match args.as_slice() {
                [Value::List(l)] => Ok(Value::Int(l.len() as i64)),
                [Value::Range(n)] => Ok(Value::Int((*n).max(0))),
                [Value::Str(s)] => Ok(Value::Int(s.chars().count() as i64)),
                [other] => {
                    Err(err(ErrorKind::TypeError, line, format!("object of type '{}' has no len()", other.type_name())))
                }
                _ => Err(err(
                    ErrorKind::TypeError,
                    line,
                    format!("len() takes exactly one argument ({} given)", args.len()),
                )),
            },
            "range" => match args.as_slice() {
                [Value::Int(n)] => Ok(Value::Range(*n)),
                [other] => Err(err(
                    ErrorKind::TypeError,
                    line,
                    format!("'{}' object cannot be interpreted as an integer", other.type_name()),
                )),
                _ => Err(err(ErrorKind::TypeError, line, format!("range expected 1 argument, got {}", args.len()))),
            },
            other => Err(err(ErrorKind::NameError, line, format!("name '{other}' is not defined"))),
        }
    }

    fn method(&mut self, recv: Value, name: &str, args: Vec<Value>, line: u32) -> Result<Value, Halt> {
        let (ty, id) = match recv {
            Value::Obj { ty, id } => (ty, id),
            Value::None => {
                return Err(err(ErrorKind::NullAccess, line, format!("'NoneType' object has no attribute '{name}'")))
            }
            other => {
                return Err(err(
                    ErrorKind::UnknownMethod,
                    line,
                    format!("'{}' object has no method '{name}'", other.type_name()),
                ))
            }
        };
        let schema = self.schema.clone();
        let Some(sig) = schema.lookup_method(&ty, name) else {
            return Err(err(ErrorKind::UnknownMethod, line, format!("'{ty}' object has no attribute '{name}'")));
        };
        if sig.params.len() != args.len() {
            return Err(err(
                ErrorKind::TypeError,
                line,
                format!("{ty}.{name}() takes {} argument(s) ({} given)", sig.params.len(), args.len()),
            ));
        }
        for (a, p) in args.iter().zip(&sig.params) {
            if !a.conforms(&p.ty) {
                let kind = if schema.is_enum(&p.ty.base) { ErrorKind::EnumError } else { ErrorKind::TypeError };
                return Err(err(
                    kind,
                    line,
                    format!("{ty}.{name}: argument '{}' expects {}, got {}", p.name, p.ty, a.type_name()),
                ));
            }
        }
        let dispatch =
            dispatch_for(&schema, &self.db.behaviors, &ty, sig).map_err(|m| err(ErrorKind::UnknownMethod, line, m))?;
        let rec = self.db.get(&id).map(|(_, r)| r).expect("object ids resolve");
        let ret = &sig.returns;
        Ok(match dispatch {
            Dispatch::ReadChildren(rel) => self.children(rec.children.get(&rel).map(Vec::as_slice).unwrap_or(&[]), ret),
            Dispatch::ReadField(f) => match rec.fields.get(&f) {
                Some(v) => Value::from_json(v, ret, &schema),
                None => Value::default_for(ret, &schema),
            },
            Dispatch::Const(v) => Value::from_json(&v, ret, &schema),
            Dispatch::Find { relation } => {
                let Value::Str(wanted) = &args[0] else { unreachable!("finder argument checked") };
                let hit = rec.children.get(&relation).into_iter().flatten().find(|k| {
                    self.db.get(k).and_then(|(_, r)| r.fields.get("name")).and_then(|n| n.as_str())
                        == Some(wanted.as_str())
                });
                hit.map(|k| Value::Obj { ty: ret.base.clone(), id: k.clone() }).unwrap_or(Value::None)
            }
            Dispatch::Write(f) => {
                let v = args[0].to_json();
                let r = self.db.get_mut(&id).expect("object ids resolve");
                r.fields.insert(f, v);
                self.mutations += 1;
                Value::None
            }
        })
    }
}

fn to_f(v: &Value) -> f64 {
    match v {
        Value::Int(i) => *i as f64,
        Value::Float(f) => *f,
        _ => f64::NAN,
    }
}

fn static_type(v: &Value) -> TypeRef {
    match v {
        Value::Int(_) => TypeRef::named("int"),
        Value::Float(_) => TypeRef::named("float"),
        Value::Str(_) => TypeRef::named("string"),
        Value::Bool(_) => TypeRef::named("bool"),
        Value::None => TypeRef::none(),
        Value::List(_) | Value::Range(_) => TypeRef::many("?"),
        other => TypeRef::named(other.type_name()),
    }
}

/// Binary operators with the same typing rules the inference uses.
fn binary(op: BinOp, l: &Value, r: &Value) -> Result<Value, String> {
    use BinOp::*;
    match op {
        Eq => return Ok(Value::Bool(l.loose_eq(r))),
        Ne => return Ok(Value::Bool(!l.loose_eq(r))),
        _ => {}
    }
    let unsupported =
        || format!("unsupported operand type(s) for {}: '{}' and '{}'", op.symbol(), l.type_name(), r.type_name());
    let rt = binary_result(op, &static_type(l), &static_type(r)).map_err(|_| unsupported())?;
    let overflow = || "integer overflow".to_string();
    Ok(match (op, l, r) {
        (Lt | Le | Gt | Ge, Value::Str(a), Value::Str(b)) => Value::Bool(match op {
            Lt => a < b,
            Le => a <= b,
            Gt => a > b,
            _ => a >= b,
        }),
        (Lt | Le | Gt | Ge, a, b) => {
            let (x, y) = (to_f(a), to_f(b));
            Value::Bool(match op {
                Lt => x < y,
                Le => x <= y,
                Gt => x > y,
                _ => x >= y,
            })
        }
        (Add, Value::Str(a), Value::Str(b)) => Value::Str(format!("{a}{b}")),
        (Mul, Value::Str(s), Value::Int(n)) | (Mul, Value::Int(n), Value::Str(s)) => {
            let n = (*n).max(0) as usize;
            if s.len().saturating_mul(n) > 1 << 24 {
                return Err("string repetition too large".into());
            }
            Value::Str(s.repeat(n))
        }
        (Div, a, b) => {
            let y = to_f(b);
            if y == 0.0 {
                return Err("division by zero".into());
            }
            Value::Float(to_f(a) / y)
        }
        (_, Value::Int(a), Value::Int(b)) if rt.base == "int" => Value::Int(match op {
            Add => a.checked_add(*b).ok_or_else(overflow)?,
            Sub => a.checked_sub(*b).ok_or_else(overflow)?,
            Mul => a.checked_mul(*b).ok_or_else(overflow)?,
            Mod => {
                if *b == 0 {
                    return Err("integer modulo by zero".into());
                }
                a.checked_rem_euclid(*b).map(|m| if *b < 0 && m != 0 { m + b } else { m }).ok_or_else(overflow)?
            }
            Pow => {
                if *b < 0 {
                    return Ok(Value::Float((*a as f64).powf(*b as f64)));
                }
                let e = u32::try_from(*b).map_err(|_| overflow())?;
                a.checked_pow(e).ok_or_else(overflow)?
            }
            _ => unreachable!("arithmetic op"),
        }),
        (_, a, b) => {
            let (x, y) = (to_f(a), to_f(b));
            Value::Float(match op {
                Add => x + y,
                Sub => x - y,
                Mul => x * y,
                Mod => {
                    if y == 0.0 {
                        return Err("float modulo".into());
                    }
                    x - y * (x / y).floor()
                }
                Pow => x.powf(y),
                _ => unreachable!("arithmetic op"),
            })
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{toy_schema, toy_snapshot, CANONICAL_PROGRAM};
    use crate::qas::parse;

    fn session() -> Session {
        let s = toy_schema();
        let db = toy_snapshot(&s);
        Session::new(Arc::new(s), db)
    }

    fn run(src: &str) -> (ExecOutcome, Session) {
        let mut s = session();
        let out = execute(&parse(src).unwrap(), &mut s);
        (out, s)
    }

    #[test]
    fn canonical_sets_clk_weight() {
        let (out, s) = run(CANONICAL_PROGRAM);
        assert_eq!(out.status, ExecStatus::Ok);
        assert!(out.error.is_none());
        assert_eq!(out.mutations, 1);
        assert_eq!(s.db.find_by_name("Net", "clk").unwrap().fields["weight"], 2);
        assert_eq!(s.db.find_by_name("Net", "rst").unwrap().fields["weight"], 1);
        assert_eq!(s.tool_calls, 1);
    }

    #[test]
    fn unknown_method_line() {
        let (out, _) = run("block = design.getBlock()\nnet = block.findNet(\"clk\")\nnet.getArea()\n");
        assert_eq!(out.status, ExecStatus::RuntimeError);
        let e = out.error.unwrap();
        assert_eq!((e.kind, e.line), (ErrorKind::UnknownMethod, 3));
    }

    #[test]
    fn null_access_and_name_error() {
        let (out, _) = run("net = design.getBlock().findNet(\"nope\")\nnet.setWeight(2)\n");
        assert_eq!(out.error.unwrap().kind, ErrorKind::NullAccess);
        let (out, _) = run("x = y\n");
        assert_eq!(out.error.unwrap().kind, ErrorKind::NameError);
        let (out, _) = run("import odb.XTools\n");
        assert_eq!(out.error.unwrap().kind, ErrorKind::NameError);
    }

    #[test]
    fn enums() {
        let (out, s) = run(
            "import odb\nfor i in design.getBlock().getInsts():\n    i.setPlacementStatus(odb.PlacementStatus.FIRM)\n",
        );
        assert!(out.is_ok(), "{out:?}");
        assert_eq!(out.mutations, 2);
        assert_eq!(s.db.find_by_name("Inst", "u_ff0").unwrap().fields["placementStatus"], "FIRM");
        let (out, _) = run("import odb\nx = odb.PlacementStatus.GONE\n");
        assert_eq!(out.error.unwrap().kind, ErrorKind::EnumError);
        let (out, _) = run("for i in design.getBlock().getInsts():\n    i.setPlacementStatus(\"FIRM\")\n");
        assert_eq!(out.error.unwrap().kind, ErrorKind::EnumError);
    }

    #[test]
    fn output_and_arithmetic() {
        let (out, _) = run("b = design.getBlock()\nprint(len(b.getNets()), 7 / 2, 2 ** 3, -7 % 3)\nfor n in b.getNets():\n    print(n.getName())\n");
        assert_eq!(out.output, vec!["3 3.5 8 2", "clk", "rst", "data"]);
        let (out, _) = run("print(\"n: \" + len(design.getBlock().getNets()))\n");
        assert_eq!(out.error.unwrap().kind, ErrorKind::TypeError);
        let (out, _) = run("x = 1 / 0\n");
        assert_eq!(out.error.unwrap().kind, ErrorKind::TypeError);
        let (out, _) = run("x = 9223372036854775807 + 1\n");
        assert_eq!(out.error.unwrap().kind, ErrorKind::TypeError);
    }

    #[test]
    fn attribute_reads() {
        let (out, _) = run("for n in design.getBlock().getNets():\n    print(n.weight)\n");
        assert_eq!(out.output, vec!["1", "1", "1"]);
        let (out, _) = run("x = design.getBlock().area\n");
        assert_eq!(out.error.unwrap().kind, ErrorKind::BadAttribute);
    }

    #[test]
    fn step_budget_timeout() {
        let (out, _) = run("x = 0\nfor i in range(1000000000):\n    x = x + 1\n");
        assert_eq!(out.status, ExecStatus::Timeout);
        assert!(out.error.is_none());
        assert_eq!(out.exit_code(), 3);
        let mut s = session().with_step_budget(3);
        assert_eq!(execute(&parse("x = 1\ny = 2\nz = 3\n").unwrap(), &mut s).status, ExecStatus::Ok);
        assert_eq!(execute(&parse("x = 1\ny = 2\nz = 3\nw = 4\n").unwrap(), &mut s).status, ExecStatus::Timeout);
    }

    #[test]
    fn wall_budget_timeout() {
        let mut s = session().with_step_budget(u64::MAX).with_wall_budget(Duration::from_millis(20));
        let out = execute(&parse("x = 0\nfor i in range(1000000000):\n    x = x + 1\n").unwrap(), &mut s);
        assert_eq!(out.status, ExecStatus::Timeout);
    }

    #[test]
    fn tool_calls_once_per_execute() {
        let mut s = session();
        for src in ["x = 1\n", "x = y\n", "for i in range(1000000000):\n    x = i\n"] {
            execute(&parse(src).unwrap(), &mut s);
        }
        assert_eq!(s.tool_calls, 3);
    }

    #[test]
    fn snapshot_and_restore() {
        let mut s = session();
        let before = snapshot_state(&s);
        restore_state(&mut s, before.clone());
        assert_eq!(s.db, before);
        execute(&parse(CANONICAL_PROGRAM).unwrap(), &mut s);
        assert_ne!(s.db, before);
        restore_state(&mut s, before.clone());
        assert_eq!(s.db, before);
        assert_eq!(s.tool_calls, 1);
    }

    #[test]
    fn shared_session_sees_mutations() {
        let mut s = session();
        execute(&parse(CANONICAL_PROGRAM).unwrap(), &mut s);
        let out = execute(&parse("print(design.getBlock().findNet(\"clk\").weight)\n").unwrap(), &mut s);
        assert_eq!(out.output, vec!["2"]);
    }

    #[test]
    fn crash_fault_is_deterministic() {
        let runs = |seed| {
            let mut s = session().with_crash_fault(0.5, seed);
            (0..20).map(|_| execute(&parse("x = 1\n").unwrap(), &mut s).is_ok()).collect::<Vec<_>>()
        };
        assert_eq!(runs(3), runs(3));
        assert!(runs(3).iter().any(|ok| !ok));
        let mut s = session();
        assert!((0..50).all(|_| execute(&parse("x = 1\n").unwrap(), &mut s).is_ok()));
    }
}
