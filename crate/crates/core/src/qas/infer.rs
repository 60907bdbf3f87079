//! Forward dataflow type inference over scripts.
//!
//! Roots seed the environment. Assignments from calls bind the declared
//! return type, loops bind element types, and branch joins widen. The
//! `if v != None:` idiom discharges nullability inside the guarded block.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::ast::{BinOp, Expr, ExprKind, Loc, Script, Stmt};
use crate::schema::{ApiSchema, TypeRef};

pub const BUILTINS: [&str; 3] = ["print", "len", "range"];

/// Result of inferring an expression's type.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InferredType {
    Known(TypeRef),
    /// Branches disagree; the value has one of these types.
    Ambiguous(BTreeSet<TypeRef>),
    /// Inference failed outright.
    Unknown,
}

impl InferredType {
    pub fn known(&self) -> Option<&TypeRef> {
        match self {
            InferredType::Known(t) => Some(t),
            _ => None,
        }
    }

    pub fn is_unknown(&self) -> bool {
        !matches!(self, InferredType::Known(_))
    }

    pub fn is_nullable(&self) -> bool {
        match self {
            InferredType::Known(t) => t.nullable,
            InferredType::Ambiguous(s) => s.iter().any(|t| t.nullable),
            InferredType::Unknown => false,
        }
    }

    /// The possible types, if any information survives.
    pub fn candidates(&self) -> Option<Vec<&TypeRef>> {
        match self {
            InferredType::Known(t) => Some(vec![t]),
            InferredType::Ambiguous(s) => Some(s.iter().collect()),
            InferredType::Unknown => None,
        }
    }

    pub fn discharged(&self) -> InferredType {
        match self {
            InferredType::Known(t) => InferredType::Known(t.non_null()),
            InferredType::Ambiguous(s) => InferredType::from_set(s.iter().map(TypeRef::non_null).collect()),
            InferredType::Unknown => InferredType::Unknown,
        }
    }

    fn from_set(set: BTreeSet<TypeRef>) -> InferredType {
        if set.len() == 1 {
            InferredType::Known(set.into_iter().next().unwrap())
        } else if set.is_empty() {
            InferredType::Unknown
        } else {
            InferredType::Ambiguous(set)
        }
    }

    /// Join at a control-flow merge point.
    pub fn merge(&self, other: &InferredType) -> InferredType {
        use InferredType::*;
        match (self, other) {
            (a, b) if a == b => a.clone(),
            (Unknown, _) | (_, Unknown) => Unknown,
            _ => {
                let mut all: Vec<TypeRef> = Vec::new();
                for t in self.candidates().unwrap().into_iter().chain(other.candidates().unwrap()) {
                    all.push(t.clone());
                }
                let has_none = all.iter().any(TypeRef::is_none_literal);
                let mut set: BTreeSet<TypeRef> = all
                    .into_iter()
                    .filter(|t| !t.is_none_literal())
                    .map(|t| t.with_nullable(t.nullable || has_none))
                    .collect();
                if set.is_empty() {
                    return Known(TypeRef::none());
                }
                // same shape differing only in nullability collapses
                let shapes: BTreeSet<(String, bool)> = set.iter().map(|t| (t.base.clone(), t.many)).collect();
                if shapes.len() == 1 {
                    let nullable = set.iter().any(|t| t.nullable);
                    let t = set.iter().next().unwrap().with_nullable(nullable);
                    return Known(t);
                }
                if set.iter().any(|t| t.nullable) {
                    set = set.into_iter().map(|t| t.with_nullable(true)).collect();
                }
                InferredType::from_set(set)
            }
        }
    }
}

impl std::fmt::Display for InferredType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InferredType::Known(t) => write!(f, "{t}"),
            InferredType::Ambiguous(s) => {
                let parts: Vec<String> = s.iter().map(|t| t.to_string()).collect();
                write!(f, "{}", parts.join(" | "))
            }
            InferredType::Unknown => f.write_str("UNKNOWN"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CallSite {
    pub receiver_expr: String,
    pub receiver_type: InferredType,
    pub method: String,
    pub args: Vec<InferredType>,
    /// Normalized source text of each argument.
    pub arg_text: Vec<String>,
    pub returns: InferredType,
    pub loc: Loc,
}

impl CallSite {
    /// `Type.method` when the receiver resolves to a single object type.
    pub fn api_path(&self) -> Option<String> {
        let t = self.receiver_type.known()?;
        (!t.many).then(|| format!("{}.{}", t.base, self.method))
    }
}

/// Call of a free function (builtin or otherwise).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FunctionCall {
    pub name: String,
    pub args: Vec<InferredType>,
    pub loc: Loc,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarUse {
    pub name: String,
    /// Whether a definition dominates this use.
    pub defined: bool,
    pub loc: Loc,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttrAccess {
    pub receiver_expr: String,
    pub receiver_type: InferredType,
    pub name: String,
    pub resolved: Option<TypeRef>,
    pub loc: Loc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DerefKind {
    Iterate,
    Index,
}

/// Iteration or indexing of a possibly-null collection.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NullableDeref {
    pub expr: String,
    pub kind: DerefKind,
    pub loc: Loc,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnumRef {
    /// Full dotted text as written.
    pub path: String,
    /// `Enum.CONST` after stripping a module prefix.
    pub key: String,
    /// Whether the leading module segment was imported.
    pub module_imported: bool,
    pub loc: Loc,
}

/// An operator application whose operand types are known and incompatible.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IllTypedOp {
    pub expr: String,
    pub lhs: InferredType,
    pub rhs: Option<InferredType>,
    /// Inside an argument of `print`.
    pub in_output: bool,
    pub loc: Loc,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatementEnv {
    pub loc: Loc,
    pub env: BTreeMap<String, InferredType>,
}

/// A script annotated with inferred types and the sets the verifier and
/// the uncertainty estimator consume.
#[derive(Debug, Clone, PartialEq)]
pub struct TypedScript {
    pub script: Script,
    /// Environment in effect before each statement.
    pub env_per_statement: Vec<StatementEnv>,
    /// Method-call sites in source order: C(x).
    pub call_sites: Vec<CallSite>,
    pub function_calls: Vec<FunctionCall>,
    pub var_uses: Vec<VarUse>,
    pub attr_accesses: Vec<AttrAccess>,
    pub nullable_derefs: Vec<NullableDeref>,
    /// Dotted import names: I(x).
    pub imports: Vec<String>,
    /// Candidate enum references: E(x).
    pub enum_refs: Vec<EnumRef>,
    pub ill_typed_ops: Vec<IllTypedOp>,
    /// Number of `print` calls.
    pub output_calls: usize,
}

impl TypedScript {
    /// M(x) as method names with multiplicity.
    pub fn method_multiset(&self) -> BTreeMap<String, usize> {
        let mut m = BTreeMap::new();
        for c in &self.call_sites {
            *m.entry(c.method.clone()).or_insert(0) += 1;
        }
        m
    }

    pub fn env_at(&self, loc: Loc) -> Option<&BTreeMap<String, InferredType>> {
        self.env_per_statement.iter().find(|e| e.loc == loc).map(|e| &e.env)
    }

    /// Environment after the last top-level statement is not tracked; this
    /// returns the type a variable had at its last recorded statement.
    pub fn last_type_of(&self, var: &str) -> Option<&InferredType> {
        self.env_per_statement.iter().rev().find_map(|e| e.env.get(var))
    }
}

#[derive(Debug, Clone, PartialEq)]
struct VarState {
    ty: InferredType,
    definite: bool,
}

type Env = BTreeMap<String, VarState>;

fn merge_env(a: &Env, b: &Env) -> Env {
    let mut out = Env::new();
    for (k, va) in a {
        match b.get(k) {
            Some(vb) => {
                out.insert(k.clone(), VarState { ty: va.ty.merge(&vb.ty), definite: va.definite && vb.definite });
            }
            None => {
                out.insert(k.clone(), VarState { ty: va.ty.clone(), definite: false });
            }
        }
    }
    for (k, vb) in b {
        if !a.contains_key(k) {
            out.insert(k.clone(), VarState { ty: vb.ty.clone(), definite: false });
        }
    }
    out
}

/// `v != None` (then-branch) or `v == None` (else-branch) guards.
fn null_guard(cond: &Expr) -> Option<(&str, bool)> {
    let ExprKind::Binary { op, lhs, rhs } = &cond.kind else { return None };
    let var = match (&lhs.kind, &rhs.kind) {
        (ExprKind::Name(v), ExprKind::None) | (ExprKind::None, ExprKind::Name(v)) => v.as_str(),
        _ => return None,
    };
    match op {
        BinOp::Ne => Some((var, true)),
        BinOp::Eq => Some((var, false)),
        _ => None,
    }
}

/// A call returning `void` evaluates to `None`.
fn void_as_none(t: &TypeRef) -> TypeRef {
    if t.base == "void" && !t.many {
        TypeRef::none()
    } else {
        t.clone()
    }
}

fn is_numeric(t: &TypeRef) -> bool {
    !t.many && !t.nullable && (t.base == "int" || t.base == "float")
}

fn is_plain(t: &TypeRef, base: &str) -> bool {
    !t.many && !t.nullable && t.base == base
}

/// Result type of a binary operator on known operand types; `Err` when the
/// combination fails at runtime.
pub fn binary_result(op: BinOp, l: &TypeRef, r: &TypeRef) -> Result<TypeRef, ()> {
    use BinOp::*;
    match op {
        Eq | Ne => Ok(TypeRef::named("bool")),
        Lt | Le | Gt | Ge => {
            if (is_numeric(l) && is_numeric(r)) || (is_plain(l, "string") && is_plain(r, "string")) {
                Ok(TypeRef::named("bool"))
            } else {
                Err(())
            }
        }
        Add | Sub | Mul | Mod | Pow | Div => {
            if is_numeric(l) && is_numeric(r) {
                if op == Div || l.base == "float" || r.base == "float" {
                    Ok(TypeRef::named("float"))
                } else {
                    Ok(TypeRef::named("int"))
                }
            } else if op == Add && is_plain(l, "string") && is_plain(r, "string") {
                Ok(TypeRef::named("string"))
            } else if op == Mul
                && ((is_plain(l, "string") && is_plain(r, "int")) || (is_plain(l, "int") && is_plain(r, "string")))
            {
                Ok(TypeRef::named("string"))
            } else {
                Err(())
            }
        }
    }
}

struct Inferencer<'a> {
    schema: &'a ApiSchema,
    modules: BTreeSet<String>,
    record: bool,
    in_output: usize,
    out: TypedScript,
}

/// Annotate a parsed script with types inferred against `schema`.
pub fn infer_types(script: &Script, schema: &ApiSchema) -> TypedScript {
    let mut modules = BTreeSet::new();
    let mut imports = Vec::new();
    script.walk(|s| {
        if let Stmt::Import { path, .. } = s {
            modules.insert(path[0].clone());
            imports.push(path.join("."));
        }
    });
    let mut inf = Inferencer {
        schema,
        modules,
        record: true,
        in_output: 0,
        out: TypedScript {
            script: script.clone(),
            env_per_statement: Vec::new(),
            call_sites: Vec::new(),
            function_calls: Vec::new(),
            var_uses: Vec::new(),
            attr_accesses: Vec::new(),
            nullable_derefs: Vec::new(),
            imports,
            enum_refs: Vec::new(),
            ill_typed_ops: Vec::new(),
            output_calls: 0,
        },
    };
    let mut env = Env::new();
    for (name, ty) in &schema.roots {
        env.insert(name.clone(), VarState { ty: InferredType::Known(TypeRef::named(ty.clone())), definite: true });
    }
    inf.block(&script.statements, &mut env);
    inf.out
}

impl<'a> Inferencer<'a> {
    fn block(&mut self, stmts: &[Stmt], env: &mut Env) {
        for s in stmts {
            self.stmt(s, env);
        }
    }

    fn stmt(&mut self, s: &Stmt, env: &mut Env) {
        if self.record {
            self.out
                .env_per_statement
                .push(StatementEnv { loc: s.loc(), env: env.iter().map(|(k, v)| (k.clone(), v.ty.clone())).collect() });
        }
        match s {
            Stmt::Import { .. } => {}
            Stmt::Assign { target, value, .. } => {
                let ty = self.expr(value, env);
                env.insert(target.clone(), VarState { ty, definite: true });
            }
            Stmt::Expr { expr, .. } => {
                self.expr(expr, env);
            }
            Stmt::If { cond, then_body, else_body, .. } => {
                self.expr(cond, env);
                let guard = null_guard(cond);
                let mut then_env = env.clone();
                let mut else_env = env.clone();
                if let Some((var, then_side)) = guard {
                    let target = if then_side { &mut then_env } else { &mut else_env };
                    if let Some(v) = target.get_mut(var) {
                        v.ty = v.ty.discharged();
                    }
                }
                self.block(then_body, &mut then_env);
                if let Some(b) = else_body {
                    self.block(b, &mut else_env);
                }
                *env = merge_env(&then_env, &else_env);
            }
            Stmt::For { var, iter, body, loc } => {
                let it = self.expr(iter, env);
                let elem = self.element_of(&it, iter, *loc);
                let bind = |e: &mut Env| {
                    e.insert(var.clone(), VarState { ty: elem.clone(), definite: true });
                };
                let saved = self.record;
                self.record = false;
                let mut entry = env.clone();
                bind(&mut entry);
                for _ in 0..64 {
                    let mut out = entry.clone();
                    self.block(body, &mut out);
                    let mut next = merge_env(env, &out);
                    bind(&mut next);
                    if next == entry {
                        break;
                    }
                    entry = next;
                }
                self.record = saved;
                let mut out = entry.clone();
                self.block(body, &mut out);
                *env = merge_env(env, &out);
            }
        }
    }

    fn element_of(&mut self, it: &InferredType, iter: &Expr, loc: Loc) -> InferredType {
        if it.is_nullable() && self.record {
            self.out.nullable_derefs.push(NullableDeref { expr: iter.to_string(), kind: DerefKind::Iterate, loc });
        }
        match it {
            InferredType::Known(t) if t.many => InferredType::Known(t.element()),
            InferredType::Ambiguous(s) if s.iter().all(|t| t.many) => {
                InferredType::from_set(s.iter().map(TypeRef::element).collect())
            }
            _ => InferredType::Unknown,
        }
    }

    fn expr(&mut self, e: &Expr, env: &Env) -> InferredType {
        match &e.kind {
            ExprKind::Int(_) => InferredType::Known(TypeRef::named("int")),
            ExprKind::Float(_) => InferredType::Known(TypeRef::named("float")),
            ExprKind::Str(_) => InferredType::Known(TypeRef::named("string")),
            ExprKind::Bool(_) => InferredType::Known(TypeRef::named("bool")),
            ExprKind::None => InferredType::Known(TypeRef::none()),
            ExprKind::Name(n) => self.name(n, e.loc, env),
            ExprKind::Attr { object, name } => {
                if let Some(t) = self.enum_ref(e, env) {
                    return t;
                }
                let recv = self.expr(object, env);
                let resolved = self.attribute_type(&recv, name);
                if self.record {
                    self.out.attr_accesses.push(AttrAccess {
                        receiver_expr: object.to_string(),
                        receiver_type: recv,
                        name: name.clone(),
                        resolved: resolved.clone(),
                        loc: e.loc,
                    });
                }
                resolved.map(InferredType::Known).unwrap_or(InferredType::Unknown)
            }
            ExprKind::Call { func, args } => self.call(e, func, args, env),
            ExprKind::Index { object, index } => {
                let obj = self.expr(object, env);
                self.expr(index, env);
                if obj.is_nullable() && self.record {
                    self.out.nullable_derefs.push(NullableDeref {
                        expr: object.to_string(),
                        kind: DerefKind::Index,
                        loc: e.loc,
                    });
                }
                match &obj {
                    InferredType::Known(t) if t.many => InferredType::Known(t.element()),
                    _ => InferredType::Unknown,
                }
            }
            ExprKind::Neg(inner) => {
                let t = self.expr(inner, env);
                match t.known() {
                    Some(k) if is_numeric(k) => InferredType::Known(k.clone()),
                    Some(_) => {
                        self.ill_typed(e, t.clone(), None);
                        InferredType::Unknown
                    }
                    None => InferredType::Unknown,
                }
            }
            ExprKind::Binary { op, lhs, rhs } => {
                let l = self.expr(lhs, env);
                let r = self.expr(rhs, env);
                if matches!(op, BinOp::Eq | BinOp::Ne) {
                    return InferredType::Known(TypeRef::named("bool"));
                }
                match (l.known(), r.known()) {
                    (Some(lt), Some(rt)) => match binary_result(*op, lt, rt) {
                        Ok(t) => InferredType::Known(t),
                        Err(()) => {
                            self.ill_typed(e, l.clone(), Some(r.clone()));
                            InferredType::Unknown
                        }
                    },
                    _ => InferredType::Unknown,
                }
            }
        }
    }

    fn ill_typed(&mut self, e: &Expr, lhs: InferredType, rhs: Option<InferredType>) {
        if self.record {
            self.out.ill_typed_ops.push(IllTypedOp {
                expr: e.to_string(),
                lhs,
                rhs,
                in_output: self.in_output > 0,
                loc: e.loc,
            });
        }
    }

    fn name(&mut self, n: &str, loc: Loc, env: &Env) -> InferredType {
        if let Some(v) = env.get(n) {
            if self.record {
                self.out.var_uses.push(VarUse { name: n.to_string(), defined: v.definite, loc });
            }
            return v.ty.clone();
        }
        if self.modules.contains(n) {
            return InferredType::Unknown;
        }
        if self.record {
            self.out.var_uses.push(VarUse { name: n.to_string(), defined: false, loc });
        }
        InferredType::Unknown
    }

    /// Dotted chains of three or more names not rooted at a variable are
    /// enum references.
    fn enum_ref(&mut self, e: &Expr, env: &Env) -> Option<InferredType> {
        let path = e.dotted_path()?;
        if path.len() < 3 || env.contains_key(path[0]) {
            return None;
        }
        let module_imported = self.modules.contains(path[0]);
        let is_module = module_imported || self.schema.modules.contains(path[0]);
        let key = if is_module { path[1..].join(".") } else { path.join(".") };
        if self.record {
            self.out.enum_refs.push(EnumRef { path: path.join("."), key: key.clone(), module_imported, loc: e.loc });
        }
        if path.len() == 3 && is_module && self.schema.has_enum_constant(&key) {
            Some(InferredType::Known(TypeRef::named(path[1])))
        } else {
            Some(InferredType::Unknown)
        }
    }

    fn attribute_type(&self, recv: &InferredType, name: &str) -> Option<TypeRef> {
        let lookup = |t: &TypeRef| -> Option<TypeRef> {
            if t.many {
                return None;
            }
            self.schema.lookup_attribute(&t.base, name).cloned()
        };
        match recv {
            InferredType::Known(t) => lookup(t),
            InferredType::Ambiguous(s) => {
                let found: Option<Vec<TypeRef>> = s.iter().map(lookup).collect();
                let found = found?;
                let first = found[0].clone();
                found.iter().all(|t| *t == first).then_some(first)
            }
            InferredType::Unknown => None,
        }
    }

    fn call(&mut self, e: &Expr, func: &Expr, args: &[Expr], env: &Env) -> InferredType {
        match &func.kind {
            ExprKind::Attr { object, name } => {
                let recv = self.expr(object, env);
                let arg_types: Vec<InferredType> = args.iter().map(|a| self.expr(a, env)).collect();
                let returns = self.method_return(&recv, name);
                if self.record {
                    self.out.call_sites.push(CallSite {
                        receiver_expr: object.to_string(),
                        receiver_type: recv,
                        method: name.clone(),
                        args: arg_types,
                        arg_text: args.iter().map(|a| a.to_string()).collect(),
                        returns: returns.clone(),
                        loc: e.loc,
                    });
                }
                returns
            }
            ExprKind::Name(n) => {
                let is_print = n == "print";
                if is_print {
                    self.in_output += 1;
                }
                let arg_types: Vec<InferredType> = args.iter().map(|a| self.expr(a, env)).collect();
                if is_print {
                    self.in_output -= 1;
                }
                if self.record {
                    if is_print {
                        self.out.output_calls += 1;
                    }
                    self.out.function_calls.push(FunctionCall { name: n.clone(), args: arg_types, loc: e.loc });
                }
                match n.as_str() {
                    "print" => InferredType::Known(TypeRef::none()),
                    "len" => InferredType::Known(TypeRef::named("int")),
                    "range" => InferredType::Known(TypeRef::many("int")),
                    _ => InferredType::Unknown,
                }
            }
            _ => {
                self.expr(func, env);
                let arg_types: Vec<InferredType> = args.iter().map(|a| self.expr(a, env)).collect();
                if self.record {
                    self.out.function_calls.push(FunctionCall { name: func.to_string(), args: arg_types, loc: e.loc });
                }
                InferredType::Unknown
            }
        }
    }

    fn method_return(&self, recv: &InferredType, method: &str) -> InferredType {
        let lookup = |t: &TypeRef| -> Option<TypeRef> {
            if t.many {
                return None;
            }
            self.schema.lookup_method(&t.base, method).map(|m| void_as_none(&m.returns))
        };
        match recv {
            InferredType::Known(t) => lookup(t).map(InferredType::Known).unwrap_or(InferredType::Unknown),
            InferredType::Ambiguous(s) => {
                let rets: Option<BTreeSet<TypeRef>> = s.iter().map(lookup).collect();
                rets.map(InferredType::from_set).unwrap_or(InferredType::Unknown)
            }
            InferredType::Unknown => InferredType::Unknown,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{toy_schema, CANONICAL_PROGRAM};
    use crate::qas::parse;

    fn typed(src: &str) -> TypedScript {
        infer_types(&parse(src).unwrap(), &toy_schema())
    }

    #[test]
    fn canonical_dataflow() {
        let ts = typed(CANONICAL_PROGRAM);
        let net = TypeRef::named("Net");
        // before `if`: net nullable
        let env_if = &ts.env_per_statement[2].env;
        assert_eq!(env_if["block"], InferredType::Known(TypeRef::named("Block")));
        assert_eq!(env_if["net"], InferredType::Known(TypeRef::nullable("Net")));
        // inside the guard: discharged
        let set_weight = ts.call_sites.iter().find(|c| c.method == "setWeight").unwrap();
        assert_eq!(set_weight.receiver_type, InferredType::Known(net));
        let find = ts.call_sites.iter().find(|c| c.method == "findNet").unwrap();
        assert_eq!(find.returns, InferredType::Known(TypeRef::nullable("Net")));
    }

    #[test]
    fn loop_binds_element_type() {
        let ts = typed("block = design.getBlock()\nfor n in block.getNets():\n    n.getName()\n");
        let c = ts.call_sites.iter().find(|c| c.method == "getName").unwrap();
        assert_eq!(c.receiver_type, InferredType::Known(TypeRef::named("Net")));
    }

    #[test]
    fn undefined_receiver_is_unknown() {
        let ts = typed("net = block.findNet(\"clk\")\n");
        assert_eq!(ts.call_sites[0].receiver_type, InferredType::Unknown);
        assert!(!ts.var_uses[0].defined);
    }

    #[test]
    fn branch_conflict_is_ambiguous() {
        let src = "block = design.getBlock()\nif 1 == 1:\n    x = block.getNets()[0]\nelse:\n    x = block.getInsts()[0]\nx.getName()\n";
        let ts = typed(src);
        let c = ts.call_sites.iter().find(|c| c.method == "getName").unwrap();
        assert!(matches!(c.receiver_type, InferredType::Ambiguous(ref s) if s.len() == 2));
        assert_eq!(c.returns, InferredType::Known(TypeRef::named("string")));
    }

    #[test]
    fn none_merge_is_nullable() {
        let src = "block = design.getBlock()\nx = None\nif 1 == 1:\n    x = block.getNets()[0]\nx.getName()\n";
        let ts = typed(src);
        let c = ts.call_sites.iter().find(|c| c.method == "getName").unwrap();
        assert_eq!(c.receiver_type, InferredType::Known(TypeRef::nullable("Net")));
    }

    #[test]
    fn definition_in_one_branch_does_not_dominate() {
        let ts = typed("if 1 == 1:\n    b = design.getBlock()\nb.getNets()\n");
        let u = ts.var_uses.iter().find(|u| u.name == "b").unwrap();
        assert!(!u.defined);
        // the type still reaches
        assert_eq!(ts.call_sites[1].receiver_type, InferredType::Known(TypeRef::named("Block")));
    }

    #[test]
    fn loop_fixpoint_widens_entry_env() {
        let src = "block = design.getBlock()\nprev = None\nfor n in block.getNets():\n    if prev != None:\n        prev.getName()\n    prev = n\n";
        let ts = typed(src);
        let c = ts.call_sites.iter().find(|c| c.method == "getName").unwrap();
        assert_eq!(c.receiver_type, InferredType::Known(TypeRef::named("Net")));
    }

    #[test]
    fn enum_refs_and_imports() {
        let ts = typed("import odb\nx = odb.PlacementStatus.PLACED\ny = odb.PlacementStatus.LOCKED\nz = foo.Bar.BAZ\n");
        assert_eq!(ts.imports, vec!["odb"]);
        let keys: Vec<&str> = ts.enum_refs.iter().map(|e| e.key.as_str()).collect();
        assert_eq!(keys, vec!["PlacementStatus.PLACED", "PlacementStatus.LOCKED", "foo.Bar.BAZ"]);
        assert!(ts.var_uses.is_empty());
    }

    #[test]
    fn ill_typed_output() {
        let ts = typed("block = design.getBlock()\nprint(\"n: \" + len(block.getNets()))\n");
        assert_eq!(ts.ill_typed_ops.len(), 1);
        assert!(ts.ill_typed_ops[0].in_output);
    }

    #[test]
    fn method_multiset_counts_calls() {
        let ts = typed(CANONICAL_PROGRAM);
        assert_eq!(ts.method_multiset().values().sum::<usize>(), ts.script.method_call_count());
    }
}
