use std::collections::BTreeSet;

use super::{Issue, IssueCode};
use crate::depgraph::{DepGraph, Edge, NodeKind};
use crate::qas::infer::{AttrAccess, DerefKind};
use crate::qas::{parse, CallSite, InferredType, Loc, SyntaxFailure, TypedScript};
use crate::retrieval::EvidenceSet;
use crate::schema::{ApiSchema, TypeRef};

pub(crate) fn syntax_issues(f: &SyntaxFailure) -> Vec<Issue> {
    f.errors.iter().map(|e| Issue::new(IssueCode::L1_SYNTAX, Loc::new(e.line, e.column), e.message.clone())).collect()
}

/// Layer 1 on its own: every syntax error, or nothing.
pub fn verify_syntax(source: &str) -> Vec<Issue> {
    match parse(source) {
        Ok(_) => Vec::new(),
        Err(f) => syntax_issues(&f),
    }
}

fn bases(t: &InferredType) -> BTreeSet<&str> {
    t.candidates().map(|c| c.into_iter().map(|t| t.base.as_str()).collect()).unwrap_or_default()
}

/// Object endpoints the check can reason about.
fn edge_types<'g>(g: &'g DepGraph, e: &Edge, schema: &ApiSchema) -> Option<(&'g str, &'g str)> {
    let s = g.node(&e.src)?;
    let d = g.node(&e.dst)?;
    if s.kind != NodeKind::Object || d.kind != NodeKind::Object {
        return None;
    }
    let (st, dt) = (s.type_str(), d.type_str());
    (schema.is_object_type(st) && schema.is_object_type(dt)).then_some((st, dt))
}

fn call_realizes(c: &CallSite, src: &str, dst: &str, schema: &ApiSchema) -> bool {
    match c.receiver_type.candidates() {
        Some(_) => bases(&c.receiver_type).contains(src) && bases(&c.returns).contains(dst),
        None => schema.lookup_method(src, &c.method).is_some_and(|m| m.returns.base == dst),
    }
}

fn attr_realizes(a: &AttrAccess, src: &str, dst: &str) -> bool {
    bases(&a.receiver_type).contains(src) && a.resolved.as_ref().is_some_and(|t| t.base == dst)
}

/// Locations at which an acquisition `src -> dst` happens.
fn realizations(ts: &TypedScript, src: &str, dst: &str, schema: &ApiSchema) -> Vec<Loc> {
    let mut locs: Vec<Loc> = ts
        .call_sites
        .iter()
        .filter(|c| call_realizes(c, src, dst, schema))
        .map(|c| c.loc)
        .chain(ts.attr_accesses.iter().filter(|a| attr_realizes(a, src, dst)).map(|a| a.loc))
        .collect();
    locs.sort();
    locs
}

fn edges_into(g: &DepGraph, ty: &str) -> Vec<String> {
    g.acquisition_edges().filter(|e| g.node(&e.dst).is_some_and(|n| n.type_str() == ty)).map(Edge::id).collect()
}

/// Layer 2: definite definition, edge realization in graph order,
/// attribute existence, null discipline.
pub fn verify_causal_flow(ts: &TypedScript, g: &DepGraph, schema: &ApiSchema) -> Vec<Issue> {
    let mut out = Vec::new();
    for u in ts.var_uses.iter().filter(|u| !u.defined) {
        out.push(
            Issue::new(
                IssueCode::L2_USE_BEFORE_DEF,
                u.loc,
                format!("'{}' is not defined on every path to this use", u.name),
            )
            .with_hint(format!("assign '{}' before using it", u.name)),
        );
    }

    // earliest realization per edge, constrained to follow its predecessor
    let order = g.topo_order().map(|ns| ns.iter().map(|n| n.id.clone()).collect::<Vec<_>>()).unwrap_or_default();
    let mut realized_at: std::collections::BTreeMap<String, Loc> = Default::default();
    for id in &order {
        for e in g.acquisition_edges().filter(|e| &e.src == id) {
            let Some((st, dt)) = edge_types(g, e, schema) else { continue };
            let after = realized_at.get(&e.src).copied();
            let locs = realizations(ts, st, dt, schema);
            let hit = locs.iter().copied().find(|l| after.is_none_or(|a| *l >= a));
            match hit {
                Some(l) => {
                    realized_at.insert(e.dst.clone(), l);
                }
                None => {
                    let how = e.via.as_deref().map(|v| format!(" (e.g. via {st}.{v})")).unwrap_or_default();
                    let msg = if locs.is_empty() {
                        format!("no call acquires {dt} from {st}")
                    } else {
                        format!("{dt} is acquired from {st} before {st} itself is available")
                    };
                    out.push(
                        Issue::new(IssueCode::L2_EDGE_UNREALIZED, Loc::new(1, 1), msg)
                            .with_region(vec![e.id()])
                            .with_hint(format!("acquire {dt} from {st}{how}")),
                    );
                }
            }
        }
    }

    for a in &ts.attr_accesses {
        if a.resolved.is_none() && a.receiver_type.candidates().is_some() {
            out.push(
                Issue::new(
                    IssueCode::L2_BAD_ATTRIBUTE,
                    a.loc,
                    format!("{} has no attribute '{}'", a.receiver_type, a.name),
                )
                .with_region(bases(&a.receiver_type).into_iter().flat_map(|b| edges_into(g, b)).collect()),
            );
        }
    }

    let guard_hint = |e: &str| format!("guard with `if {e} != None:`");
    for c in ts.call_sites.iter().filter(|c| c.receiver_type.is_nullable()) {
        out.push(
            Issue::new(
                IssueCode::L2_NULL_UNGUARDED,
                c.loc,
                format!("'{}' may be None when calling {}", c.receiver_expr, c.method),
            )
            .with_region(bases(&c.receiver_type).into_iter().flat_map(|b| edges_into(g, b)).collect())
            .with_hint(guard_hint(&c.receiver_expr)),
        );
    }
    for a in ts.attr_accesses.iter().filter(|a| a.receiver_type.is_nullable()) {
        out.push(
            Issue::new(
                IssueCode::L2_NULL_UNGUARDED,
                a.loc,
                format!("'{}' may be None when reading {}", a.receiver_expr, a.name),
            )
            .with_hint(guard_hint(&a.receiver_expr)),
        );
    }
    for d in &ts.nullable_derefs {
        let what = match d.kind {
            DerefKind::Iterate => "iterated",
            DerefKind::Index => "indexed",
        };
        out.push(
            Issue::new(IssueCode::L2_NULL_UNGUARDED, d.loc, format!("'{}' may be None when {what}", d.expr))
                .with_hint(guard_hint(&d.expr)),
        );
    }
    out
}

fn describe(t: &TypeRef) -> &'static str {
    if t.is_none_literal() {
        "None"
    } else if t.many {
        "a collection"
    } else {
        "a primitive value"
    }
}

/// Why `arg` cannot be passed where `param` is expected, if it cannot.
fn arg_mismatch(arg: &InferredType, param: &TypeRef) -> Option<String> {
    let check = |t: &TypeRef| -> Option<String> {
        if t.is_none_literal() {
            return (!param.nullable).then(|| format!("expected {param}, got None"));
        }
        if t.nullable && !param.nullable {
            return Some(format!("expected {param}, got possibly-None {t}"));
        }
        if t.many != param.many {
            return Some(format!("expected {param}, got {t}"));
        }
        let widened = t.base == "int" && param.base == "float";
        (t.base != param.base && !widened).then(|| format!("expected {param}, got {t}"))
    };
    match arg {
        InferredType::Unknown => Some(format!("expected {param}, argument type cannot be inferred")),
        InferredType::Known(t) => check(t),
        InferredType::Ambiguous(s) => s.iter().find_map(check),
    }
}

/// Graph targets an API issue concerns: edges acquired via the method,
/// edges leaving the receiver types, then actions naming the method.
fn call_region(g: &DepGraph, recv: &BTreeSet<&str>, method: &str) -> Vec<String> {
    let via: Vec<String> = g.acquisition_edges().filter(|e| e.via.as_deref() == Some(method)).map(Edge::id).collect();
    if !via.is_empty() {
        return via;
    }
    let actions: Vec<String> = g.action_nodes().filter(|a| a.action_method() == method).map(|a| a.id.clone()).collect();
    if !actions.is_empty() {
        return actions;
    }
    let on_receiver: Vec<String> = g
        .action_nodes()
        .filter(|a| g.action_sources(&a.id).iter().any(|n| recv.contains(n.type_str())))
        .map(|a| a.id.clone())
        .collect();
    if !on_receiver.is_empty() {
        return on_receiver;
    }
    g.acquisition_edges()
        .filter(|e| g.node(&e.src).is_some_and(|n| recv.contains(n.type_str())))
        .map(Edge::id)
        .collect()
}

fn check_call(c: &CallSite, schema: &ApiSchema, g: &DepGraph, out: &mut Vec<Issue>) {
    let recv = bases(&c.receiver_type);
    let region = call_region(g, &recv, &c.method);
    let unknown = |msg: String| Issue::new(IssueCode::L3_UNKNOWN_METHOD, c.loc, msg).with_region(region.clone());
    let Some(cands) = c.receiver_type.candidates() else {
        let owners = schema.types_with_method(&c.method);
        let hint = if owners.is_empty() {
            String::new()
        } else {
            format!("{} is declared on {}", c.method, owners.join(", "))
        };
        out.push(
            unknown(format!("cannot resolve the receiver of {} ('{}')", c.method, c.receiver_expr)).with_hint(hint),
        );
        return;
    };
    let mut sigs = Vec::new();
    for t in cands {
        let t = t.non_null();
        if t.many || t.is_primitive() || schema.is_enum(&t.base) {
            out.push(unknown(format!("{} {} has no method {}", describe_full(&t, schema), t, c.method)));
            return;
        }
        match schema.lookup_method(&t.base, &c.method) {
            Some(m) => sigs.push((t.base.clone(), m)),
            None => {
                let owners = schema.types_with_method(&c.method);
                let hint = if owners.is_empty() {
                    String::new()
                } else {
                    format!("{} is declared on {}", c.method, owners.join(", "))
                };
                out.push(unknown(format!("{} has no method {}", t.base, c.method)).with_hint(hint));
                return;
            }
        }
    }
    for (ty, m) in sigs {
        if m.params.len() != c.args.len() {
            out.push(
                Issue::new(
                    IssueCode::L3_ARITY,
                    c.loc,
                    format!("{ty}.{} takes {} argument(s), got {}", m.name, m.params.len(), c.args.len()),
                )
                .with_region(region.clone()),
            );
            continue;
        }
        for (i, (a, p)) in c.args.iter().zip(&m.params).enumerate() {
            if let Some(why) = arg_mismatch(a, &p.ty) {
                out.push(
                    Issue::new(
                        IssueCode::L3_ARG_TYPE,
                        c.loc,
                        format!("argument {} '{}' of {ty}.{}: {why}", i + 1, p.name, m.name),
                    )
                    .with_region(region.clone()),
                );
            }
        }
    }
}

fn describe_full(t: &TypeRef, schema: &ApiSchema) -> &'static str {
    if schema.is_enum(&t.base) && !t.many {
        "enum"
    } else {
        describe(t)
    }
}

/// Layer 3: schema conformance of every call, argument and enum constant,
/// plus evidence support as a warning.
pub fn verify_api_alignment(ts: &TypedScript, schema: &ApiSchema, evidence: &EvidenceSet, g: &DepGraph) -> Vec<Issue> {
    let mut out = Vec::new();
    for c in &ts.call_sites {
        check_call(c, schema, g, &mut out);
    }
    for f in &ts.function_calls {
        let bad = |msg: String| Issue::new(IssueCode::L3_ARG_TYPE, f.loc, msg);
        match f.name.as_str() {
            "print" => {}
            "len" => match f.args.as_slice() {
                [InferredType::Known(t)] if t.many && !t.nullable => {}
                [a] => out.push(bad(format!("len expects a collection, got {a}"))),
                _ => out.push(Issue::new(
                    IssueCode::L3_ARITY,
                    f.loc,
                    format!("len takes 1 argument, got {}", f.args.len()),
                )),
            },
            "range" => match f.args.as_slice() {
                [InferredType::Known(t)] if *t == TypeRef::named("int") => {}
                [a] => out.push(bad(format!("range expects int, got {a}"))),
                _ => out.push(Issue::new(
                    IssueCode::L3_ARITY,
                    f.loc,
                    format!("range takes 1 argument, got {}", f.args.len()),
                )),
            },
            other => out.push(Issue::new(IssueCode::L3_UNKNOWN_METHOD, f.loc, format!("unknown function '{other}'"))),
        }
    }
    let sets = schema.known_sets();
    for r in &ts.enum_refs {
        if !sets.enum_constants.contains(&r.key) {
            let hint = r
                .key
                .split_once('.')
                .and_then(|(e, _)| schema.enums.get(e))
                .map(|cs| format!("known constants: {}", cs.join(", ")))
                .unwrap_or_default();
            out.push(
                Issue::new(IssueCode::L3_UNKNOWN_ENUM, r.loc, format!("unknown enum constant '{}'", r.path))
                    .with_hint(hint),
            );
        } else if !r.module_imported && r.path != r.key {
            let module = r.path.split('.').next().unwrap_or_default();
            out.push(
                Issue::new(IssueCode::L3_UNKNOWN_ENUM, r.loc, format!("'{}' used without importing {module}", r.path))
                    .with_hint(format!("add `import {module}`")),
            );
        }
    }
    if !evidence.is_empty() {
        let paths = evidence.api_paths();
        let mut seen = BTreeSet::new();
        for c in &ts.call_sites {
            let Some(p) = c.api_path() else { continue };
            let ty = p.split('.').next().unwrap_or_default();
            if schema.lookup_method(ty, &c.method).is_none() || paths.contains(p.as_str()) || !seen.insert(p.clone()) {
                continue;
            }
            let recv: BTreeSet<&str> = [ty].into();
            out.push(
                Issue::new(IssueCode::L3_NOT_IN_EVIDENCE, c.loc, format!("{p} is not supported by retrieved evidence"))
                    .with_region(call_region(g, &recv, &c.method)),
            );
        }
    }
    out
}
