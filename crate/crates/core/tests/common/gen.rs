//! Random schema-conformant programs: every nullable result is guarded,
//! every collection is iterated, every argument has its declared type.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use structverify::schema::{ApiSchema, MethodSig, TypeRef};

const NAMES: [&str; 8] = ["clk", "reset", "req_val", "resp_rdy", "_1000_", "_1017_", "req_msg[3]", "missing"];

struct Gen<'a> {
    schema: &'a ApiSchema,
    rng: &'a mut ChaCha8Rng,
    lines: Vec<String>,
    uses_module: bool,
    next: usize,
    loops: usize,
}

#[derive(Clone)]
struct Var {
    name: String,
    ty: String,
}

impl Gen<'_> {
    fn fresh(&mut self, ty: &str) -> String {
        self.next += 1;
        let mut stem: String = ty.chars().take(1).flat_map(char::to_lowercase).chain(ty.chars().skip(1)).collect();
        if structverify::qas::KEYWORDS.contains(&stem.as_str()) {
            stem.push('x');
        }
        format!("{stem}{}", self.next)
    }

    fn arg(&mut self, ty: &TypeRef) -> String {
        match ty.base.as_str() {
            "string" => format!("\"{}\"", NAMES.choose(self.rng).unwrap()),
            "int" => self.rng.gen_range(0..10).to_string(),
            "float" => format!("{:.1}", self.rng.gen_range(0.0..4.0)),
            "bool" => if self.rng.gen_bool(0.5) { "True" } else { "False" }.to_string(),
            e if self.schema.enums.contains_key(e) => {
                let module = self.schema.modules.iter().next().expect("schema has a module").clone();
                self.uses_module = true;
                let k = self.schema.enums[e].choose(self.rng).unwrap();
                format!("{module}.{e}.{k}")
            }
            other => panic!("no literal for {other}"),
        }
    }

    fn call(&mut self, m: &MethodSig) -> Option<String> {
        let mut args = Vec::new();
        for p in &m.params {
            if !(p.ty.is_primitive() || self.schema.enums.contains_key(&p.ty.base)) || p.ty.many {
                return None;
            }
            args.push(self.arg(&p.ty));
        }
        Some(format!("{}({})", m.name, args.join(", ")))
    }

    fn block(&mut self, scope: &[Var], indent: usize, depth: usize) {
        let n = self.rng.gen_range(1..=3);
        let mut scope = scope.to_vec();
        for _ in 0..n {
            if let Some(v) = self.stmt(&scope, indent, depth) {
                scope.push(v);
            }
        }
    }

    fn stmt(&mut self, scope: &[Var], indent: usize, depth: usize) -> Option<Var> {
        let pad = "    ".repeat(indent);
        let recv = scope.choose(self.rng)?.clone();
        let decl = self.schema.types.get(&recv.ty)?;
        if !decl.attributes.is_empty() && self.rng.gen_bool(0.1) {
            let attr = decl.attributes.keys().collect::<Vec<_>>().choose(self.rng).map(|s| s.to_string())?;
            self.lines.push(format!("{pad}print({}.{attr})", recv.name));
            return None;
        }
        let methods: Vec<&MethodSig> = decl.methods.values().collect();
        let m = (*methods.choose(self.rng)?).clone();
        let call = self.call(&m)?;
        let expr = format!("{}.{call}", recv.name);
        let ret = &m.returns;
        if ret.base == "void" {
            self.lines.push(format!("{pad}{expr}"));
            return None;
        }
        if !self.schema.is_object_type(&ret.base) {
            self.lines.push(format!("{pad}print({expr})"));
            return None;
        }
        if ret.many {
            if depth >= 2 || self.loops >= 1 {
                self.lines.push(format!("{pad}print(len({expr}))"));
                return None;
            }
            self.loops += 1;
            let v = self.fresh(&ret.base);
            self.lines.push(format!("{pad}for {v} in {expr}:"));
            self.block(&[recv, Var { name: v, ty: ret.base.clone() }], indent + 1, depth + 1);
            return None;
        }
        let v = self.fresh(&ret.base);
        self.lines.push(format!("{pad}{v} = {expr}"));
        let var = Var { name: v.clone(), ty: ret.base.clone() };
        if ret.nullable {
            self.lines.push(format!("{pad}if {v} != None:"));
            let mut inner = scope.to_vec();
            inner.push(var);
            self.block(&inner, indent + 1, depth + 1);
            return None;
        }
        Some(var)
    }
}

/// A seeded random program; always prints at least once.
pub fn random_program(schema: &ApiSchema, rng: &mut ChaCha8Rng) -> String {
    let scope: Vec<Var> = schema.roots.iter().map(|(n, t)| Var { name: n.clone(), ty: t.clone() }).collect();
    let mut g = Gen { schema, rng, lines: Vec::new(), uses_module: false, next: 0, loops: 0 };
    let mut scope = scope;
    let n = g.rng.gen_range(2..=6);
    for _ in 0..n {
        if let Some(v) = g.stmt(&scope, 0, 0) {
            scope.push(v);
        }
    }
    let last = scope.last().expect("schema has a root").name.clone();
    g.lines.push(format!("print({last} != None)"));
    let mut out = String::new();
    if g.uses_module {
        let module = schema.modules.iter().next().expect("schema has a module");
        out.push_str(&format!("import {module}\n"));
    }
    out.push_str(&g.lines.join("\n"));
    out.push('\n');
    out
}
