//! API schema: object types, method signatures, attributes, enums and the
//! variables a session pre-binds.
//!
//! The schema is the authoritative universe every other module checks
//! against. Loading validates all invariants up front and reports every
//! violation at once.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Names accepted as `TypeRef::base` without a declaration.
pub const PRIMITIVES: [&str; 5] = ["string", "int", "float", "bool", "void"];

fn is_false(b: &bool) -> bool {
    !*b
}

/// Reference to a type as it appears in a signature.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TypeRef {
    pub base: String,
    /// Collection-valued.
    #[serde(default, skip_serializing_if = "is_false")]
    pub many: bool,
    /// May be absent at runtime.
    #[serde(default, skip_serializing_if = "is_false")]
    pub nullable: bool,
}

impl TypeRef {
    pub fn named(base: impl Into<String>) -> Self {
        TypeRef { base: base.into(), many: false, nullable: false }
    }

    pub fn many(base: impl Into<String>) -> Self {
        TypeRef { base: base.into(), many: true, nullable: false }
    }

    pub fn nullable(base: impl Into<String>) -> Self {
        TypeRef { base: base.into(), many: false, nullable: true }
    }

    /// The type of the literal `None`.
    pub fn none() -> Self {
        TypeRef::nullable("void")
    }

    pub fn is_none_literal(&self) -> bool {
        self.base == "void" && self.nullable && !self.many
    }

    pub fn is_primitive(&self) -> bool {
        PRIMITIVES.contains(&self.base.as_str())
    }

    /// Element type of a collection; identity on scalars.
    pub fn element(&self) -> TypeRef {
        TypeRef { base: self.base.clone(), many: false, nullable: false }
    }

    pub fn non_null(&self) -> TypeRef {
        TypeRef { nullable: false, ..self.clone() }
    }

    pub fn with_nullable(&self, nullable: bool) -> TypeRef {
        TypeRef { nullable, ..self.clone() }
    }
}

impl fmt::Display for TypeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.many {
            write!(f, "[{}]", self.base)?;
        } else {
            write!(f, "{}", self.base)?;
        }
        if self.nullable {
            write!(f, "?")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: TypeRef,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MethodSig {
    pub name: String,
    pub params: Vec<Param>,
    pub returns: TypeRef,
    /// Action methods that change design state.
    pub mutates: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct TypeDecl {
    pub methods: BTreeMap<String, MethodSig>,
    pub attributes: BTreeMap<String, TypeRef>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ApiSchema {
    pub version: String,
    /// Importable module names (`import odb`).
    pub modules: BTreeSet<String>,
    /// Variables pre-bound in a session, mapped to their type.
    pub roots: BTreeMap<String, String>,
    /// Enum name to constant names, in declaration order.
    pub enums: BTreeMap<String, Vec<String>>,
    pub types: BTreeMap<String, TypeDecl>,
}

/// The three membership universes used by the hallucination checks.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KnownSets {
    /// All `(type, method)` pairs.
    pub methods: BTreeSet<(String, String)>,
    pub types: BTreeSet<String>,
    /// Qualified constants, `Enum.CONST`.
    pub enum_constants: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SchemaViolation {
    pub location: String,
    pub message: String,
}

impl fmt::Display for SchemaViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("cannot read schema {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed schema document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("schema has {} violation(s): {}", .0.len(), join_violations(.0))]
    Invalid(Vec<SchemaViolation>),
}

fn join_violations(v: &[SchemaViolation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSchema {
    #[serde(default)]
    version: String,
    #[serde(default)]
    modules: Vec<String>,
    #[serde(default)]
    roots: BTreeMap<String, String>,
    #[serde(default)]
    enums: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    types: BTreeMap<String, RawType>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawType {
    #[serde(default)]
    methods: BTreeMap<String, RawMethod>,
    #[serde(default)]
    attributes: BTreeMap<String, TypeRef>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMethod {
    #[serde(default)]
    params: Vec<Param>,
    returns: TypeRef,
    #[serde(default)]
    mutates: bool,
}

/// Read and validate a schema document.
pub fn load_schema(path: impl AsRef<Path>) -> Result<ApiSchema, SchemaError> {
    let path = path.as_ref();
    let text =
        std::fs::read_to_string(path).map_err(|source| SchemaError::Io { path: path.display().to_string(), source })?;
    ApiSchema::from_json_str(&text)
}

impl ApiSchema {
    pub fn from_json_str(text: &str) -> Result<Self, SchemaError> {
        let raw: RawSchema = serde_json::from_str(text)?;
        let mut violations = Vec::new();

        for (enum_name, constants) in &raw.enums {
            let mut seen = BTreeSet::new();
            for c in constants {
                if !seen.insert(c) {
                    violations.push(SchemaViolation {
                        location: format!("enums.{enum_name}"),
                        message: format!("duplicate constant '{c}'"),
                    });
                }
            }
            if raw.types.contains_key(enum_name) {
                violations.push(SchemaViolation {
                    location: format!("enums.{enum_name}"),
                    message: format!("'{enum_name}' is declared both as a type and as an enum"),
                });
            }
        }

        let type_names: BTreeSet<String> = raw.types.keys().cloned().collect();
        let enum_names: BTreeSet<String> = raw.enums.keys().cloned().collect();
        let resolves =
            |base: &str| PRIMITIVES.contains(&base) || type_names.contains(base) || enum_names.contains(base);

        let mut types = BTreeMap::new();
        for (type_name, decl) in raw.types {
            let mut methods = BTreeMap::new();
            for (method_name, m) in decl.methods {
                let loc = format!("types.{type_name}.methods.{method_name}");
                if !resolves(&m.returns.base) {
                    violations.push(SchemaViolation {
                        location: format!("{loc}.returns"),
                        message: format!("unresolvable type '{}'", m.returns.base),
                    });
                }
                let mut names = BTreeSet::new();
                for p in &m.params {
                    if !names.insert(p.name.as_str()) {
                        violations.push(SchemaViolation {
                            location: format!("{loc}.params"),
                            message: format!("duplicate parameter '{}'", p.name),
                        });
                    }
                    if !resolves(&p.ty.base) || p.ty.base == "void" {
                        violations.push(SchemaViolation {
                            location: format!("{loc}.params.{}", p.name),
                            message: format!("unresolvable type '{}'", p.ty.base),
                        });
                    }
                }
                methods.insert(
                    method_name.clone(),
                    MethodSig { name: method_name, params: m.params, returns: m.returns, mutates: m.mutates },
                );
            }
            for (attr, ty) in &decl.attributes {
                if !resolves(&ty.base) || ty.base == "void" {
                    violations.push(SchemaViolation {
                        location: format!("types.{type_name}.attributes.{attr}"),
                        message: format!("unresolvable type '{}'", ty.base),
                    });
                }
            }
            types.insert(type_name, TypeDecl { methods, attributes: decl.attributes });
        }

        for (root, ty) in &raw.roots {
            if !types.contains_key(ty) {
                violations.push(SchemaViolation {
                    location: format!("roots.{root}"),
                    message: format!("root type '{ty}' is not a declared type"),
                });
            }
        }

        if !violations.is_empty() {
            return Err(SchemaError::Invalid(violations));
        }
        Ok(ApiSchema {
            version: raw.version,
            modules: raw.modules.into_iter().collect(),
            roots: raw.roots,
            enums: raw.enums,
            types,
        })
    }

    pub fn lookup_method(&self, receiver: &str, method: &str) -> Option<&MethodSig> {
        self.types.get(receiver)?.methods.get(method)
    }

    pub fn lookup_attribute(&self, receiver: &str, attr: &str) -> Option<&TypeRef> {
        self.types.get(receiver)?.attributes.get(attr)
    }

    pub fn is_object_type(&self, name: &str) -> bool {
        self.types.contains_key(name)
    }

    pub fn is_enum(&self, name: &str) -> bool {
        self.enums.contains_key(name)
    }

    pub fn has_enum_constant(&self, qualified: &str) -> bool {
        match qualified.split_once('.') {
            Some((e, c)) => self.enums.get(e).is_some_and(|cs| cs.iter().any(|x| x == c)),
            None => false,
        }
    }

    /// Every method name declared on any type.
    pub fn method_names(&self) -> BTreeSet<&str> {
        self.types.values().flat_map(|t| t.methods.keys().map(String::as_str)).collect()
    }

    /// Types declaring a method with this name.
    pub fn types_with_method(&self, method: &str) -> Vec<&str> {
        self.types.iter().filter(|(_, d)| d.methods.contains_key(method)).map(|(n, _)| n.as_str()).collect()
    }

    /// `(parent, method, child)` for every method whose return base is an
    /// object type.
    pub fn relations(&self) -> impl Iterator<Item = (&str, &MethodSig)> + '_ {
        self.types.iter().flat_map(move |(t, d)| {
            d.methods.values().filter(move |m| self.types.contains_key(&m.returns.base)).map(move |m| (t.as_str(), m))
        })
    }

    /// Object types reachable from `from` in one method or attribute step.
    pub fn successors(&self, from: &str) -> BTreeSet<&str> {
        let Some(decl) = self.types.get(from) else { return BTreeSet::new() };
        decl.methods
            .values()
            .map(|m| &m.returns)
            .chain(decl.attributes.values())
            .filter(|t| self.types.contains_key(&t.base))
            .map(|t| t.base.as_str())
            .collect()
    }

    pub fn known_sets(&self) -> KnownSets {
        let mut sets = KnownSets::default();
        for (t, decl) in &self.types {
            sets.types.insert(t.clone());
            for m in decl.methods.keys() {
                sets.methods.insert((t.clone(), m.clone()));
            }
        }
        for (e, cs) in &self.enums {
            for c in cs {
                sets.enum_constants.insert(format!("{e}.{c}"));
            }
        }
        sets
    }

    pub fn method_count(&self) -> usize {
        self.types.values().map(|t| t.methods.len()).sum()
    }

    /// Whether an import path names something in the API universe: a module,
    /// a type, or a method, optionally qualified by a module prefix.
    pub fn is_valid_import(&self, path: &str) -> bool {
        let segments: Vec<&str> = path.split('.').collect();
        let names = self.method_names();
        let member = |s: &str| self.types.contains_key(s) || names.contains(s) || self.enums.contains_key(s);
        match segments.as_slice() {
            [one] => self.modules.contains(*one) || member(one),
            [module, rest @ ..] => self.modules.contains(*module) && rest.len() == 1 && member(rest[0]),
            [] => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn toy_schema_counts() {
        let s = fixtures::toy_schema();
        assert_eq!(s.types.len(), 5);
        assert_eq!(s.method_count(), 8);
        assert_eq!(s.enums.len(), 1);
        assert_eq!(s.roots.len(), 1);
        let k = s.known_sets();
        assert_eq!(k.types.len(), 5);
        assert_eq!(k.methods.len(), 8);
        assert_eq!(k.enum_constants.len(), 2);
        assert!(k.enum_constants.contains("PlacementStatus.PLACED"));
        assert!(k.enum_constants.contains("PlacementStatus.FIRM"));
    }

    #[test]
    fn lookup() {
        let s = fixtures::toy_schema();
        let m = s.lookup_method("Block", "getNets").unwrap();
        assert_eq!(m.returns, TypeRef::many("Net"));
        assert!(s.lookup_method("Net", "getArea").is_none());
        assert!(s.lookup_method("Ghost", "anything").is_none());
        assert_eq!(s.lookup_method("Block", "findNet").unwrap().returns, TypeRef::nullable("Net"));
    }

    #[test]
    fn undeclared_return_named() {
        let doc = r#"{"version":"x","types":{"Block":{"methods":{"getWires":{"params":[],"returns":{"base":"Wire","many":true}}}}}}"#;
        match ApiSchema::from_json_str(doc) {
            Err(SchemaError::Invalid(v)) => {
                assert_eq!(v.len(), 1);
                assert!(v[0].message.contains("Wire"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn violations_are_collected_exhaustively() {
        let doc = r#"{
            "roots": {"top": "Chip"},
            "enums": {"E": ["A", "A"]},
            "types": {"T": {"methods": {"m": {"params": [{"name":"x","type":{"base":"int"}},{"name":"x","type":{"base":"Q"}}], "returns": {"base":"Wire"}}}}}
        }"#;
        let Err(SchemaError::Invalid(v)) = ApiSchema::from_json_str(doc) else { panic!() };
        // duplicate enum constant, Wire, duplicate param, Q, Chip root
        assert_eq!(v.len(), 5, "{v:?}");
    }

    #[test]
    fn empty_schema_is_valid() {
        let s = ApiSchema::from_json_str(r#"{"types":{}}"#).unwrap();
        let k = s.known_sets();
        assert!(k.methods.is_empty() && k.types.is_empty() && k.enum_constants.is_empty());
    }

    #[test]
    fn one_type_two_methods() {
        let doc = r#"{"types":{"T":{"methods":{"a":{"returns":{"base":"int"}},"b":{"returns":{"base":"void"}}}}}}"#;
        let s = ApiSchema::from_json_str(doc).unwrap();
        assert_eq!(s.known_sets().methods.len(), 2);
    }

    #[test]
    fn malformed_is_parse_error() {
        assert!(matches!(ApiSchema::from_json_str("{"), Err(SchemaError::Parse(_))));
    }

    #[test]
    fn imports() {
        let s = fixtures::toy_schema();
        assert!(s.is_valid_import("odb"));
        assert!(s.is_valid_import("odb.Net"));
        assert!(s.is_valid_import("Block"));
        assert!(!s.is_valid_import("openroad_magic"));
        assert!(!s.is_valid_import("odb.Wire"));
    }

    #[test]
    fn deterministic_load() {
        let a = ApiSchema::from_json_str(fixtures::TOY_SCHEMA_JSON).unwrap();
        let b = ApiSchema::from_json_str(fixtures::TOY_SCHEMA_JSON).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn lookup_round_trip_completeness() {
        let s = fixtures::toy_schema();
        for (t, decl) in &s.types {
            for (name, m) in &decl.methods {
                assert_eq!(s.lookup_method(t, name), Some(m));
            }
        }
    }
}
