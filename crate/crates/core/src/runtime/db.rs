use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;
use thiserror::Error;

use crate::schema::{ApiSchema, MethodSig, TypeRef};

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("cannot read snapshot {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed snapshot: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("snapshot violates the schema:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub id: String,
    #[serde(default)]
    pub fields: BTreeMap<String, Json>,
    /// Relation (getter method name) to child ids.
    #[serde(default)]
    pub children: BTreeMap<String, Vec<String>>,
}

/// Explicit behavior for a method outside the get/find/set convention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Behavior {
    /// Read a field.
    Field { field: String },
    /// Read a child relation.
    Children { relation: String },
    /// Always return this value.
    Const { value: Json },
    /// Write the single argument to a field.
    Set { field: String },
}

/// How a method is served at runtime.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Dispatch {
    ReadChildren(String),
    ReadField(String),
    Find { relation: String },
    Write(String),
    Const(Json),
}

/// In-memory hierarchical design database. Records are shared between
/// clones and copied on first write, so a session per task is cheap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignDb {
    pub conforms_to: String,
    pub objects: BTreeMap<String, Vec<Arc<Record>>>,
    /// Keyed by `Type.method`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub behaviors: BTreeMap<String, Behavior>,
    #[serde(skip)]
    index: Arc<BTreeMap<String, (String, usize)>>,
}

pub(crate) fn lower_first(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_lowercase().collect::<String>() + c.as_str(),
        None => String::new(),
    }
}

/// Resolve a method to its runtime behavior, or explain why it has none.
pub(crate) fn dispatch_for(
    schema: &ApiSchema,
    behaviors: &BTreeMap<String, Behavior>,
    ty: &str,
    m: &MethodSig,
) -> Result<Dispatch, String> {
    if let Some(b) = behaviors.get(&format!("{ty}.{}", m.name)) {
        return Ok(match b {
            Behavior::Field { field } => Dispatch::ReadField(field.clone()),
            Behavior::Children { relation } => Dispatch::ReadChildren(relation.clone()),
            Behavior::Const { value } => Dispatch::Const(value.clone()),
            Behavior::Set { field } => Dispatch::Write(field.clone()),
        });
    }
    let name = m.name.as_str();
    if let Some(rest) = name.strip_prefix("get").filter(|r| !r.is_empty() && m.params.is_empty()) {
        return Ok(if schema.is_object_type(&m.returns.base) {
            Dispatch::ReadChildren(name.to_string())
        } else {
            Dispatch::ReadField(lower_first(rest))
        });
    }
    if name.starts_with("find") && name.len() > 4 {
        let one_string = m.params.len() == 1 && m.params[0].ty == TypeRef::named("string");
        if !one_string {
            return Err(format!("{ty}.{name}: finders take exactly one string"));
        }
        if m.returns.many || !m.returns.nullable {
            return Err(format!("{ty}.{name}: finders return a single nullable object"));
        }
        let decl = &schema.types[ty];
        let relation = decl
            .methods
            .values()
            .find(|g| {
                g.name.starts_with("get") && g.params.is_empty() && g.returns.many && g.returns.base == m.returns.base
            })
            .ok_or_else(|| format!("{ty}.{name}: no collection getter of {} to search", m.returns.base))?;
        return Ok(Dispatch::Find { relation: relation.name.clone() });
    }
    if let Some(rest) = name.strip_prefix("set").filter(|r| !r.is_empty()) {
        if m.params.len() == 1 && m.returns.base == "void" {
            return Ok(Dispatch::Write(lower_first(rest)));
        }
        return Err(format!("{ty}.{name}: setters take one argument and return void"));
    }
    Err(format!("{ty}.{name}: no behavior entry and outside the get/find/set convention"))
}

/// Whether a stored field value conforms to a declared type.
pub(crate) fn json_conforms(schema: &ApiSchema, v: &Json, t: &TypeRef) -> bool {
    if v.is_null() {
        return t.nullable;
    }
    if t.many {
        return v.as_array().is_some_and(|a| a.iter().all(|x| json_conforms(schema, x, &t.element())));
    }
    match t.base.as_str() {
        "int" => v.is_i64(),
        "float" => v.is_number(),
        "string" => v.is_string(),
        "bool" => v.is_boolean(),
        b if schema.is_enum(b) => v.as_str().is_some_and(|c| schema.enums[b].iter().any(|k| k == c)),
        _ => false,
    }
}

impl DesignDb {
    /// Build from parts and verify every invariant.
    pub fn new(
        conforms_to: impl Into<String>,
        objects: BTreeMap<String, Vec<Record>>,
        behaviors: BTreeMap<String, Behavior>,
        schema: &ApiSchema,
    ) -> Result<Self, SnapshotError> {
        let objects = objects.into_iter().map(|(t, rs)| (t, rs.into_iter().map(Arc::new).collect())).collect();
        let mut db = DesignDb { conforms_to: conforms_to.into(), objects, behaviors, index: Arc::default() };
        db.reindex();
        db.validate(schema)?;
        Ok(db)
    }

    pub fn from_json_str(text: &str, schema: &ApiSchema) -> Result<Self, SnapshotError> {
        let mut db: DesignDb = serde_json::from_str(text)?;
        db.reindex();
        db.validate(schema)?;
        Ok(db)
    }

    fn reindex(&mut self) {
        let mut index = BTreeMap::new();
        for (ty, recs) in &self.objects {
            for (i, r) in recs.iter().enumerate() {
                index.entry(r.id.clone()).or_insert((ty.clone(), i));
            }
        }
        self.index = Arc::new(index);
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("snapshot serializes")
    }

    pub fn object_count(&self) -> usize {
        self.objects.values().map(Vec::len).sum()
    }

    pub fn count(&self, ty: &str) -> usize {
        self.objects.get(ty).map_or(0, Vec::len)
    }

    pub fn get(&self, id: &str) -> Option<(&str, &Record)> {
        let (ty, i) = self.index.get(id)?;
        Some((ty.as_str(), &self.objects[ty][*i]))
    }

    pub(crate) fn get_mut(&mut self, id: &str) -> Option<&mut Record> {
        let (ty, i) = self.index.get(id)?;
        self.objects.get_mut(ty)?.get_mut(*i).map(Arc::make_mut)
    }

    /// First record of `ty` whose `name` field equals `name`.
    pub fn find_by_name(&self, ty: &str, name: &str) -> Option<&Record> {
        self.objects.get(ty)?.iter().find(|r| r.fields.get("name").and_then(Json::as_str) == Some(name)).map(|r| &**r)
    }

    pub fn first_of(&self, ty: &str) -> Option<&Record> {
        self.objects.get(ty)?.first().map(|r| &**r)
    }

    /// Check all invariants, collecting every violation.
    pub fn validate(&self, schema: &ApiSchema) -> Result<(), SnapshotError> {
        let mut v = Vec::new();
        if self.conforms_to != schema.version {
            v.push(format!("conforms_to '{}' but schema version is '{}'", self.conforms_to, schema.version));
        }
        let mut ids = BTreeSet::new();
        for recs in self.objects.values() {
            for r in recs {
                if !ids.insert(r.id.as_str()) {
                    v.push(format!("duplicate object id '{}'", r.id));
                }
            }
        }
        for (key, b) in &self.behaviors {
            let ok = key.split_once('.').is_some_and(|(t, m)| schema.lookup_method(t, m).is_some());
            if !ok {
                v.push(format!("behavior for undeclared method '{key}'"));
            }
            if let Behavior::Children { relation } = b {
                if !key.split_once('.').is_some_and(|(t, _)| schema.lookup_method(t, relation).is_some()) {
                    v.push(format!("behavior '{key}' reads unknown relation '{relation}'"));
                }
            }
        }
        for (ty, decl) in &schema.types {
            for m in decl.methods.values() {
                if let Err(e) = dispatch_for(schema, &self.behaviors, ty, m) {
                    v.push(format!("method not executable: {e}"));
                }
            }
        }
        for (root, ty) in &schema.roots {
            if self.count(ty) == 0 {
                v.push(format!("no {ty} object for session root '{root}'"));
            }
        }
        for (ty, recs) in &self.objects {
            let Some(decl) = schema.types.get(ty) else {
                v.push(format!("object type '{ty}' is not declared"));
                continue;
            };
            let required: Vec<&MethodSig> = decl
                .methods
                .values()
                .filter(|m| {
                    !m.returns.many
                        && !m.returns.nullable
                        && schema.is_object_type(&m.returns.base)
                        && matches!(dispatch_for(schema, &self.behaviors, ty, m), Ok(Dispatch::ReadChildren(ref r)) if *r == m.name)
                })
                .collect();
            for r in recs {
                for (rel, kids) in &r.children {
                    let Some(m) = decl.methods.get(rel) else {
                        v.push(format!("{}: relation '{rel}' is not a method of {ty}", r.id));
                        continue;
                    };
                    if !schema.is_object_type(&m.returns.base) {
                        v.push(format!("{}: relation '{rel}' does not return objects", r.id));
                        continue;
                    }
                    if !m.returns.many && kids.len() > 1 {
                        v.push(format!("{}: single-valued relation '{rel}' has {} children", r.id, kids.len()));
                    }
                    for k in kids {
                        match self.index.get(k) {
                            None => v.push(format!("{}: child '{k}' under '{rel}' does not exist", r.id)),
                            Some((kt, _)) if *kt != m.returns.base => v.push(format!(
                                "{}: child '{k}' under '{rel}' is {kt}, expected {}",
                                r.id, m.returns.base
                            )),
                            _ => {}
                        }
                    }
                }
                for m in &required {
                    if r.children.get(&m.name).map_or(0, Vec::len) != 1 {
                        v.push(format!("{}: {} must yield exactly one {}", r.id, m.name, m.returns.base));
                    }
                }
                for (field, value) in &r.fields {
                    if let Some(t) = declared_field_type(schema, &self.behaviors, ty, field) {
                        if !json_conforms(schema, value, &t) {
                            v.push(format!("{}: field '{field}' = {value} does not conform to {t}", r.id));
                        }
                    }
                }
            }
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(SnapshotError::Invalid(v))
        }
    }
}

/// Type of a stored field as implied by a getter or a declared attribute.
pub(crate) fn declared_field_type(
    schema: &ApiSchema,
    behaviors: &BTreeMap<String, Behavior>,
    ty: &str,
    field: &str,
) -> Option<TypeRef> {
    let decl = schema.types.get(ty)?;
    if let Some(t) = decl.attributes.get(field) {
        return Some(t.clone());
    }
    decl.methods.values().find_map(|m| match dispatch_for(schema, behaviors, ty, m) {
        Ok(Dispatch::ReadField(f)) if f == field => Some(m.returns.clone()),
        _ => None,
    })
}

pub fn load_snapshot(path: impl AsRef<Path>, schema: &ApiSchema) -> Result<DesignDb, SnapshotError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| SnapshotError::Io { path: path.display().to_string(), source })?;
    DesignDb::from_json_str(&text, schema)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{odb_schema, toy_schema, TOY_SNAPSHOT_JSON};

    #[test]
    fn toy_has_seven_objects() {
        let s = toy_schema();
        let db = DesignDb::from_json_str(TOY_SNAPSHOT_JSON, &s).unwrap();
        assert_eq!(db.object_count(), 7);
        assert_eq!(db.count("Net"), 3);
        assert_eq!(db.find_by_name("Net", "clk").unwrap().id, "n1");
        assert_eq!(db.get("i2").unwrap().0, "Inst");
    }

    #[test]
    fn dangling_child() {
        let s = toy_schema();
        let text = TOY_SNAPSHOT_JSON.replace("\"n3\"]", "\"n9\"]");
        match DesignDb::from_json_str(&text, &s) {
            Err(SnapshotError::Invalid(v)) => assert!(v.iter().any(|m| m.contains("'n9'"))),
            other => panic!("expected violation, got {other:?}"),
        }
    }

    #[test]
    fn violations_are_collected() {
        let s = toy_schema();
        let text = TOY_SNAPSHOT_JSON
            .replace("\"toy-1\"", "\"toy-2\"")
            .replace(
                "\"weight\": 1 }, \"children\": {} },\n      { \"id\": \"n2\"",
                "\"weight\": \"heavy\" }, \"children\": {} },\n      { \"id\": \"n2\"",
            )
            .replace("\"getBlock\": [\"b1\"]", "\"getBlock\": []");
        match DesignDb::from_json_str(&text, &s) {
            Err(SnapshotError::Invalid(v)) => {
                assert_eq!(v.len(), 3, "{v:?}");
            }
            other => panic!("expected violations, got {other:?}"),
        }
    }

    #[test]
    fn wrong_child_type_and_unknown_type() {
        let s = toy_schema();
        let text = TOY_SNAPSHOT_JSON.replace("\"getInsts\": [\"i1\", \"i2\"]", "\"getInsts\": [\"n1\"]");
        assert!(matches!(DesignDb::from_json_str(&text, &s), Err(SnapshotError::Invalid(_))));
        let text = TOY_SNAPSHOT_JSON.replace("\"Inst\": [", "\"Cell\": [");
        assert!(matches!(DesignDb::from_json_str(&text, &s), Err(SnapshotError::Invalid(_))));
    }

    #[test]
    fn unconventional_method_needs_behavior() {
        let mut s = toy_schema();
        let sig = MethodSig { name: "area".into(), params: vec![], returns: TypeRef::named("int"), mutates: false };
        s.types.get_mut("Net").unwrap().methods.insert("area".into(), sig);
        let err = DesignDb::from_json_str(TOY_SNAPSHOT_JSON, &s).unwrap_err();
        assert!(err.to_string().contains("Net.area"));
        let with = TOY_SNAPSHOT_JSON.replacen(
            "\"objects\"",
            "\"behaviors\": {\"Net.area\": {\"kind\": \"const\", \"value\": 4}},\n  \"objects\"",
            1,
        );
        assert!(DesignDb::from_json_str(&with, &s).is_ok());
    }

    #[test]
    fn roundtrip_json() {
        let s = toy_schema();
        let db = DesignDb::from_json_str(TOY_SNAPSHOT_JSON, &s).unwrap();
        let again = DesignDb::from_json_str(&db.to_json(), &s).unwrap();
        assert_eq!(db, again);
        assert!(DesignDb::from_json_str(TOY_SNAPSHOT_JSON, &odb_schema()).is_err());
    }
}
