use std::fmt;

use serde_json::Value as Json;

use crate::schema::{ApiSchema, TypeRef};

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    None,
    Int(i64),
    Float(f64),
    Str(String),
    Bool(bool),
    Obj {
        ty: String,
        id: String,
    },
    List(Vec<Value>),
    /// `range(n)`, materialized lazily.
    Range(i64),
    Enum {
        name: String,
        konst: String,
    },
    Module(String),
    /// `odb.SigType` before the constant is selected.
    EnumNs(String),
}

fn fmt_float(f: f64) -> String {
    if f.is_finite() && f.fract() == 0.0 && f.abs() < 1e16 {
        format!("{f:.1}")
    } else if f.is_nan() {
        "nan".into()
    } else if f.is_infinite() {
        if f > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{f}")
    }
}

impl Value {
    pub fn type_name(&self) -> String {
        match self {
            Value::None => "NoneType".into(),
            Value::Int(_) => "int".into(),
            Value::Float(_) => "float".into(),
            Value::Str(_) => "str".into(),
            Value::Bool(_) => "bool".into(),
            Value::Obj { ty, .. } => ty.clone(),
            Value::List(_) => "list".into(),
            Value::Range(_) => "range".into(),
            Value::Enum { name, .. } => name.clone(),
            Value::Module(_) => "module".into(),
            Value::EnumNs(_) => "enum".into(),
        }
    }

    pub fn truthy(&self) -> bool {
        match self {
            Value::None => false,
            Value::Int(i) => *i != 0,
            Value::Float(f) => *f != 0.0,
            Value::Str(s) => !s.is_empty(),
            Value::Bool(b) => *b,
            Value::List(l) => !l.is_empty(),
            Value::Range(n) => *n > 0,
            _ => true,
        }
    }

    /// Element-position rendering, as inside a list.
    pub fn repr(&self) -> String {
        match self {
            Value::Str(s) => format!("'{}'", s.replace('\\', "\\\\").replace('\'', "\\'")),
            other => other.to_string(),
        }
    }

    /// Equality as the scripting language defines it: numeric across int
    /// and float, objects by identity.
    pub fn loose_eq(&self, other: &Value) -> bool {
        match (self, other) {
            (Value::Int(a), Value::Float(b)) | (Value::Float(b), Value::Int(a)) => (*a as f64) == *b,
            (Value::Bool(a), Value::Int(b)) | (Value::Int(b), Value::Bool(a)) => (*a as i64) == *b,
            (Value::List(a), Value::List(b)) => a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.loose_eq(y)),
            (Value::Range(a), Value::Range(b)) => a.max(&0) == b.max(&0),
            (Value::Obj { id: a, .. }, Value::Obj { id: b, .. }) => a == b,
            (a, b) => a == b,
        }
    }

    /// Convert a stored field to a value of the declared type.
    pub(crate) fn from_json(v: &Json, t: &TypeRef, schema: &ApiSchema) -> Value {
        if v.is_null() {
            return Value::None;
        }
        if t.many {
            let el = t.element();
            return Value::List(
                v.as_array().map(|a| a.iter().map(|x| Value::from_json(x, &el, schema)).collect()).unwrap_or_default(),
            );
        }
        match t.base.as_str() {
            "int" => Value::Int(v.as_i64().unwrap_or(0)),
            "float" => Value::Float(v.as_f64().unwrap_or(0.0)),
            "bool" => Value::Bool(v.as_bool().unwrap_or(false)),
            "string" => Value::Str(v.as_str().unwrap_or_default().to_string()),
            b if schema.is_enum(b) => {
                Value::Enum { name: b.to_string(), konst: v.as_str().unwrap_or_default().to_string() }
            }
            _ => Value::None,
        }
    }

    /// Value of an absent field of the declared type.
    pub(crate) fn default_for(t: &TypeRef, schema: &ApiSchema) -> Value {
        if t.nullable {
            return Value::None;
        }
        if t.many {
            return Value::List(Vec::new());
        }
        match t.base.as_str() {
            "int" => Value::Int(0),
            "float" => Value::Float(0.0),
            "bool" => Value::Bool(false),
            "string" => Value::Str(String::new()),
            b if schema.is_enum(b) => {
                Value::Enum { name: b.to_string(), konst: schema.enums[b].first().cloned().unwrap_or_default() }
            }
            _ => Value::None,
        }
    }

    pub(crate) fn to_json(&self) -> Json {
        match self {
            Value::None => Json::Null,
            Value::Int(i) => Json::from(*i),
            Value::Float(f) => Json::from(*f),
            Value::Str(s) => Json::from(s.clone()),
            Value::Bool(b) => Json::from(*b),
            Value::Enum { konst, .. } => Json::from(konst.clone()),
            Value::List(l) => Json::Array(l.iter().map(Value::to_json).collect()),
            Value::Range(n) => Json::Array((0..*n).map(Json::from).collect()),
            Value::Obj { id, .. } => Json::from(id.clone()),
            Value::Module(m) | Value::EnumNs(m) => Json::from(m.clone()),
        }
    }

    /// Whether the value may be passed where `t` is declared.
    pub(crate) fn conforms(&self, t: &TypeRef) -> bool {
        if matches!(self, Value::None) {
            return t.nullable;
        }
        if t.many {
            let el = t.element();
            return match self {
                Value::List(l) => l.iter().all(|x| x.conforms(&el)),
                Value::Range(_) => el.base == "int",
                _ => false,
            };
        }
        match (self, t.base.as_str()) {
            (Value::Int(_), "int" | "float") => true,
            (Value::Float(_), "float") => true,
            (Value::Str(_), "string") => true,
            (Value::Bool(_), "bool") => true,
            (Value::Enum { name, .. }, b) => name == b,
            (Value::Obj { ty, .. }, b) => ty == b,
            _ => false,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::None => f.write_str("None"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Float(x) => f.write_str(&fmt_float(*x)),
            Value::Str(s) => f.write_str(s),
            Value::Bool(b) => f.write_str(if *b { "True" } else { "False" }),
            Value::Obj { ty, id } => write!(f, "<{ty} {id}>"),
            Value::List(l) => {
                let parts: Vec<String> = l.iter().map(Value::repr).collect();
                write!(f, "[{}]", parts.join(", "))
            }
            Value::Range(n) => write!(f, "range(0, {n})"),
            Value::Enum { konst, .. } => f.write_str(konst),
            Value::Module(m) => write!(f, "<module '{m}'>"),
            Value::EnumNs(e) => write!(f, "<enum '{e}'>"),
        }
    }
}
