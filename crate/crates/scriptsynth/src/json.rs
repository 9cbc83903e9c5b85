//! JSON values as seen by traces and hidden functions.
//!
//! Objects keep insertion order for printing but compare as unordered maps.
//! Non-integral numbers are carried as their source text and only ever
//! compared by that text.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};

use indexmap::IndexMap;
use thiserror::Error;

pub type JsonObject = IndexMap<String, JsonValue>;

#[derive(Clone, Debug)]
pub enum JsonValue {
    Null,
    Bool(bool),
    Int(i64),
    Float(String),
    String(String),
    Array(Vec<JsonValue>),
    Object(JsonObject),
}

#[derive(Debug, Error)]
#[error("invalid JSON: {0}")]
pub struct JsonParseError(String);

impl PartialEq for JsonValue {
    fn eq(&self, other: &Self) -> bool {
        use JsonValue::*;
        match (self, other) {
            (Null, Null) => true,
            (Bool(a), Bool(b)) => a == b,
            (Int(a), Int(b)) => a == b,
            (Float(a), Float(b)) => a == b,
            (String(a), String(b)) => a == b,
            (Array(a), Array(b)) => a == b,
            (Object(a), Object(b)) => {
                a.len() == b.len() && a.iter().all(|(k, v)| b.get(k) == Some(v))
            }
            _ => false,
        }
    }
}

impl Eq for JsonValue {}

impl Hash for JsonValue {
    fn hash<H: Hasher>(&self, state: &mut H) {
        std::mem::discriminant(self).hash(state);
        match self {
            JsonValue::Null => {}
            JsonValue::Bool(b) => b.hash(state),
            JsonValue::Int(i) => i.hash(state),
            JsonValue::Float(s) | JsonValue::String(s) => s.hash(state),
            JsonValue::Array(items) => items.hash(state),
            JsonValue::Object(map) => {
                let mut keys: Vec<&String> = map.keys().collect();
                keys.sort();
                keys.len().hash(state);
                for k in keys {
                    k.hash(state);
                    map[k].hash(state);
                }
            }
        }
    }
}

impl JsonValue {
    /// Rank used when ordering mined constants: null, bool, string, int, float, array, object.
    pub fn type_rank(&self) -> u8 {
        match self {
            JsonValue::Null => 0,
            JsonValue::Bool(_) => 1,
            JsonValue::String(_) => 2,
            JsonValue::Int(_) => 3,
            JsonValue::Float(_) => 4,
            JsonValue::Array(_) => 5,
            JsonValue::Object(_) => 6,
        }
    }

    pub fn is_scalar(&self) -> bool {
        matches!(
            self,
            JsonValue::Bool(_) | JsonValue::Int(_) | JsonValue::Float(_) | JsonValue::String(_)
        )
    }

    pub fn as_array(&self) -> Option<&[JsonValue]> {
        match self {
            JsonValue::Array(items) => Some(items),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            JsonValue::String(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            JsonValue::Bool(b) => Some(*b),
            _ => None,
        }
    }

    /// Compact text with object keys sorted; equal values give equal text.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        self.write_json(&mut out, true);
        out
    }

    /// Compact text preserving object insertion order.
    pub fn to_json_string(&self) -> String {
        let mut out = String::new();
        self.write_json(&mut out, false);
        out
    }

    fn write_json(&self, out: &mut String, sorted: bool) {
        match self {
            JsonValue::Null => out.push_str("null"),
            JsonValue::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
            JsonValue::Int(i) => out.push_str(&i.to_string()),
            JsonValue::Float(s) => out.push_str(s),
            JsonValue::String(s) => write_json_string(out, s),
            JsonValue::Array(items) => {
                out.push('[');
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    item.write_json(out, sorted);
                }
                out.push(']');
            }
            JsonValue::Object(map) => {
                let mut entries: Vec<(&String, &JsonValue)> = map.iter().collect();
                if sorted {
                    entries.sort_by(|a, b| a.0.cmp(b.0));
                }
                out.push('{');
                for (i, (k, v)) in entries.into_iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    write_json_string(out, k);
                    out.push(':');
                    v.write_json(out, sorted);
                }
                out.push('}');
            }
        }
    }

    pub fn parse(text: &str) -> Result<JsonValue, JsonParseError> {
        let v: serde_json::Value =
            serde_json::from_str(text).map_err(|e| JsonParseError(e.to_string()))?;
        Ok(JsonValue::from(&v))
    }

    pub fn parse_bytes(bytes: &[u8]) -> Result<JsonValue, JsonParseError> {
        let v: serde_json::Value =
            serde_json::from_slice(bytes).map_err(|e| JsonParseError(e.to_string()))?;
        Ok(JsonValue::from(&v))
    }

    pub fn to_serde(&self) -> serde_json::Value {
        match self {
            JsonValue::Null => serde_json::Value::Null,
            JsonValue::Bool(b) => serde_json::Value::Bool(*b),
            JsonValue::Int(i) => serde_json::Value::from(*i),
            JsonValue::Float(s) => s
                .parse::<serde_json::Number>()
                .map(serde_json::Value::Number)
                .unwrap_or_else(|_| serde_json::Value::String(s.clone())),
            JsonValue::String(s) => serde_json::Value::String(s.clone()),
            JsonValue::Array(items) => {
                serde_json::Value::Array(items.iter().map(JsonValue::to_serde).collect())
            }
            JsonValue::Object(map) => serde_json::Value::Object(
                map.iter().map(|(k, v)| (k.clone(), v.to_serde())).collect(),
            ),
        }
    }

    /// Every array and object nested in this value, plus the value itself, in pre-order.
    pub fn subterms(&self) -> Vec<&JsonValue> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(v) = stack.pop() {
            out.push(v);
            match v {
                JsonValue::Array(items) => stack.extend(items.iter().rev()),
                JsonValue::Object(map) => stack.extend(map.values().rev()),
                _ => {}
            }
        }
        out
    }
}

/// Total order used for deterministic constant lists.
pub fn constant_order(a: &JsonValue, b: &JsonValue) -> Ordering {
    a.type_rank()
        .cmp(&b.type_rank())
        .then_with(|| match (a, b) {
            (JsonValue::Int(x), JsonValue::Int(y)) => x.cmp(y),
            _ => Ordering::Equal,
        })
        .then_with(|| a.canonical().cmp(&b.canonical()))
}

fn write_json_string(out: &mut String, s: &str) {
    out.push_str(&serde_json::to_string(s).expect("string serialization is infallible"));
}

impl From<&serde_json::Value> for JsonValue {
    fn from(v: &serde_json::Value) -> Self {
        match v {
            serde_json::Value::Null => JsonValue::Null,
            serde_json::Value::Bool(b) => JsonValue::Bool(*b),
            serde_json::Value::Number(n) => match n.as_i64() {
                Some(i) if n.to_string() == i.to_string() => JsonValue::Int(i),
                _ => JsonValue::Float(n.to_string()),
            },
            serde_json::Value::String(s) => JsonValue::String(s.clone()),
            serde_json::Value::Array(items) => {
                JsonValue::Array(items.iter().map(JsonValue::from).collect())
            }
            serde_json::Value::Object(map) => JsonValue::Object(
                map.iter().map(|(k, v)| (k.clone(), JsonValue::from(v))).collect(),
            ),
        }
    }
}

impl From<&str> for JsonValue {
    fn from(s: &str) -> Self {
        JsonValue::String(s.to_string())
    }
}

impl From<i64> for JsonValue {
    fn from(i: i64) -> Self {
        JsonValue::Int(i)
    }
}

impl From<bool> for JsonValue {
    fn from(b: bool) -> Self {
        JsonValue::Bool(b)
    }
}

impl fmt::Display for JsonValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_json_string())
    }
}
