//! The hidden-function expression language: paths over JSON inputs,
//! boolean tests on them, and a few value constructors.

use std::fmt;

use crate::json::JsonValue;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum PathExpr {
    Input(usize),
    Child(Box<PathExpr>, String),
    Desc(Box<PathExpr>, String),
    Index(Box<PathExpr>, i64),
    Slice(Box<PathExpr>, i64, i64),
    Length(Box<PathExpr>),
    Add(JsonValue, Box<PathExpr>),
    Concat(JsonValue, Box<PathExpr>),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum BoolExpr {
    Eq(PathExpr, JsonValue),
    Empty(PathExpr),
    Not(Box<BoolExpr>),
    And(Box<BoolExpr>, Box<BoolExpr>),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum HiddenExpr {
    Path(PathExpr),
    Bool(BoolExpr),
    Const(JsonValue),
    List(Vec<HiddenExpr>),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct HiddenFnBody {
    pub arity: usize,
    pub body: HiddenExpr,
}

/// Size weight of a descendant step; every other node weighs 1.
pub const DESC_WEIGHT: usize = 3;

fn arg(args: &[Option<JsonValue>], i: usize) -> JsonValue {
    args.get(i).cloned().flatten().unwrap_or(JsonValue::Null)
}

impl PathExpr {
    pub fn eval(&self, args: &[Option<JsonValue>]) -> JsonValue {
        match self {
            PathExpr::Input(i) => arg(args, *i),
            PathExpr::Child(j, key) => match j.eval(args) {
                JsonValue::Object(map) => map.get(key).cloned().unwrap_or(JsonValue::Null),
                _ => JsonValue::Null,
            },
            PathExpr::Desc(j, key) => {
                let root = j.eval(args);
                match root {
                    JsonValue::Object(_) | JsonValue::Array(_) => {
                        let mut found = Vec::new();
                        collect_descendants(&root, key, &mut found);
                        JsonValue::Array(found)
                    }
                    _ => JsonValue::Null,
                }
            }
            PathExpr::Index(j, i) => match j.eval(args) {
                JsonValue::Array(items) if *i >= 0 && (*i as usize) < items.len() => {
                    items[*i as usize].clone()
                }
                _ => JsonValue::Null,
            },
            PathExpr::Slice(j, lo, hi) => match j.eval(args) {
                JsonValue::Array(items) => {
                    let clamp = |x: i64| x.clamp(0, items.len() as i64) as usize;
                    let (lo, hi) = (clamp(*lo), clamp(*hi));
                    if lo >= hi {
                        JsonValue::Array(Vec::new())
                    } else {
                        JsonValue::Array(items[lo..hi].to_vec())
                    }
                }
                _ => JsonValue::Null,
            },
            PathExpr::Length(j) => match j.eval(args) {
                JsonValue::Array(items) => JsonValue::Int(items.len() as i64),
                _ => JsonValue::Null,
            },
            PathExpr::Add(v, j) => match (v, j.eval(args)) {
                (JsonValue::Int(a), JsonValue::Int(b)) => {
                    a.checked_add(b).map(JsonValue::Int).unwrap_or(JsonValue::Null)
                }
                _ => JsonValue::Null,
            },
            PathExpr::Concat(v, j) => match (v, j.eval(args)) {
                (JsonValue::String(a), JsonValue::String(b)) => JsonValue::String(format!("{a}{b}")),
                _ => JsonValue::Null,
            },
        }
    }

    pub fn size(&self) -> usize {
        match self {
            PathExpr::Input(_) => 1,
            PathExpr::Desc(j, _) => j.size() + DESC_WEIGHT,
            PathExpr::Child(j, _)
            | PathExpr::Index(j, _)
            | PathExpr::Slice(j, _, _)
            | PathExpr::Length(j)
            | PathExpr::Add(_, j)
            | PathExpr::Concat(_, j) => j.size() + 1,
        }
    }

    /// The argument slot this path reads.
    pub fn input_slot(&self) -> usize {
        match self {
            PathExpr::Input(i) => *i,
            PathExpr::Child(j, _)
            | PathExpr::Desc(j, _)
            | PathExpr::Index(j, _)
            | PathExpr::Slice(j, _, _)
            | PathExpr::Length(j)
            | PathExpr::Add(_, j)
            | PathExpr::Concat(_, j) => j.input_slot(),
        }
    }

    pub fn map_slot(&self, f: &dyn Fn(usize) -> usize) -> PathExpr {
        let b = |j: &PathExpr| Box::new(j.map_slot(f));
        match self {
            PathExpr::Input(i) => PathExpr::Input(f(*i)),
            PathExpr::Child(j, k) => PathExpr::Child(b(j), k.clone()),
            PathExpr::Desc(j, k) => PathExpr::Desc(b(j), k.clone()),
            PathExpr::Index(j, i) => PathExpr::Index(b(j), *i),
            PathExpr::Slice(j, lo, hi) => PathExpr::Slice(b(j), *lo, *hi),
            PathExpr::Length(j) => PathExpr::Length(b(j)),
            PathExpr::Add(v, j) => PathExpr::Add(v.clone(), b(j)),
            PathExpr::Concat(v, j) => PathExpr::Concat(v.clone(), b(j)),
        }
    }
}

fn collect_descendants(v: &JsonValue, key: &str, out: &mut Vec<JsonValue>) {
    match v {
        JsonValue::Object(map) => {
            for (k, child) in map {
                if k == key {
                    out.push(child.clone());
                }
                collect_descendants(child, key, out);
            }
        }
        JsonValue::Array(items) => {
            for item in items {
                collect_descendants(item, key, out);
            }
        }
        _ => {}
    }
}

impl BoolExpr {
    pub fn eval(&self, args: &[Option<JsonValue>]) -> bool {
        match self {
            BoolExpr::Eq(j, v) => j.eval(args) == *v,
            BoolExpr::Empty(j) => match j.eval(args) {
                JsonValue::Null => true,
                JsonValue::Array(items) => items.is_empty(),
                _ => false,
            },
            BoolExpr::Not(b) => !b.eval(args),
            BoolExpr::And(a, b) => a.eval(args) && b.eval(args),
        }
    }

    pub fn size(&self) -> usize {
        match self {
            BoolExpr::Eq(j, _) | BoolExpr::Empty(j) => j.size() + 1,
            BoolExpr::Not(b) => b.size() + 1,
            BoolExpr::And(a, b) => a.size() + b.size() + 1,
        }
    }

    fn slots(&self, out: &mut Vec<usize>) {
        match self {
            BoolExpr::Eq(j, _) | BoolExpr::Empty(j) => out.push(j.input_slot()),
            BoolExpr::Not(b) => b.slots(out),
            BoolExpr::And(a, b) => {
                a.slots(out);
                b.slots(out);
            }
        }
    }

    fn map_slot(&self, f: &dyn Fn(usize) -> usize) -> BoolExpr {
        match self {
            BoolExpr::Eq(j, v) => BoolExpr::Eq(j.map_slot(f), v.clone()),
            BoolExpr::Empty(j) => BoolExpr::Empty(j.map_slot(f)),
            BoolExpr::Not(b) => BoolExpr::Not(Box::new(b.map_slot(f))),
            BoolExpr::And(a, b) => BoolExpr::And(Box::new(a.map_slot(f)), Box::new(b.map_slot(f))),
        }
    }
}

impl HiddenExpr {
    pub fn eval(&self, args: &[Option<JsonValue>]) -> JsonValue {
        match self {
            HiddenExpr::Path(p) => p.eval(args),
            HiddenExpr::Bool(b) => JsonValue::Bool(b.eval(args)),
            HiddenExpr::Const(v) => v.clone(),
            HiddenExpr::List(items) => JsonValue::Array(items.iter().map(|e| e.eval(args)).collect()),
        }
    }

    pub fn size(&self) -> usize {
        match self {
            HiddenExpr::Path(p) => p.size(),
            HiddenExpr::Bool(b) => b.size(),
            HiddenExpr::Const(_) => 1,
            HiddenExpr::List(items) => 1 + items.iter().map(HiddenExpr::size).sum::<usize>(),
        }
    }

    /// Argument slots read, sorted and deduplicated.
    pub fn used_slots(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect_slots(&mut out);
        out.sort_unstable();
        out.dedup();
        out
    }

    fn collect_slots(&self, out: &mut Vec<usize>) {
        match self {
            HiddenExpr::Path(p) => out.push(p.input_slot()),
            HiddenExpr::Bool(b) => b.slots(out),
            HiddenExpr::Const(_) => {}
            HiddenExpr::List(items) => items.iter().for_each(|e| e.collect_slots(out)),
        }
    }

    pub fn map_slot(&self, f: &dyn Fn(usize) -> usize) -> HiddenExpr {
        match self {
            HiddenExpr::Path(p) => HiddenExpr::Path(p.map_slot(f)),
            HiddenExpr::Bool(b) => HiddenExpr::Bool(b.map_slot(f)),
            HiddenExpr::Const(v) => HiddenExpr::Const(v.clone()),
            HiddenExpr::List(items) => HiddenExpr::List(items.iter().map(|e| e.map_slot(f)).collect()),
        }
    }

    /// Lists whose items are all constants fold into one constant array.
    pub fn list(items: Vec<HiddenExpr>) -> HiddenExpr {
        if items.iter().all(|e| matches!(e, HiddenExpr::Const(_))) {
            HiddenExpr::Const(JsonValue::Array(
                items
                    .into_iter()
                    .map(|e| match e {
                        HiddenExpr::Const(v) => v,
                        _ => unreachable!(),
                    })
                    .collect(),
            ))
        } else {
            HiddenExpr::List(items)
        }
    }
}

impl HiddenFnBody {
    pub fn eval(&self, args: &[Option<JsonValue>]) -> JsonValue {
        self.body.eval(args)
    }
}

/// Built-in hidden functions that need no definition.
pub fn eval_builtin(name: &str, args: &[Option<JsonValue>]) -> Option<JsonValue> {
    match name {
        "list" => Some(JsonValue::Array(
            args.iter().map(|a| a.clone().unwrap_or(JsonValue::Null)).collect(),
        )),
        "first" => Some(match arg(args, 0) {
            JsonValue::Array(items) => items.first().cloned().unwrap_or(JsonValue::Null),
            _ => JsonValue::Null,
        }),
        _ => None,
    }
}

pub fn is_builtin(name: &str) -> bool {
    matches!(name, "list" | "first")
}

/// Object keys that print bare after a dot.
pub fn is_plain_key(key: &str) -> bool {
    let mut chars = key.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !matches!(key, "length" | "empty" | "true" | "false" | "null")
}

fn write_key(f: &mut fmt::Formatter<'_>, key: &str) -> fmt::Result {
    if is_plain_key(key) {
        f.write_str(key)
    } else {
        f.write_str(&JsonValue::String(key.to_string()).to_json_string())
    }
}

impl fmt::Display for PathExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let inner = |f: &mut fmt::Formatter<'_>, j: &PathExpr| match j {
            PathExpr::Add(..) | PathExpr::Concat(..) => write!(f, "({j})"),
            _ => write!(f, "{j}"),
        };
        match self {
            PathExpr::Input(i) => write!(f, "${i}"),
            PathExpr::Child(j, k) => {
                inner(f, j)?;
                f.write_str(".")?;
                write_key(f, k)
            }
            PathExpr::Desc(j, k) => {
                inner(f, j)?;
                f.write_str("..")?;
                write_key(f, k)
            }
            PathExpr::Index(j, i) => {
                inner(f, j)?;
                write!(f, "[{i}]")
            }
            PathExpr::Slice(j, lo, hi) => {
                inner(f, j)?;
                write!(f, "[{lo}:{hi}]")
            }
            PathExpr::Length(j) => write!(f, "length({j})"),
            PathExpr::Add(v, j) => write!(f, "{v} + {j}"),
            PathExpr::Concat(v, j) => write!(f, "{v} ++ {j}"),
        }
    }
}

impl fmt::Display for BoolExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoolExpr::Eq(j, v) => write!(f, "{j} == {v}"),
            BoolExpr::Empty(j) => write!(f, "empty({j})"),
            BoolExpr::Not(b) => write!(f, "!({b})"),
            BoolExpr::And(a, b) => {
                write!(f, "{a} && ")?;
                match **b {
                    BoolExpr::And(..) => write!(f, "({b})"),
                    _ => write!(f, "{b}"),
                }
            }
        }
    }
}

impl fmt::Display for HiddenExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HiddenExpr::Path(p) => write!(f, "{p}"),
            HiddenExpr::Bool(b) => write!(f, "{b}"),
            HiddenExpr::Const(v) => write!(f, "{v}"),
            HiddenExpr::List(items) => {
                f.write_str("[")?;
                for (i, e) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{e}")?;
                }
                f.write_str("]")
            }
        }
    }
}

impl fmt::Display for HiddenFnBody {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for i in 0..self.arity {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "${i}")?;
        }
        write!(f, ") -> {}", self.body)
    }
}
