//! Bottom-up enumerative synthesis of hidden functions from input/output
//! examples, pruning candidates that agree on every example.

mod cache;

pub use cache::{constraint_digest, ConstraintCache};

use std::collections::{BTreeSet, HashMap, HashSet};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::hidden::{BoolExpr, HiddenExpr, HiddenFnBody, PathExpr, DESC_WEIGHT};
use crate::json::{constant_order, JsonValue};

/// One observation: a hidden-function call on `trace` with these
/// arguments must return `out`. `None` marks an argument never bound.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct IOExample {
    pub trace: usize,
    pub args: Vec<Option<JsonValue>>,
    pub out: JsonValue,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrammarConfig {
    pub arity: usize,
    pub keys: Vec<String>,
    pub values: Vec<JsonValue>,
    pub indices: Vec<i64>,
    pub addends: Vec<i64>,
    pub prefixes: Vec<String>,
    pub max_size: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SynthesisResult {
    Sat(HiddenFnBody),
    Unsat { timed_out: bool },
}

impl SynthesisResult {
    pub fn is_sat(&self) -> bool {
        matches!(self, SynthesisResult::Sat(_))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PbeOptions {
    pub max_size: usize,
    pub timeout: Duration,
}

impl Default for PbeOptions {
    fn default() -> Self {
        PbeOptions { max_size: 12, timeout: Duration::from_secs(10) }
    }
}

/// Largest addend kept for `v + J`.
const ADDEND_LIMIT: i64 = 16;
/// Largest index mined from array lengths.
const INDEX_LIMIT: usize = 16;
/// Key count above which the grammar is split and searched in parallel.
const SPLIT_KEYS: usize = 64;

fn walk_values<'a>(v: &'a JsonValue, keys: &mut BTreeSet<String>, leaves: &mut Vec<&'a JsonValue>, max_len: &mut usize) {
    for t in v.subterms() {
        match t {
            JsonValue::Object(map) => keys.extend(map.keys().cloned()),
            JsonValue::Array(items) => {
                *max_len = (*max_len).max(items.len());
                if !items.is_empty() && items.iter().all(JsonValue::is_scalar) {
                    leaves.push(t);
                }
            }
            JsonValue::Null => {}
            _ => leaves.push(t),
        }
    }
}

/// Derives the grammar constants from the examples themselves.
pub fn mine_constants(examples: &[IOExample], max_size: usize) -> GrammarConfig {
    let arity = examples.iter().map(|e| e.args.len()).max().unwrap_or(0);
    let mut keys = BTreeSet::new();
    let mut leaves: Vec<&JsonValue> = Vec::new();
    let mut max_len = 0;
    for e in examples {
        for a in e.args.iter().flatten() {
            walk_values(a, &mut keys, &mut leaves, &mut max_len);
        }
        walk_values(&e.out, &mut keys, &mut leaves, &mut max_len);
        leaves.push(&e.out);
    }
    let mut values: Vec<JsonValue> = Vec::new();
    let mut seen = HashSet::new();
    for v in leaves {
        if seen.insert(v.clone()) {
            values.push(v.clone());
        }
    }
    values.sort_by(constant_order);
    let max_len = max_len.min(INDEX_LIMIT);
    let indices = (0..=max_len as i64).collect();
    let addends = values
        .iter()
        .filter_map(|v| match v {
            JsonValue::Int(n) if n.abs() <= ADDEND_LIMIT && *n != 0 => Some(*n),
            _ => None,
        })
        .collect();
    let strings: Vec<&str> = values.iter().filter_map(JsonValue::as_str).collect();
    let prefixes = strings
        .iter()
        .filter(|p| !p.is_empty() && strings.iter().any(|w| w.len() > p.len() && w.starts_with(**p)))
        .map(|p| p.to_string())
        .collect();
    GrammarConfig { arity, keys: keys.into_iter().collect(), values, indices, addends, prefixes, max_size }
}

/// Partitions the key set into `n` grammars, spreading frequent keys.
pub fn split_subgrammars(cfg: &GrammarConfig, examples: &[IOExample], n: usize) -> Vec<GrammarConfig> {
    let n = n.max(1);
    let mut freq: HashMap<&str, usize> = HashMap::new();
    for e in examples {
        for a in e.args.iter().flatten().chain(std::iter::once(&e.out)) {
            for t in a.subterms() {
                if let JsonValue::Object(map) = t {
                    for k in map.keys() {
                        *freq.entry(k.as_str()).or_default() += 1;
                    }
                }
            }
        }
    }
    let mut keys: Vec<&String> = cfg.keys.iter().collect();
    keys.sort_by(|a, b| freq.get(b.as_str()).cmp(&freq.get(a.as_str())).then_with(|| a.cmp(b)));
    let mut parts: Vec<Vec<String>> = vec![Vec::new(); n];
    for (i, k) in keys.into_iter().enumerate() {
        parts[i % n].push(k.clone());
    }
    parts
        .into_iter()
        .map(|mut ks| {
            ks.sort();
            GrammarConfig { keys: ks, ..cfg.clone() }
        })
        .collect()
}

struct Enumerator<'a> {
    cfg: &'a GrammarConfig,
    examples: &'a [IOExample],
    target: Vec<JsonValue>,
    bool_target: Option<Vec<bool>>,
    jpool: Vec<Vec<(PathExpr, Vec<JsonValue>)>>,
    bpool: Vec<Vec<(BoolExpr, Vec<bool>)>>,
    jseen: HashSet<Vec<JsonValue>>,
    bseen: HashSet<Vec<bool>>,
    deadline: Instant,
    ticks: u64,
    timed_out: bool,
}

enum Step {
    Found(HiddenExpr),
    Continue,
    Stop,
}

impl Enumerator<'_> {
    fn tick(&mut self) -> bool {
        self.ticks += 1;
        if self.ticks.is_multiple_of(512) && Instant::now() >= self.deadline {
            self.timed_out = true;
        }
        self.timed_out
    }

    fn offer_path(&mut self, size: usize, e: PathExpr, sig: Vec<JsonValue>) -> Step {
        if self.tick() {
            return Step::Stop;
        }
        if self.jseen.contains(&sig) {
            return Step::Continue;
        }
        if sig == self.target {
            return Step::Found(HiddenExpr::Path(e));
        }
        self.jseen.insert(sig.clone());
        self.jpool[size].push((e, sig));
        Step::Continue
    }

    fn offer_bool(&mut self, size: usize, e: BoolExpr, sig: Vec<bool>) -> Step {
        if self.tick() {
            return Step::Stop;
        }
        if self.bseen.contains(&sig) {
            return Step::Continue;
        }
        if self.bool_target.as_ref() == Some(&sig) {
            return Step::Found(HiddenExpr::Bool(e));
        }
        self.bseen.insert(sig.clone());
        self.bpool[size].push((e, sig));
        Step::Continue
    }

    fn run(&mut self) -> Option<HiddenExpr> {
        macro_rules! offer {
            ($r:expr) => {
                match $r {
                    Step::Found(e) => return Some(e),
                    Step::Stop => return None,
                    Step::Continue => {}
                }
            };
        }
        let n = self.examples.len();
        for size in 1..=self.cfg.max_size {
            if size == 1 {
                for i in 0..self.cfg.arity {
                    let sig = self.examples.iter().map(|e| PathExpr::Input(i).eval(&e.args)).collect();
                    offer!(self.offer_path(1, PathExpr::Input(i), sig));
                }
                for v in &self.cfg.values {
                    if self.target.iter().all(|t| t == v) {
                        return Some(HiddenExpr::Const(v.clone()));
                    }
                }
                continue;
            }
            let prev: Vec<(PathExpr, Vec<JsonValue>)> = self.jpool[size - 1].clone();
            for (j, sig) in &prev {
                let present: HashSet<&String> = sig
                    .iter()
                    .filter_map(|v| match v {
                        JsonValue::Object(m) => Some(m.keys()),
                        _ => None,
                    })
                    .flatten()
                    .collect();
                let null_sig = vec![JsonValue::Null; n];
                for k in &self.cfg.keys {
                    if !present.contains(k) && self.jseen.contains(&null_sig) {
                        continue;
                    }
                    let out = sig
                        .iter()
                        .map(|v| match v {
                            JsonValue::Object(m) => m.get(k).cloned().unwrap_or(JsonValue::Null),
                            _ => JsonValue::Null,
                        })
                        .collect();
                    offer!(self.offer_path(size, PathExpr::Child(Box::new(j.clone()), k.clone()), out));
                }
            }
            if size > DESC_WEIGHT {
                let base: Vec<(PathExpr, Vec<JsonValue>)> = self.jpool[size - DESC_WEIGHT].clone();
                for (j, _) in &base {
                    for k in &self.cfg.keys {
                        let e = PathExpr::Desc(Box::new(j.clone()), k.clone());
                        let out = self.examples.iter().map(|x| e.eval(&x.args)).collect();
                        offer!(self.offer_path(size, e, out));
                    }
                }
            }
            for (j, sig) in &prev {
                if !sig.iter().any(|v| matches!(v, JsonValue::Array(_))) {
                    continue;
                }
                for &i in &self.cfg.indices {
                    let e = PathExpr::Index(Box::new(j.clone()), i);
                    let out = self.examples.iter().map(|x| e.eval(&x.args)).collect();
                    offer!(self.offer_path(size, e, out));
                }
                for (a, &lo) in self.cfg.indices.iter().enumerate() {
                    for &hi in &self.cfg.indices[a + 1..] {
                        let e = PathExpr::Slice(Box::new(j.clone()), lo, hi);
                        let out = self.examples.iter().map(|x| e.eval(&x.args)).collect();
                        offer!(self.offer_path(size, e, out));
                    }
                }
                let e = PathExpr::Length(Box::new(j.clone()));
                let out = self.examples.iter().map(|x| e.eval(&x.args)).collect();
                offer!(self.offer_path(size, e, out));
            }
            for (j, sig) in &prev {
                if sig.iter().any(|v| matches!(v, JsonValue::Int(_))) {
                    for &a in &self.cfg.addends {
                        let e = PathExpr::Add(JsonValue::Int(a), Box::new(j.clone()));
                        let out = self.examples.iter().map(|x| e.eval(&x.args)).collect();
                        offer!(self.offer_path(size, e, out));
                    }
                }
                if sig.iter().any(|v| matches!(v, JsonValue::String(_))) {
                    for p in &self.cfg.prefixes {
                        let e = PathExpr::Concat(JsonValue::String(p.clone()), Box::new(j.clone()));
                        let out = self.examples.iter().map(|x| e.eval(&x.args)).collect();
                        offer!(self.offer_path(size, e, out));
                    }
                }
            }
            // boolean productions
            let mut by_value: HashMap<&JsonValue, Vec<usize>> = HashMap::new();
            for (idx, (_, sig)) in prev.iter().enumerate() {
                let mut seen_here = HashSet::new();
                for v in sig {
                    if seen_here.insert(v) {
                        by_value.entry(v).or_default().push(idx);
                    }
                }
            }
            if !prev.is_empty() && !self.bseen.contains(&vec![false; n]) {
                if let Some(v) = self.cfg.values.iter().find(|v| !prev[0].1.contains(v)) {
                    offer!(self.offer_bool(size, BoolExpr::Eq(prev[0].0.clone(), v.clone()), vec![false; n]));
                }
            }
            for v in &self.cfg.values {
                let Some(idxs) = by_value.get(v) else { continue };
                for &idx in idxs {
                    let (j, sig) = &prev[idx];
                    let out = sig.iter().map(|x| x == v).collect();
                    offer!(self.offer_bool(size, BoolExpr::Eq(j.clone(), v.clone()), out));
                }
            }
            for (j, sig) in &prev {
                let out = sig
                    .iter()
                    .map(|v| match v {
                        JsonValue::Null => true,
                        JsonValue::Array(items) => items.is_empty(),
                        _ => false,
                    })
                    .collect();
                offer!(self.offer_bool(size, BoolExpr::Empty(j.clone()), out));
            }
            let bprev: Vec<(BoolExpr, Vec<bool>)> = self.bpool[size - 1].clone();
            for (b, sig) in &bprev {
                let out = sig.iter().map(|x| !x).collect();
                offer!(self.offer_bool(size, BoolExpr::Not(Box::new(b.clone())), out));
            }
            for left in 1..size - 1 {
                let right = size - 1 - left;
                let ls: Vec<(BoolExpr, Vec<bool>)> = self.bpool[left].clone();
                let rs: Vec<(BoolExpr, Vec<bool>)> = self.bpool[right].clone();
                for (a, sa) in &ls {
                    for (b, sb) in &rs {
                        let out = sa.iter().zip(sb).map(|(x, y)| *x && *y).collect();
                        offer!(self.offer_bool(size, BoolExpr::And(Box::new(a.clone()), Box::new(b.clone())), out));
                    }
                }
            }
        }
        None
    }
}

/// Searches `cfg` in size order and returns the first expression that
/// satisfies every example.
pub fn synthesize_with(examples: &[IOExample], cfg: &GrammarConfig, deadline: Instant) -> SynthesisResult {
    let target: Vec<JsonValue> = examples.iter().map(|e| e.out.clone()).collect();
    let bool_target = target.iter().map(JsonValue::as_bool).collect::<Option<Vec<bool>>>();
    if examples.is_empty() {
        return SynthesisResult::Sat(HiddenFnBody { arity: cfg.arity, body: HiddenExpr::Const(JsonValue::Null) });
    }
    let mut en = Enumerator {
        cfg,
        examples,
        target,
        bool_target,
        jpool: vec![Vec::new(); cfg.max_size + 1],
        bpool: vec![Vec::new(); cfg.max_size + 1],
        jseen: HashSet::new(),
        bseen: HashSet::new(),
        deadline,
        ticks: 0,
        timed_out: false,
    };
    match en.run() {
        Some(body) => SynthesisResult::Sat(HiddenFnBody { arity: cfg.arity, body }),
        None => SynthesisResult::Unsat { timed_out: en.timed_out },
    }
}

/// Mines the grammar and searches it, splitting very wide key sets.
pub fn synthesize(examples: &[IOExample], opts: &PbeOptions) -> SynthesisResult {
    let deadline = Instant::now() + opts.timeout;
    let cfg = mine_constants(examples, opts.max_size);
    if cfg.keys.len() <= SPLIT_KEYS {
        return synthesize_with(examples, &cfg, deadline);
    }
    let parts = split_subgrammars(&cfg, examples, cfg.keys.len().div_ceil(SPLIT_KEYS / 2));
    let results: Vec<SynthesisResult> = std::thread::scope(|s| {
        let handles: Vec<_> = parts.iter().map(|g| s.spawn(move || synthesize_with(examples, g, deadline))).collect();
        handles.into_iter().map(|h| h.join().expect("synthesis worker panicked")).collect()
    });
    let mut best: Option<HiddenFnBody> = None;
    let mut timed_out = false;
    for r in results {
        match r {
            SynthesisResult::Sat(f) => {
                if best.as_ref().is_none_or(|b| f.body.size() < b.body.size()) {
                    best = Some(f);
                }
            }
            SynthesisResult::Unsat { timed_out: t } => timed_out |= t,
        }
    }
    match best {
        Some(f) => SynthesisResult::Sat(f),
        None => SynthesisResult::Unsat { timed_out },
    }
}

#[derive(Debug, Error)]
pub enum ExamplesError {
    #[error("examples file is not valid JSON: {0}")]
    Json(String),
    #[error("example {0}: expected an object with `args` (array) and `out`")]
    Shape(usize),
}

/// Reads `[{"args": [...], "out": ...}, ...]`.
pub fn parse_examples(bytes: &[u8]) -> Result<Vec<IOExample>, ExamplesError> {
    let root = JsonValue::parse_bytes(bytes).map_err(|e| ExamplesError::Json(e.to_string()))?;
    let JsonValue::Array(items) = root else {
        return Err(ExamplesError::Json("expected an array".into()));
    };
    items
        .into_iter()
        .enumerate()
        .map(|(i, item)| {
            let JsonValue::Object(mut m) = item else { return Err(ExamplesError::Shape(i + 1)) };
            let Some(JsonValue::Array(args)) = m.shift_remove("args") else {
                return Err(ExamplesError::Shape(i + 1));
            };
            let out = m.shift_remove("out").ok_or(ExamplesError::Shape(i + 1))?;
            Ok(IOExample { trace: i + 1, args: args.into_iter().map(Some).collect(), out })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex(args: &[&str], out: &str) -> IOExample {
        IOExample {
            trace: 0,
            args: args.iter().map(|a| Some(JsonValue::parse(a).unwrap())).collect(),
            out: JsonValue::parse(out).unwrap(),
        }
    }

    fn solve(examples: &[IOExample]) -> String {
        match synthesize(examples, &PbeOptions::default()) {
            SynthesisResult::Sat(f) => f.body.to_string(),
            SynthesisResult::Unsat { .. } => "UNSAT".into(),
        }
    }

    #[test]
    fn finds_child_paths() {
        let e = vec![
            ex(&[r#"{"channels":[{"id":"C1"},{"id":"C2"}]}"#], r#""C1""#),
            ex(&[r#"{"channels":[{"id":"C7"}]}"#], r#""C7""#),
        ];
        assert_eq!(solve(&e), "$0.channels[0].id");
    }

    #[test]
    fn finds_descendant_lists() {
        let e = vec![
            ex(&[r#"{"data":[{"email":"a"},{"email":"b"}]}"#], r#"["a","b"]"#),
            ex(&[r#"{"data":[{"email":"c"}]}"#], r#"["c"]"#),
        ];
        assert_eq!(solve(&e), "$0..email");
    }

    #[test]
    fn unsat_when_outputs_conflict() {
        let e = vec![ex(&["1"], "true"), ex(&["1"], "false")];
        assert_eq!(solve(&e), "UNSAT");
    }

    #[test]
    fn mines_flat_arrays_and_outputs() {
        let e = vec![ex(&[r#"["i-1"]"#, r#"{"a":{"b":3}}"#], "true")];
        let cfg = mine_constants(&e, 12);
        assert!(cfg.values.contains(&JsonValue::parse(r#"["i-1"]"#).unwrap()));
        assert!(cfg.values.contains(&JsonValue::Int(3)));
        assert!(cfg.values.contains(&JsonValue::Bool(true)));
        assert_eq!(cfg.keys, vec!["a", "b"]);
    }

    #[test]
    fn split_covers_all_keys() {
        let e = vec![ex(&[r#"{"a":1,"b":2,"c":{"a":3}}"#], "1")];
        let cfg = mine_constants(&e, 5);
        let parts = split_subgrammars(&cfg, &e, 2);
        let mut all: Vec<String> = parts.iter().flat_map(|p| p.keys.clone()).collect();
        all.sort();
        assert_eq!(all, cfg.keys);
        assert_eq!(parts[0].keys, vec!["a", "c"]);
    }

    #[test]
    fn examples_file() {
        let e = parse_examples(br#"[{"args":[1],"out":2}]"#).unwrap();
        assert_eq!(e[0].args, vec![Some(JsonValue::Int(1))]);
        assert!(parse_examples(br#"[{"args":1}]"#).is_err());
    }
}
