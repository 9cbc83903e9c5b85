//! Recorded API-call traces and per-trace variable valuations.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::dsl::BRANCH_PARAM;
use crate::json::{JsonObject, JsonValue};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceRecord {
    pub api: String,
    pub request: JsonObject,
    pub response: JsonValue,
}

pub type Trace = Vec<TraceRecord>;

/// A set of traces; trace indices are 1-based.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceSet {
    traces: Vec<Trace>,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("traces file is not valid JSON: {0}")]
    Json(String),
    #[error("traces file must be a JSON array of traces")]
    NotAnArray,
    #[error("trace {trace}: expected an array of events")]
    TraceNotAnArray { trace: usize },
    #[error("trace {trace}, event {event}: {message}")]
    Event { trace: usize, event: usize, message: String },
}

impl TraceSet {
    pub fn new(traces: Vec<Trace>) -> TraceSet {
        TraceSet { traces }
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    /// The trace with 1-based index `i`.
    pub fn get(&self, i: usize) -> &Trace {
        &self.traces[i - 1]
    }

    pub fn indices(&self) -> std::ops::RangeInclusive<usize> {
        1..=self.traces.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &Trace)> {
        self.traces.iter().enumerate().map(|(i, t)| (i + 1, t))
    }

    pub fn total_records(&self) -> usize {
        self.traces.iter().map(Vec::len).sum()
    }

    /// Default retry bound: one more than the longest trace.
    pub fn default_retry_bound(&self) -> usize {
        self.traces.iter().map(Vec::len).max().unwrap_or(0) + 1
    }

    pub fn to_json(&self) -> JsonValue {
        JsonValue::Array(
            self.traces
                .iter()
                .map(|t| {
                    JsonValue::Array(
                        t.iter()
                            .map(|r| {
                                let mut m = JsonObject::new();
                                m.insert("api".into(), JsonValue::String(r.api.clone()));
                                m.insert("request".into(), JsonValue::Object(r.request.clone()));
                                m.insert("response".into(), r.response.clone());
                                JsonValue::Object(m)
                            })
                            .collect(),
                    )
                })
                .collect(),
        )
    }
}

/// Reads `[[{"api", "request", "response"}, ...], ...]`.
pub fn parse_traces(bytes: &[u8]) -> Result<TraceSet, TraceError> {
    let root = JsonValue::parse_bytes(bytes).map_err(|e| TraceError::Json(e.to_string()))?;
    let JsonValue::Array(traces) = root else {
        return Err(TraceError::NotAnArray);
    };
    let mut out = Vec::with_capacity(traces.len());
    for (ti, t) in traces.into_iter().enumerate() {
        let trace = ti + 1;
        let JsonValue::Array(events) = t else {
            return Err(TraceError::TraceNotAnArray { trace });
        };
        let mut recs = Vec::with_capacity(events.len());
        for (ei, e) in events.into_iter().enumerate() {
            let event = ei + 1;
            let bad = |message: &str| TraceError::Event { trace, event, message: message.to_string() };
            let JsonValue::Object(mut m) = e else {
                return Err(bad("expected an object"));
            };
            let api = match m.shift_remove("api") {
                Some(JsonValue::String(s)) if !s.is_empty() => s,
                _ => return Err(bad("`api` must be a non-empty string")),
            };
            let request = match m.shift_remove("request") {
                Some(JsonValue::Object(r)) => r,
                _ => return Err(bad("`request` must be an object")),
            };
            let response = m.shift_remove("response").ok_or_else(|| bad("missing `response`"))?;
            recs.push(TraceRecord { api, request, response });
        }
        out.push(recs);
    }
    Ok(TraceSet { traces: out })
}

/// The value of one variable on one trace. A missing cell means the
/// variable was never bound on that trace.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Cell {
    Scalar(JsonValue),
    PerIteration(Vec<JsonValue>),
}

impl Cell {
    /// The value bound by the `k`-th execution of the binding statement.
    pub fn occurrence(&self, k: usize) -> Option<&JsonValue> {
        match self {
            Cell::Scalar(v) if k == 0 => Some(v),
            Cell::Scalar(_) => None,
            Cell::PerIteration(vs) => vs.get(k),
        }
    }

    pub fn scalar(&self) -> Option<&JsonValue> {
        match self {
            Cell::Scalar(v) => Some(v),
            Cell::PerIteration(_) => None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TraceValuation {
    pub params: Vec<String>,
    pub n_traces: usize,
    entries: BTreeMap<String, BTreeMap<usize, Cell>>,
}

impl TraceValuation {
    pub fn new(params: Vec<String>, n_traces: usize) -> TraceValuation {
        TraceValuation { params, n_traces, entries: BTreeMap::new() }
    }

    pub fn get(&self, var: &str, trace: usize) -> Option<&Cell> {
        self.entries.get(var)?.get(&trace)
    }

    pub fn set(&mut self, var: &str, trace: usize, cell: Cell) {
        self.entries.entry(var.to_string()).or_default().insert(trace, cell);
    }

    pub fn remove_var(&mut self, var: &str) {
        self.entries.remove(var);
    }

    pub fn vars(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    pub fn var_cells(&self, var: &str) -> Option<&BTreeMap<usize, Cell>> {
        self.entries.get(var)
    }

    /// Parameter values for one trace.
    pub fn inputs_for(&self, trace: usize) -> BTreeMap<String, JsonValue> {
        self.params
            .iter()
            .filter_map(|p| Some((p.clone(), self.get(p, trace)?.scalar()?.clone())))
            .collect()
    }

    /// Parameter witnesses for every trace.
    pub fn extract_inputs(&self) -> BTreeMap<String, BTreeMap<usize, JsonValue>> {
        self.params
            .iter()
            .map(|p| {
                let per: BTreeMap<usize, JsonValue> = (1..=self.n_traces)
                    .filter_map(|t| Some((t, self.get(p, t)?.scalar()?.clone())))
                    .collect();
                (p.clone(), per)
            })
            .collect()
    }
}

/// The valuation of the initial program: `br` is `i` on trace `i`.
pub fn initial_valuation(traces: &TraceSet) -> TraceValuation {
    let mut v = TraceValuation::new(vec![BRANCH_PARAM.to_string()], traces.len());
    for i in traces.indices() {
        v.set(BRANCH_PARAM, i, Cell::Scalar(JsonValue::Int(i as i64)));
    }
    v
}
