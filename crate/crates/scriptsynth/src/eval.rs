//! Big-step evaluation of scripts against an API oracle, replay checking
//! and instrumented runs that record what each statement saw.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::dsl::{CmpOp, Expr, Instruction, LoopId, Predicate, Program, SitePath};
use crate::hidden::eval_builtin;
use crate::json::{JsonObject, JsonValue};
use crate::trace::{Cell, Trace, TraceRecord, TraceSet, TraceValuation};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("unbound variable {0}")]
    Unbound(String),
    #[error("unknown hidden function {0}")]
    UnknownFunction(String),
    #[error("hole {0} has no value here")]
    UnresolvedHole(String),
    #[error("foreach over a non-list value {0}")]
    NotAList(String),
    #[error("call {index}: expected {expected} but the script called {got}")]
    Mismatch { index: usize, expected: String, got: String },
    #[error("call {index}: script called {got} after the trace ended")]
    Exhausted { index: usize, got: String },
    #[error("script stopped after {consumed} of {len} calls")]
    Incomplete { consumed: usize, len: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Token {
    Continue,
    Stop,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LocalState {
    pub vars: BTreeMap<String, JsonValue>,
    pub loop_counters: BTreeMap<LoopId, usize>,
}

/// The outside world a script talks to.
pub trait Oracle {
    fn call(&mut self, api: &str, request: &JsonObject) -> Result<JsonValue, EvalError>;
}

/// Serves responses from a recorded trace, demanding exact requests.
pub struct TraceOracle<'t> {
    records: &'t [TraceRecord],
    cursor: usize,
}

impl<'t> TraceOracle<'t> {
    pub fn new(records: &'t [TraceRecord]) -> Self {
        TraceOracle { records, cursor: 0 }
    }

    pub fn consumed(&self) -> usize {
        self.cursor
    }
}

impl Oracle for TraceOracle<'_> {
    fn call(&mut self, api: &str, request: &JsonObject) -> Result<JsonValue, EvalError> {
        let index = self.cursor + 1;
        let got = || format!("{api}({})", JsonValue::Object(request.clone()).canonical());
        let Some(rec) = self.records.get(self.cursor) else {
            return Err(EvalError::Exhausted { index, got: got() });
        };
        if rec.api != api || rec.request != *request {
            return Err(EvalError::Mismatch {
                index,
                expected: format!("{}({})", rec.api, JsonValue::Object(rec.request.clone()).canonical()),
                got: got(),
            });
        }
        self.cursor += 1;
        Ok(rec.response.clone())
    }
}

/// Observation points during evaluation.
pub trait Hooks {
    fn before(&mut self, _site: &SitePath, _st: &LocalState, _records: usize) {}
    fn after(&mut self, _site: &SitePath, _records: usize) {}
    fn bind(&mut self, _site: &SitePath, _var: &str, _value: &JsonValue) {}
    fn hole(
        &mut self,
        _site: &SitePath,
        _var: &str,
        func: &str,
        _args: &[Option<JsonValue>],
    ) -> Result<JsonValue, EvalError> {
        Err(EvalError::UnresolvedHole(func.to_string()))
    }
}

pub struct NoHooks;
impl Hooks for NoHooks {}

pub struct Outcome {
    pub state: LocalState,
    pub trace: Trace,
    pub token: Token,
}

struct Machine<'a, O: Oracle, H: Hooks> {
    program: &'a Program,
    oracle: &'a mut O,
    hooks: &'a mut H,
    k_bound: usize,
    emitted: Trace,
}

impl<O: Oracle, H: Hooks> Machine<'_, O, H> {
    fn seq(&mut self, seq: &[Instruction], prefix: &mut Vec<usize>, st: &mut LocalState) -> Result<Token, EvalError> {
        for (i, ins) in seq.iter().enumerate() {
            prefix.push(i);
            let site = SitePath(prefix.clone());
            self.hooks.before(&site, st, self.emitted.len());
            let tok = self.instr(ins, &site, prefix, st);
            self.hooks.after(&site, self.emitted.len());
            prefix.pop();
            if tok? == Token::Stop {
                return Ok(Token::Stop);
            }
        }
        Ok(Token::Continue)
    }

    fn block(
        &mut self,
        seq: &[Instruction],
        branch: usize,
        prefix: &mut Vec<usize>,
        st: &mut LocalState,
    ) -> Result<Token, EvalError> {
        prefix.push(branch);
        let r = self.seq(seq, prefix, st);
        prefix.pop();
        r
    }

    fn instr(
        &mut self,
        ins: &Instruction,
        site: &SitePath,
        prefix: &mut Vec<usize>,
        st: &mut LocalState,
    ) -> Result<Token, EvalError> {
        match ins {
            Instruction::LetVisible { var, api, args } => {
                let mut request = JsonObject::new();
                for (k, e) in args {
                    request.insert(k.clone(), eval_expr(self.program, e, &st.vars)?);
                }
                let response = self.oracle.call(api, &request)?;
                self.emitted.push(TraceRecord { api: api.clone(), request, response: response.clone() });
                self.hooks.bind(site, var, &response);
                st.vars.insert(var.clone(), response);
                Ok(Token::Continue)
            }
            Instruction::LetHidden { var, func, args } => {
                let vals: Vec<Option<JsonValue>> = args.iter().map(|a| st.vars.get(a).cloned()).collect();
                let v = if self.program.holes.contains(func) {
                    self.hooks.hole(site, var, func, &vals)?
                } else {
                    call_hidden(self.program, func, &vals)?
                };
                self.hooks.bind(site, var, &v);
                st.vars.insert(var.clone(), v);
                Ok(Token::Continue)
            }
            Instruction::Ite { cond, then_branch, else_branch } => {
                if eval_pred(cond, &st.vars)? {
                    self.block(then_branch, 0, prefix, st)
                } else {
                    self.block(else_branch, 1, prefix, st)
                }
            }
            Instruction::Retry { id, body, until } => {
                let mut count = 0;
                loop {
                    if self.block(body, 0, prefix, st)? == Token::Stop {
                        st.loop_counters.remove(id);
                        return Ok(Token::Stop);
                    }
                    count += 1;
                    st.loop_counters.insert(*id, count);
                    if eval_pred(until, &st.vars)? || count >= self.k_bound {
                        break;
                    }
                }
                st.loop_counters.remove(id);
                Ok(Token::Continue)
            }
            Instruction::Foreach { id, var, list, body } => {
                let items = match eval_expr(self.program, list, &st.vars)? {
                    JsonValue::Array(items) => items,
                    other => return Err(EvalError::NotAList(other.canonical())),
                };
                for (n, item) in items.into_iter().enumerate() {
                    st.loop_counters.insert(*id, n);
                    self.hooks.bind(site, var, &item);
                    st.vars.insert(var.clone(), item);
                    if self.block(body, 0, prefix, st)? == Token::Stop {
                        st.loop_counters.remove(id);
                        return Ok(Token::Stop);
                    }
                }
                st.loop_counters.remove(id);
                Ok(Token::Continue)
            }
            Instruction::Return => Ok(Token::Stop),
            Instruction::Empty => Ok(Token::Continue),
        }
    }
}

pub fn call_hidden(program: &Program, func: &str, args: &[Option<JsonValue>]) -> Result<JsonValue, EvalError> {
    if let Some(def) = program.hidden_defs.get(func) {
        return Ok(def.eval(args));
    }
    if program.holes.iter().any(|h| h == func) {
        return Err(EvalError::UnresolvedHole(func.to_string()));
    }
    eval_builtin(func, args).ok_or_else(|| EvalError::UnknownFunction(func.to_string()))
}

pub fn eval_expr(program: &Program, e: &Expr, vars: &BTreeMap<String, JsonValue>) -> Result<JsonValue, EvalError> {
    match e {
        Expr::Const(v) => Ok(v.clone()),
        Expr::Var(x) => vars.get(x).cloned().ok_or_else(|| EvalError::Unbound(x.clone())),
        Expr::Ternary(c, a, b) => {
            if eval_pred(c, vars)? {
                eval_expr(program, a, vars)
            } else {
                eval_expr(program, b, vars)
            }
        }
        Expr::HiddenCall(f, args) => {
            let vals: Vec<Option<JsonValue>> = args.iter().map(|a| vars.get(a).cloned()).collect();
            call_hidden(program, f, &vals)
        }
    }
}

pub fn eval_pred(p: &Predicate, vars: &BTreeMap<String, JsonValue>) -> Result<bool, EvalError> {
    let get = |x: &String| vars.get(x).ok_or_else(|| EvalError::Unbound(x.clone()));
    Ok(match p {
        Predicate::True => true,
        Predicate::False => false,
        Predicate::And(a, b) => eval_pred(a, vars)? && eval_pred(b, vars)?,
        Predicate::Or(a, b) => eval_pred(a, vars)? || eval_pred(b, vars)?,
        Predicate::Not(a) => !eval_pred(a, vars)?,
        Predicate::ValueCheck(x, v) => get(x)? == v,
        Predicate::Compare(x, op, y) => {
            let ord = match (get(x)?, get(y)?) {
                (JsonValue::Int(a), JsonValue::Int(b)) => a.cmp(b),
                (JsonValue::String(a), JsonValue::String(b)) => a.cmp(b),
                _ => return Ok(false),
            };
            match op {
                CmpOp::Ge => ord.is_ge(),
                CmpOp::Gt => ord.is_gt(),
                CmpOp::Le => ord.is_le(),
                CmpOp::Lt => ord.is_lt(),
            }
        }
    })
}

/// Runs `program` with the given parameter values.
pub fn evaluate<O: Oracle, H: Hooks>(
    program: &Program,
    inputs: &BTreeMap<String, JsonValue>,
    oracle: &mut O,
    hooks: &mut H,
    k_bound: usize,
) -> Result<Outcome, EvalError> {
    let mut st = LocalState::default();
    for p in &program.params {
        let v = inputs.get(p).ok_or_else(|| EvalError::Unbound(p.clone()))?;
        st.vars.insert(p.clone(), v.clone());
    }
    let mut m = Machine { program, oracle, hooks, k_bound, emitted: Vec::new() };
    let token = m.seq(&program.body, &mut Vec::new(), &mut st)?;
    Ok(Outcome { state: st, trace: m.emitted, token })
}

/// Replays `program` against `trace`; every call must match in order and
/// the whole trace must be consumed.
pub fn replay<H: Hooks>(
    program: &Program,
    inputs: &BTreeMap<String, JsonValue>,
    trace: &Trace,
    hooks: &mut H,
    k_bound: usize,
) -> Result<Outcome, EvalError> {
    let mut oracle = TraceOracle::new(trace);
    let out = evaluate(program, inputs, &mut oracle, hooks, k_bound)?;
    if oracle.consumed() != trace.len() {
        return Err(EvalError::Incomplete { consumed: oracle.consumed(), len: trace.len() });
    }
    Ok(out)
}

pub fn replay_check(program: &Program, inputs: &BTreeMap<String, JsonValue>, trace: &Trace, k_bound: usize) -> bool {
    replay(program, inputs, trace, &mut NoHooks, k_bound).is_ok()
}

/// One execution of one statement.
#[derive(Clone, Debug)]
pub struct Visit {
    pub site: SitePath,
    pub env: BTreeMap<String, JsonValue>,
    pub rec_start: usize,
    pub rec_end: usize,
}

#[derive(Clone, Debug)]
pub struct HoleCall {
    pub site: SitePath,
    pub var: String,
    pub func: String,
    pub args: Vec<Option<JsonValue>>,
    pub out: JsonValue,
}

/// Everything observed while replaying one trace.
#[derive(Clone, Debug, Default)]
pub struct ExecLog {
    pub visits: Vec<Visit>,
    pub holes: Vec<HoleCall>,
    pub bindings: Vec<(SitePath, String, JsonValue)>,
}

impl ExecLog {
    pub fn visits_of<'a>(&'a self, site: &'a SitePath) -> impl Iterator<Item = &'a Visit> + 'a {
        self.visits.iter().filter(move |v| &v.site == site)
    }
}

/// Records visits and answers holes from the values stored in a valuation.
struct Instrument<'a> {
    sigma: &'a TraceValuation,
    trace: usize,
    occurrences: BTreeMap<String, usize>,
    open: Vec<usize>,
    log: ExecLog,
}

impl Hooks for Instrument<'_> {
    fn before(&mut self, site: &SitePath, st: &LocalState, records: usize) {
        self.open.push(self.log.visits.len());
        self.log.visits.push(Visit { site: site.clone(), env: st.vars.clone(), rec_start: records, rec_end: records });
    }

    fn after(&mut self, _site: &SitePath, records: usize) {
        if let Some(i) = self.open.pop() {
            self.log.visits[i].rec_end = records;
        }
    }

    fn bind(&mut self, site: &SitePath, var: &str, value: &JsonValue) {
        self.log.bindings.push((site.clone(), var.to_string(), value.clone()));
    }

    fn hole(
        &mut self,
        site: &SitePath,
        var: &str,
        func: &str,
        args: &[Option<JsonValue>],
    ) -> Result<JsonValue, EvalError> {
        let k = self.occurrences.entry(var.to_string()).or_insert(0);
        let out = self
            .sigma
            .get(var, self.trace)
            .and_then(|c| c.occurrence(*k))
            .cloned()
            .ok_or_else(|| EvalError::UnresolvedHole(func.to_string()))?;
        *k += 1;
        self.log.holes.push(HoleCall {
            site: site.clone(),
            var: var.to_string(),
            func: func.to_string(),
            args: args.to_vec(),
            out: out.clone(),
        });
        Ok(out)
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("trace {trace}: {error}")]
pub struct PsiViolation {
    pub trace: usize,
    pub error: EvalError,
}

/// Replays every trace with hole outputs taken from `sigma`.
pub fn instrumented_replay(
    program: &Program,
    sigma: &TraceValuation,
    traces: &TraceSet,
    k_bound: usize,
) -> Result<Vec<ExecLog>, PsiViolation> {
    traces
        .iter()
        .map(|(i, trace)| {
            let mut hooks =
                Instrument { sigma, trace: i, occurrences: BTreeMap::new(), open: Vec::new(), log: ExecLog::default() };
            replay(program, &sigma.inputs_for(i), trace, &mut hooks, k_bound)
                .map_err(|error| PsiViolation { trace: i, error })?;
            Ok(hooks.log)
        })
        .collect()
}

/// Checks that `program` reproduces every trace under the witnesses in `sigma`.
pub fn check_psi(program: &Program, sigma: &TraceValuation, traces: &TraceSet, k_bound: usize) -> Result<(), PsiViolation> {
    instrumented_replay(program, sigma, traces, k_bound).map(|_| ())
}

/// Rebuilds every let-bound cell of `sigma` by replay; parameters and
/// hole outputs are kept as they are.
pub fn refresh_valuation(
    program: &Program,
    sigma: &TraceValuation,
    traces: &TraceSet,
    k_bound: usize,
) -> Result<(TraceValuation, Vec<ExecLog>), PsiViolation> {
    let logs = instrumented_replay(program, sigma, traces, k_bound)?;
    let mut fresh = TraceValuation::new(program.params.clone(), traces.len());
    for p in &program.params {
        if let Some(cells) = sigma.var_cells(p) {
            for (t, c) in cells {
                fresh.set(p, *t, c.clone());
            }
        }
    }
    let hole_vars = hole_bound_vars(program);
    for h in &hole_vars {
        if let Some(cells) = sigma.var_cells(h) {
            for (t, c) in cells {
                fresh.set(h, *t, c.clone());
            }
        }
    }
    for (ti, log) in logs.iter().enumerate() {
        let trace = ti + 1;
        let mut per_var: BTreeMap<&str, (bool, Vec<JsonValue>)> = BTreeMap::new();
        for (site, var, value) in &log.bindings {
            let looped = program.in_loop(site) || program.stmt(site).is_some_and(Instruction::is_loop);
            let e = per_var.entry(var.as_str()).or_insert((looped, Vec::new()));
            e.1.push(value.clone());
        }
        for (var, (looped, vals)) in per_var {
            if hole_vars.iter().any(|h| h == var) {
                continue;
            }
            let cell = if looped || vals.len() != 1 {
                Cell::PerIteration(vals)
            } else {
                Cell::Scalar(vals.into_iter().next().unwrap())
            };
            fresh.set(var, trace, cell);
        }
    }
    Ok((fresh, logs))
}

/// Variables bound by calls to open holes.
pub fn hole_bound_vars(program: &Program) -> Vec<String> {
    fn walk(seq: &[Instruction], holes: &[String], out: &mut Vec<String>) {
        for ins in seq {
            if let Instruction::LetHidden { var, func, .. } = ins {
                if holes.contains(func) {
                    out.push(var.clone());
                }
            }
            for b in ins.blocks() {
                walk(b, holes, out);
            }
        }
    }
    let mut out = Vec::new();
    walk(&program.body, &program.holes, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_program;
    use crate::trace::parse_traces;

    fn rec(api: &str, req: &str, resp: &str) -> TraceRecord {
        let JsonValue::Object(request) = JsonValue::parse(req).unwrap() else { panic!() };
        TraceRecord { api: api.into(), request, response: JsonValue::parse(resp).unwrap() }
    }

    #[test]
    fn retry_stops_on_predicate_or_bound() {
        let p = parse_program(
            "lambda .\nretry {\n  let d = s.Poll()\n  let st = f(d)\n} until st == \"done\"\nlet z = s.After()\nwhere\nf := ($0) -> $0.s\n",
        )
        .unwrap();
        let t = vec![
            rec("s.Poll", "{}", r#"{"s":"wait"}"#),
            rec("s.Poll", "{}", r#"{"s":"done"}"#),
            rec("s.After", "{}", "{}"),
        ];
        let out = replay(&p, &BTreeMap::new(), &t, &mut NoHooks, 4).unwrap();
        assert_eq!(out.trace.len(), 3);
        assert!(out.state.loop_counters.is_empty());
        // with K = 1 the loop gives up after one poll and the next call mismatches
        assert!(matches!(
            replay(&p, &BTreeMap::new(), &t, &mut NoHooks, 1),
            Err(EvalError::Mismatch { index: 2, .. })
        ));
    }

    #[test]
    fn empty_foreach_runs_zero_times() {
        let p = parse_program("lambda l.\nfor (x) in l {\n  let y = s.A(v=x)\n}\nlet z = s.B()\n").unwrap();
        let mut inputs = BTreeMap::new();
        inputs.insert("l".to_string(), JsonValue::parse("[]").unwrap());
        assert!(replay_check(&p, &inputs, &vec![rec("s.B", "{}", "1")], 3));
        inputs.insert("l".to_string(), JsonValue::parse("[1,2]").unwrap());
        let t = vec![rec("s.A", r#"{"v":1}"#, "0"), rec("s.A", r#"{"v":2}"#, "0"), rec("s.B", "{}", "1")];
        assert!(replay_check(&p, &inputs, &t, 3));
        assert!(!replay_check(&p, &inputs, &t[..2].to_vec(), 3));
    }

    #[test]
    fn request_match_ignores_key_order() {
        let p = parse_program("lambda .\nlet y = s.A(a=1, b=2)\nreturn\nlet z = s.B()\n").unwrap();
        let t = vec![rec("s.A", r#"{"b":2,"a":1}"#, "null")];
        let out = replay(&p, &BTreeMap::new(), &t, &mut NoHooks, 2).unwrap();
        assert_eq!(out.token, Token::Stop);
    }

    #[test]
    fn refresh_fills_cells() {
        let traces = parse_traces(
            br#"[[{"api":"s.A","request":{},"response":1},{"api":"s.A","request":{},"response":2}],
                [{"api":"s.A","request":{},"response":3}]]"#,
        )
        .unwrap();
        let p = parse_program("lambda br.\nif br == 1 {\n  let a = s.A()\n  let b = s.A()\n} else {\n  let c = s.A()\n}\n")
            .unwrap();
        let sigma = crate::trace::initial_valuation(&traces);
        let (v, logs) = refresh_valuation(&p, &sigma, &traces, 3).unwrap();
        assert_eq!(v.get("b", 1), Some(&Cell::Scalar(JsonValue::Int(2))));
        assert!(v.get("b", 2).is_none());
        assert_eq!(v.get("c", 2), Some(&Cell::Scalar(JsonValue::Int(3))));
        assert_eq!(logs[0].visits[0].rec_end, 2);
    }
}
