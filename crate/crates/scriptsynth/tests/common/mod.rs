//! Shared generators and oracles for the integration suites.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scriptsynth::dsl::{parse_hidden_fn, Expr, Instruction, LoopId, NamedArgs, Predicate, Program};
use scriptsynth::eval::{evaluate, EvalError, NoHooks, Oracle};
use scriptsynth::hidden::{BoolExpr, HiddenExpr, HiddenFnBody, PathExpr};
use scriptsynth::json::{JsonObject, JsonValue};
use scriptsynth::pbe::{GrammarConfig, IOExample};
use scriptsynth::trace::{Cell, Trace, TraceSet, TraceValuation};

/// Retry bound used for every generated program.
pub const K: usize = 3;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn s(v: &str) -> JsonValue {
    JsonValue::String(v.to_string())
}

const APIS: [&str; 3] = ["svc.Get", "svc.Put", "svc.List"];
const KEYS: [&str; 3] = ["Name", "Id", "Mode"];
const STATUSES: [&str; 3] = ["ok", "pending", "done"];

/// Answers every call with a small random object.
pub struct RandomOracle {
    rng: ChaCha8Rng,
    n: usize,
}

impl RandomOracle {
    pub fn new(seed: u64) -> Self {
        RandomOracle { rng: rng(seed), n: 0 }
    }
}

impl Oracle for RandomOracle {
    fn call(&mut self, _api: &str, _request: &JsonObject) -> Result<JsonValue, EvalError> {
        self.n += 1;
        let mut o = JsonObject::new();
        o.insert("status".into(), s(STATUSES.choose(&mut self.rng).unwrap()));
        o.insert("id".into(), s(&format!("r{}", self.n)));
        let items = (0..self.rng.gen_range(0..3)).map(|i| s(&format!("it{i}"))).collect();
        o.insert("items".into(), JsonValue::Array(items));
        Ok(JsonValue::Object(o))
    }
}

struct Gen<'r> {
    rng: &'r mut ChaCha8Rng,
    budget: usize,
    conds: usize,
    loops: usize,
    next_var: usize,
    params: Vec<String>,
    defs: BTreeMap<String, HiddenFnBody>,
}

impl Gen<'_> {
    fn fresh(&mut self) -> String {
        self.next_var += 1;
        format!("a{}", self.next_var)
    }

    fn status_fn(&mut self) -> String {
        let name = "status_of".to_string();
        self.defs.insert(name.clone(), parse_hidden_fn("($0) -> $0.status").unwrap());
        name
    }

    fn arg(&mut self, scope: &[String]) -> Expr {
        let scalar_params: Vec<&String> = self.params.iter().filter(|p| *p != "lst").collect();
        match self.rng.gen_range(0..4) {
            0 | 1 => Expr::Const(s(["x", "y", "z"].choose(self.rng).unwrap())),
            2 if !scalar_params.is_empty() => Expr::Var(scalar_params.choose(self.rng).unwrap().to_string()),
            _ if !scope.is_empty() => Expr::Var(scope.choose(self.rng).unwrap().clone()),
            _ => Expr::Const(JsonValue::Int(self.rng.gen_range(0..3))),
        }
    }

    fn call(&mut self, scope: &[String]) -> Instruction {
        let api = APIS.choose(self.rng).unwrap().to_string();
        let mut args = NamedArgs::new();
        let n = self.rng.gen_range(1..=2);
        for k in KEYS.choose_multiple(self.rng, n) {
            let e = self.arg(scope);
            args.insert(k.to_string(), e);
        }
        Instruction::LetVisible { var: self.fresh(), api, args }
    }

    /// Adds statements to `out`; `scope` grows with variables bound on
    /// every path through the sequence.
    fn seq(&mut self, scope: &mut Vec<String>, out: &mut Vec<Instruction>, depth: usize) {
        let n = self.rng.gen_range(1..=3);
        for _ in 0..n {
            if self.budget == 0 {
                return;
            }
            self.budget -= 1;
            let pick = self.rng.gen_range(0..10);
            match pick {
                0 | 1 if self.conds < 2 && depth < 2 => {
                    self.conds += 1;
                    let cond = self.cond(scope);
                    let mut t = Vec::new();
                    let mut e = Vec::new();
                    self.seq(&mut scope.clone(), &mut t, depth + 1);
                    if self.rng.gen_bool(0.6) {
                        self.seq(&mut scope.clone(), &mut e, depth + 1);
                    }
                    if self.rng.gen_bool(0.15) && self.budget > 0 {
                        self.budget -= 1;
                        t.push(Instruction::Return);
                    }
                    out.push(Instruction::Ite { cond, then_branch: t, else_branch: e });
                }
                2 if self.loops < 1 && depth < 2 && self.budget >= 2 => {
                    self.loops += 1;
                    if self.params.iter().any(|p| p == "lst") && self.rng.gen_bool(0.5) {
                        let var = self.fresh();
                        let mut inner = scope.clone();
                        inner.push(var.clone());
                        let mut body = Vec::new();
                        self.budget -= 1;
                        body.push(self.call(&inner));
                        out.push(Instruction::Foreach {
                            id: LoopId(0),
                            var,
                            list: Expr::Var("lst".into()),
                            body,
                        });
                    } else {
                        self.budget -= 2;
                        let call = self.call(scope);
                        let x = call.bound_var().unwrap().to_string();
                        let f = self.status_fn();
                        let st = self.fresh();
                        let body = vec![call, Instruction::LetHidden { var: st.clone(), func: f, args: vec![x.clone()] }];
                        out.push(Instruction::Retry {
                            id: LoopId(0),
                            body,
                            until: Predicate::ValueCheck(st.clone(), s("done")),
                        });
                        scope.push(x);
                        scope.push(st);
                    }
                }
                3 if !scope.is_empty() => {
                    let x = scope.choose(self.rng).unwrap().clone();
                    let f = self.status_fn();
                    let v = self.fresh();
                    out.push(Instruction::LetHidden { var: v.clone(), func: f, args: vec![x] });
                    scope.push(v);
                }
                _ => {
                    let c = self.call(scope);
                    scope.push(c.bound_var().unwrap().to_string());
                    out.push(c);
                }
            }
        }
    }

    fn cond(&mut self, scope: &[String]) -> Predicate {
        let scalar: Vec<&String> = self.params.iter().filter(|p| *p != "lst").collect();
        let base = if !scalar.is_empty() && self.rng.gen_bool(0.6) {
            let p = scalar.choose(self.rng).unwrap().to_string();
            let v = if p == "q" { JsonValue::Int(self.rng.gen_range(1..=2)) } else { s(["x", "y"].choose(self.rng).unwrap()) };
            Predicate::ValueCheck(p, v)
        } else if let Some(x) = scope.choose(self.rng) {
            Predicate::ValueCheck(x.clone(), JsonValue::Null).negate()
        } else {
            Predicate::True
        };
        if self.rng.gen_bool(0.2) {
            base.negate()
        } else {
            base
        }
    }
}

/// A random closed program with at most 8 statements, 2 conditionals and
/// one loop.
pub fn random_program(r: &mut ChaCha8Rng) -> Program {
    let mut params: Vec<String> = ["p", "q", "lst"].iter().filter(|_| r.gen_bool(0.6)).map(|p| p.to_string()).collect();
    if params.is_empty() {
        params.push("p".into());
    }
    let mut g = Gen { rng: r, budget: 8, conds: 0, loops: 0, next_var: 0, params: params.clone(), defs: BTreeMap::new() };
    let mut body = Vec::new();
    let mut scope = Vec::new();
    while body.is_empty() {
        g.seq(&mut scope, &mut body, 0);
        if g.budget == 0 {
            break;
        }
    }
    let mut p = Program::new(params, body);
    p.hidden_defs = g.defs;
    p.renumber_loops();
    p
}

pub fn random_inputs(p: &Program, r: &mut ChaCha8Rng) -> BTreeMap<String, JsonValue> {
    p.params
        .iter()
        .map(|name| {
            let v = match name.as_str() {
                "q" => JsonValue::Int(r.gen_range(1..=2)),
                "lst" => JsonValue::Array((0..r.gen_range(0..=2)).map(|i| s(&format!("e{i}"))).collect()),
                _ => s(["x", "y"].choose(r).unwrap()),
            };
            (name.clone(), v)
        })
        .collect()
}

/// Runs `p` on `n` random inputs, returning the traces and the inputs
/// that produced them as a valuation.
pub fn self_replay(p: &Program, n: usize, r: &mut ChaCha8Rng) -> Option<(TraceSet, TraceValuation)> {
    let mut traces: Vec<Trace> = Vec::new();
    let mut sigma = TraceValuation::new(p.params.clone(), n);
    for t in 1..=n {
        let inputs = random_inputs(p, r);
        let mut oracle = RandomOracle::new(r.gen());
        let out = evaluate(p, &inputs, &mut oracle, &mut NoHooks, K).ok()?;
        for (k, v) in inputs {
            sigma.set(&k, t, Cell::Scalar(v));
        }
        traces.push(out.trace);
    }
    Some((TraceSet::new(traces), sigma))
}

/// Every expression of the hidden grammar up to `max_size`, with no
/// pruning at all.
pub fn brute_force(examples: &[IOExample], cfg: &GrammarConfig) -> Option<HiddenExpr> {
    let ok = |e: &HiddenExpr| examples.iter().all(|x| e.eval(&x.args) == x.out);
    if examples.is_empty() {
        return Some(HiddenExpr::Const(JsonValue::Null));
    }
    let n = cfg.max_size;
    let mut paths: Vec<Vec<PathExpr>> = vec![Vec::new(); n + 1];
    let mut bools: Vec<Vec<BoolExpr>> = vec![Vec::new(); n + 1];
    if n >= 1 {
        paths[1] = (0..cfg.arity).map(PathExpr::Input).collect();
        for v in &cfg.values {
            let c = HiddenExpr::Const(v.clone());
            if ok(&c) {
                return Some(c);
            }
        }
    }
    for size in 2..=n {
        let mut next = Vec::new();
        for j in &paths[size - 1] {
            let b = || Box::new(j.clone());
            for k in &cfg.keys {
                next.push(PathExpr::Child(b(), k.clone()));
            }
            for &i in &cfg.indices {
                next.push(PathExpr::Index(b(), i));
            }
            for (a, &lo) in cfg.indices.iter().enumerate() {
                for &hi in &cfg.indices[a + 1..] {
                    next.push(PathExpr::Slice(b(), lo, hi));
                }
            }
            next.push(PathExpr::Length(b()));
            for &a in &cfg.addends {
                next.push(PathExpr::Add(JsonValue::Int(a), b()));
            }
            for p in &cfg.prefixes {
                next.push(PathExpr::Concat(s(p), b()));
            }
        }
        if size > scriptsynth::hidden::DESC_WEIGHT {
            for j in &paths[size - scriptsynth::hidden::DESC_WEIGHT] {
                for k in &cfg.keys {
                    next.push(PathExpr::Desc(Box::new(j.clone()), k.clone()));
                }
            }
        }
        let mut nb = Vec::new();
        for j in &paths[size - 1] {
            for v in &cfg.values {
                nb.push(BoolExpr::Eq(j.clone(), v.clone()));
            }
            nb.push(BoolExpr::Empty(j.clone()));
        }
        for b in &bools[size - 1] {
            nb.push(BoolExpr::Not(Box::new(b.clone())));
        }
        for left in 1..size.saturating_sub(1) {
            let right = size - 1 - left;
            for a in &bools[left] {
                for b in &bools[right] {
                    nb.push(BoolExpr::And(Box::new(a.clone()), Box::new(b.clone())));
                }
            }
        }
        for p in &next {
            let e = HiddenExpr::Path(p.clone());
            if ok(&e) {
                return Some(e);
            }
        }
        for b in &nb {
            let e = HiddenExpr::Bool(b.clone());
            if ok(&e) {
                return Some(e);
            }
        }
        paths[size] = next;
        bools[size] = nb;
    }
    None
}

fn random_json(r: &mut ChaCha8Rng, depth: usize) -> JsonValue {
    match r.gen_range(0..if depth == 0 { 3 } else { 5 }) {
        0 => JsonValue::Int(r.gen_range(0..4)),
        1 => s(["a", "ab", "b"].choose(r).unwrap()),
        2 => JsonValue::Bool(r.gen()),
        3 => JsonValue::Array((0..r.gen_range(0..3)).map(|_| random_json(r, depth - 1)).collect()),
        _ => {
            let mut o = JsonObject::new();
            let n = r.gen_range(1..3);
            for k in ["k", "m", "n"].choose_multiple(r, n) {
                o.insert(k.to_string(), random_json(r, depth - 1));
            }
            JsonValue::Object(o)
        }
    }
}

/// A small PBE problem: outputs come from a random target expression
/// half the time and are arbitrary otherwise.
pub fn random_examples(r: &mut ChaCha8Rng) -> Vec<IOExample> {
    let arity = r.gen_range(1..=2);
    let n = r.gen_range(1..=3);
    let target = match r.gen_range(0..4) {
        0 => Some(HiddenExpr::Path(PathExpr::Child(Box::new(PathExpr::Input(0)), "k".into()))),
        1 => Some(HiddenExpr::Path(PathExpr::Index(Box::new(PathExpr::Child(Box::new(PathExpr::Input(arity - 1)), "m".into())), 0))),
        2 => Some(HiddenExpr::Bool(BoolExpr::Eq(PathExpr::Child(Box::new(PathExpr::Input(0)), "n".into()), JsonValue::Int(1)))),
        _ => None,
    };
    (0..n)
        .map(|t| {
            let args: Vec<Option<JsonValue>> = (0..arity).map(|_| Some(random_json(r, 2))).collect();
            let out = match &target {
                Some(e) => e.eval(&args),
                None => random_json(r, 1),
            };
            IOExample { trace: t + 1, args, out }
        })
        .collect()
}

/// Outcome of a randomized suite: how many cases ran and what failed.
#[derive(Debug, Default)]
pub struct SuiteReport {
    pub cases: usize,
    pub checks: usize,
    pub failures: Vec<String>,
}

/// Print, parse and compare `n` random programs.
pub fn roundtrip_suite(n: u64) -> SuiteReport {
    use scriptsynth::dsl::{parse_program, print_program};
    let mut rep = SuiteReport::default();
    for seed in 0..n {
        let p = random_program(&mut rng(seed));
        let text = print_program(&p);
        rep.cases += 1;
        rep.checks += 1;
        match parse_program(&text) {
            Ok(q) if q == p => {}
            Ok(_) => rep.failures.push(format!("seed {seed}: reparsed program differs\n{text}")),
            Err(e) => rep.failures.push(format!("seed {seed}: {e}\n{text}")),
        }
    }
    rep
}

/// Every refinement rewrite enumerated on a random program, and along a
/// random refinement walk from the initial program of its traces, must
/// still replay every trace.
pub fn refinement_replay_suite(n: u64) -> SuiteReport {
    use scriptsynth::eval::check_psi;
    use scriptsynth::rewrite::{apply, build_initial, enumerate_rewrites, RewriteCtx, RuleKind, State};
    use std::collections::BTreeSet;

    let mut rep = SuiteReport::default();
    let unsat = BTreeSet::new();
    for seed in 0..n {
        let mut r = rng(seed);
        let p = random_program(&mut r);
        let n_traces = r.gen_range(2..=3);
        let Some((traces, sigma)) = self_replay(&p, n_traces, &mut r) else {
            rep.failures.push(format!("seed {seed}: generated program does not run"));
            continue;
        };
        rep.cases += 1;
        let ctx = RewriteCtx { traces: &traces, k_bound: K, unsat_args: &unsat };
        let mut starts = Vec::new();
        match State::new(p.clone(), &sigma, &traces, K) {
            Ok(st) => starts.push((st, 0)),
            Err(e) => rep.failures.push(format!("seed {seed}: self replay rejected: {e}")),
        }
        match build_initial(&traces, K) {
            Ok(st) => starts.push((st, 4)),
            Err(e) => rep.failures.push(format!("seed {seed}: initial program: {e}")),
        }
        for (mut st, walk) in starts {
            for step in 0..=walk {
                let rws = enumerate_rewrites(&st, &ctx, RuleKind::Refinement);
                let mut ok_next = Vec::new();
                for rw in rws {
                    rep.checks += 1;
                    match apply(&st, &rw, &ctx) {
                        Ok(next) => match check_psi(&next.program, &next.sigma, &traces, K) {
                            Ok(()) => ok_next.push(next),
                            Err(e) => rep.failures.push(format!("seed {seed} step {step} {}: {e}", rw.rule.name())),
                        },
                        Err(e) => rep.failures.push(format!("seed {seed} step {step} {} at {}: {e}", rw.rule.name(), rw.site)),
                    }
                }
                if ok_next.is_empty() || step == walk {
                    break;
                }
                st = ok_next.swap_remove(r.gen_range(0..ok_next.len()));
            }
        }
    }
    rep
}

/// Compares the enumerative synthesizer with the brute-force oracle on
/// `n` random problems at size bound `max_size`.
pub fn pbe_oracle_suite(n: u64, max_size: usize) -> (SuiteReport, std::time::Duration) {
    use scriptsynth::pbe::{mine_constants, synthesize, PbeOptions, SynthesisResult};
    use std::time::{Duration, Instant};

    let mut rep = SuiteReport::default();
    let mut slowest = Duration::ZERO;
    for seed in 0..n {
        let ex = random_examples(&mut rng(1_000_000 + seed));
        let cfg = mine_constants(&ex, max_size);
        let start = Instant::now();
        let got = synthesize(&ex, &PbeOptions { max_size, timeout: Duration::from_secs(5) });
        slowest = slowest.max(start.elapsed());
        let want = brute_force(&ex, &cfg);
        rep.cases += 1;
        rep.checks += 1;
        match (&got, &want) {
            (SynthesisResult::Sat(f), Some(_)) => {
                if let Some(bad) = ex.iter().find(|x| f.eval(&x.args) != x.out) {
                    rep.failures.push(format!("seed {seed}: {f} fails on trace {}", bad.trace));
                }
            }
            (SynthesisResult::Unsat { timed_out: false }, None) => {}
            (SynthesisResult::Unsat { timed_out: true }, _) => rep.failures.push(format!("seed {seed}: timed out")),
            (SynthesisResult::Sat(f), None) => rep.failures.push(format!("seed {seed}: sat {f} but oracle says unsat")),
            (SynthesisResult::Unsat { .. }, Some(e)) => {
                rep.failures.push(format!("seed {seed}: unsat but oracle found {e:?}"))
            }
        }
    }
    (rep, slowest)
}

/// Oracle that answers every call with the same response.
pub struct FixedOracle(pub JsonValue);

impl Oracle for FixedOracle {
    fn call(&mut self, _api: &str, _request: &JsonObject) -> Result<JsonValue, EvalError> {
        Ok(self.0.clone())
    }
}

/// Records the loop counters seen before every statement.
#[derive(Default)]
pub struct CounterSpy {
    pub seen: Vec<(scriptsynth::dsl::SitePath, BTreeMap<LoopId, usize>)>,
}

impl scriptsynth::eval::Hooks for CounterSpy {
    fn before(&mut self, site: &scriptsynth::dsl::SitePath, st: &scriptsynth::eval::LocalState, _records: usize) {
        self.seen.push((site.clone(), st.loop_counters.clone()));
    }
}

/// Targeted fixtures for loop bounds, counters and early return, each as
/// (name, passed, detail).
pub fn semantics_checks() -> Vec<(&'static str, bool, String)> {
    use scriptsynth::dsl::parse_program;
    use scriptsynth::eval::Token;

    let mut out = Vec::new();
    let pending = JsonValue::parse(r#"{"s":"pending"}"#).unwrap();
    let never = parse_program(
        "lambda .\nretry {\n  let d = s.Poll()\n  let st = f(d)\n} until st == \"done\"\nlet z = s.After()\nwhere\nf := ($0) -> $0.s\n",
    )
    .unwrap();
    let mut worst = 0;
    let mut ok = true;
    for k in 1..=6 {
        let run = evaluate(&never, &BTreeMap::new(), &mut FixedOracle(pending.clone()), &mut NoHooks, k).unwrap();
        let polls = run.trace.iter().filter(|r| r.api == "s.Poll").count();
        worst = worst.max(polls);
        ok &= polls == k && run.trace.last().map(|r| r.api.as_str()) == Some("s.After");
    }
    out.push(("retry stops at K", ok, format!("most polls {worst} with K up to 6")));

    let foreach = parse_program("lambda l.\nfor (x) in l {\n  let y = s.A(v=x)\n}\nlet z = s.B()\n").unwrap();
    let mut inputs = BTreeMap::new();
    inputs.insert("l".to_string(), JsonValue::parse("[1,2,3]").unwrap());
    let mut spy = CounterSpy::default();
    let f_run = evaluate(&foreach, &inputs, &mut FixedOracle(JsonValue::Null), &mut spy, 3).unwrap();
    let after_loop = spy.seen.iter().find(|(s, _)| s.0 == vec![1]).map(|(_, c)| c.values().all(|&n| n == 0));
    let inside: Vec<usize> = spy.seen.iter().filter(|(s, _)| s.0 == vec![0, 0, 0]).map(|(_, c)| c[&LoopId(0)]).collect();
    let mut spy2 = CounterSpy::default();
    let r_run = evaluate(&never, &BTreeMap::new(), &mut FixedOracle(pending.clone()), &mut spy2, 3).unwrap();
    let after_retry = spy2.seen.iter().find(|(s, _)| s.0 == vec![1]).map(|(_, c)| c.values().all(|&n| n == 0));
    let ok = after_loop == Some(true)
        && after_retry == Some(true)
        && inside == vec![0, 1, 2]
        && f_run.state.loop_counters.values().all(|&n| n == 0)
        && r_run.state.loop_counters.values().all(|&n| n == 0);
    out.push(("loop counters are 0 after exit", ok, format!("foreach iterations saw {inside:?}")));

    let ret_retry =
        parse_program("lambda .\nretry {\n  let d = s.Poll()\n  return\n} until true\nlet z = s.After()\n").unwrap();
    let ret_for = parse_program("lambda l.\nfor (x) in l {\n  let y = s.A(v=x)\n  return\n}\nlet z = s.B()\n").unwrap();
    let a = evaluate(&ret_retry, &BTreeMap::new(), &mut FixedOracle(JsonValue::Null), &mut NoHooks, 5).unwrap();
    let b = evaluate(&ret_for, &inputs, &mut FixedOracle(JsonValue::Null), &mut NoHooks, 5).unwrap();
    let apis = |t: &Trace| t.iter().map(|r| r.api.clone()).collect::<Vec<_>>();
    let ok = a.token == Token::Stop
        && apis(&a.trace) == vec!["s.Poll"]
        && b.token == Token::Stop
        && apis(&b.trace) == vec!["s.A"]
        && a.state.loop_counters.is_empty()
        && b.state.loop_counters.is_empty();
    out.push(("return inside a loop ends the program", ok, format!("traces {:?} and {:?}", apis(&a.trace), apis(&b.trace))));
    out
}
