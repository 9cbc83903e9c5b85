//! Program rewrites. Refinements restructure a program without changing
//! what it does on the traces; synthesis rules replace a trace-specific
//! piece with a call to an open hidden function.

mod normalize;
mod refine;
mod synth;

pub use normalize::{instantiate, lower_hidden, scalarize_params};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::dsl::{print_program, Expr, Instruction, InstructionSeq, Predicate, Program, SitePath, BRANCH_PARAM};
use crate::eval::{eval_expr, eval_pred, refresh_valuation, ExecLog, PsiViolation, Visit};
use crate::json::JsonValue;
use crate::pbe::IOExample;
use crate::trace::{initial_valuation, Cell, TraceSet, TraceValuation};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RuleKind {
    Refinement,
    Synthesis,
}

/// Rules in tie-breaking order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RuleId {
    PullCallOut,
    PushCallOut,
    EliminateEmptyIf,
    InvertEmptyThen,
    MergeNested,
    SequenceNested,
    FlattenNested,
    EliminateUnusedParam,
    InlineTrivialHidden,
    IntroduceParameter,
    EliminateBranch,
    EliminateArgument,
    IntroduceRetry,
    IntroduceForeach,
}

impl RuleId {
    pub fn kind(self) -> RuleKind {
        match self {
            RuleId::EliminateBranch | RuleId::EliminateArgument | RuleId::IntroduceRetry | RuleId::IntroduceForeach => {
                RuleKind::Synthesis
            }
            _ => RuleKind::Refinement,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RuleId::PullCallOut => "pull_call_out",
            RuleId::PushCallOut => "push_call_out",
            RuleId::EliminateEmptyIf => "eliminate_empty_if",
            RuleId::InvertEmptyThen => "invert_empty_then",
            RuleId::MergeNested => "merge_nested_conditionals",
            RuleId::SequenceNested => "sequence_nested_conditionals",
            RuleId::FlattenNested => "flatten_nested_conditionals",
            RuleId::EliminateUnusedParam => "eliminate_unused_parameter",
            RuleId::InlineTrivialHidden => "inline_trivial_hidden",
            RuleId::IntroduceParameter => "introduce_parameter",
            RuleId::EliminateBranch => "eliminate_branch_condition",
            RuleId::EliminateArgument => "eliminate_argument",
            RuleId::IntroduceRetry => "introduce_retry",
            RuleId::IntroduceForeach => "introduce_foreach",
        }
    }
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How the valuation changes along with the program. Let-bound cells are
/// always rebuilt by replay afterwards.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ValuationTransform {
    Identity,
    BindParam { name: String, values: BTreeMap<usize, JsonValue> },
    BindHole { var: String, cells: BTreeMap<usize, Cell> },
}

#[derive(Clone, Debug)]
pub struct Rewrite {
    pub rule: RuleId,
    pub site: String,
    pub program: Program,
    pub transform: ValuationTransform,
    /// The hole opened by a synthesis rule.
    pub hole: Option<String>,
    /// Key under which an unsatisfiable argument elimination is remembered.
    pub unsat_key: Option<String>,
}

/// A program together with its valuation and replay logs.
#[derive(Clone, Debug)]
pub struct State {
    pub program: Program,
    pub sigma: TraceValuation,
    pub logs: Vec<ExecLog>,
}

pub struct RewriteCtx<'a> {
    pub traces: &'a TraceSet,
    pub k_bound: usize,
    /// Argument sites whose elimination is known to be unsatisfiable.
    pub unsat_args: &'a BTreeSet<String>,
}

impl State {
    pub fn new(program: Program, sigma: &TraceValuation, traces: &TraceSet, k_bound: usize) -> Result<State, PsiViolation> {
        let (sigma, logs) = refresh_valuation(&program, sigma, traces, k_bound)?;
        Ok(State { program, sigma, logs })
    }

    pub fn text(&self) -> String {
        print_program(&self.program)
    }

    /// Visits of `site`, paired with their 1-based trace index.
    pub fn visits<'a>(&'a self, site: &'a SitePath) -> impl Iterator<Item = (usize, &'a Visit)> + 'a {
        self.logs.iter().enumerate().flat_map(move |(i, log)| log.visits_of(site).map(move |v| (i + 1, v)))
    }

    /// Examples for every open hole, gathered by replay.
    pub fn hole_examples(&self) -> BTreeMap<String, Vec<IOExample>> {
        let mut out: BTreeMap<String, Vec<IOExample>> = BTreeMap::new();
        for h in &self.program.holes {
            out.insert(h.clone(), Vec::new());
        }
        for (i, log) in self.logs.iter().enumerate() {
            for call in &log.holes {
                out.entry(call.func.clone()).or_default().push(IOExample {
                    trace: i + 1,
                    args: call.args.clone(),
                    out: call.out.clone(),
                });
            }
        }
        out
    }
}

pub fn apply_valuation_transform(sigma: &TraceValuation, t: &ValuationTransform) -> TraceValuation {
    let mut out = sigma.clone();
    match t {
        ValuationTransform::Identity => {}
        ValuationTransform::BindParam { name, values } => {
            if !out.params.contains(name) {
                out.params.push(name.clone());
            }
            for (tr, v) in values {
                out.set(name, *tr, Cell::Scalar(v.clone()));
            }
        }
        ValuationTransform::BindHole { var, cells } => {
            for (tr, c) in cells {
                out.set(var, *tr, c.clone());
            }
        }
    }
    out
}

/// Applies a rewrite and replays the result.
pub fn apply(state: &State, rw: &Rewrite, ctx: &RewriteCtx<'_>) -> Result<State, PsiViolation> {
    let sigma = apply_valuation_transform(&state.sigma, &rw.transform);
    State::new(rw.program.clone(), &sigma, ctx.traces, ctx.k_bound)
}

/// Every applicable rewrite of the given kind, ordered by rule then site.
pub fn enumerate_rewrites(state: &State, ctx: &RewriteCtx<'_>, kind: RuleKind) -> Vec<Rewrite> {
    let mut out = match kind {
        RuleKind::Refinement => refine::enumerate(state, ctx),
        RuleKind::Synthesis => synth::enumerate(state, ctx),
    };
    for rw in &mut out {
        finish(&mut rw.program);
    }
    let mut seen = BTreeSet::new();
    out.retain(|rw| seen.insert((rw.rule, print_program(&rw.program))));
    out.sort_by_key(|rw| rw.rule);
    out
}

/// Drops `br` once nothing reads it and renumbers loops.
fn finish(p: &mut Program) {
    if p.params.iter().any(|x| x == BRANCH_PARAM) && !p.uses(BRANCH_PARAM) {
        p.params.retain(|x| x != BRANCH_PARAM);
    }
    p.renumber_loops();
}

/// The initial program: one branch per trace, selected by `br`.
pub fn build_initial(traces: &TraceSet, k_bound: usize) -> Result<State, InitError> {
    if traces.len() < 2 {
        return Err(InitError::TooFew(traces.len()));
    }
    let branch = |i: usize| -> InstructionSeq {
        traces
            .get(i)
            .iter()
            .enumerate()
            .map(|(j, r)| Instruction::LetVisible {
                var: format!("x_{i}_{}", j + 1),
                api: r.api.clone(),
                args: r.request.iter().map(|(k, v)| (k.clone(), Expr::Const(v.clone()))).collect(),
            })
            .collect()
    };
    let n = traces.len();
    let mut body = branch(n);
    for i in (1..n).rev() {
        let cond = Predicate::ValueCheck(BRANCH_PARAM.to_string(), JsonValue::Int(i as i64));
        body = vec![Instruction::Ite { cond, then_branch: branch(i), else_branch: body }];
    }
    let program = Program::new(vec![BRANCH_PARAM.to_string()], body);
    Ok(State::new(program, &initial_valuation(traces), traces, k_bound)?)
}

#[derive(Debug, thiserror::Error)]
pub enum InitError {
    #[error("at least two traces are required, found {0}")]
    TooFew(usize),
    #[error("initial program does not replay: {0}")]
    Replay(#[from] PsiViolation),
}

fn eval_at(p: &Program, e: &Expr, v: &Visit) -> Option<JsonValue> {
    eval_expr(p, e, &v.env).ok()
}

fn pred_at(p: &Predicate, v: &Visit) -> Option<bool> {
    eval_pred(p, &v.env).ok()
}

/// Renames every use of `from` in the program body.
fn rename_everywhere(p: &mut Program, from: &str, to: &str) {
    crate::dsl::rename_uses_in(&mut p.body, from, to);
}

fn bound_count(p: &Program, var: &str) -> usize {
    p.all_bound_vars().iter().filter(|v| *v == var).count()
}

fn site_string(site: &SitePath) -> String {
    site.to_string()
}

fn contains_return(seq: &[Instruction]) -> bool {
    seq.iter().any(|i| matches!(i, Instruction::Return) || i.blocks().iter().any(|b| contains_return(b)))
}

#[cfg(test)]
mod tests;
