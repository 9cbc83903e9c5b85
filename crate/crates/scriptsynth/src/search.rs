//! Search strategies over the rewrite space.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::cost::{br_uses, CostFn};
use crate::dsl::{print_program, Program};
use crate::eval::{check_psi, PsiViolation};
use crate::pbe::{ConstraintCache, PbeOptions, SynthesisResult};
use crate::rewrite::{
    apply, build_initial, enumerate_rewrites, instantiate, lower_hidden, scalarize_params, InitError, Rewrite,
    RewriteCtx, RuleId, RuleKind, State,
};
use crate::trace::{TraceSet, TraceValuation};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strategy {
    Alternating,
    Rts,
    KSearch(usize),
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Alternating => "alternating",
            Strategy::Rts => "rts",
            Strategy::KSearch(_) => "ksearch",
        }
    }
}

#[derive(Clone, Debug)]
pub struct SearchConfig {
    pub strategy: Strategy,
    pub cost: CostFn,
    /// Retry bound K; defaults to one more than the longest trace.
    pub retry_bound: Option<usize>,
    pub timeout: Duration,
    pub pbe: PbeOptions,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LogEntry {
    pub rule: RuleId,
    pub site: String,
    pub cost_before: u64,
    pub cost_after: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    /// No rewrite applies any more.
    Converged,
    TimedOut,
}

#[derive(Clone, Debug)]
pub struct SearchResult {
    pub program: Program,
    pub sigma: TraceValuation,
    pub cost: u64,
    pub outcome: Outcome,
    pub log: Vec<LogEntry>,
    pub pbe_calls: usize,
    pub pbe_sat: usize,
}

#[derive(Debug, Error)]
pub enum SearchError {
    #[error(transparent)]
    Init(#[from] InitError),
    #[error("final program fails to replay: {0}")]
    Psi(#[from] PsiViolation),
}

/// A ksearch node: cost, discovery index, state and the path to it.
type Reached = (u64, usize, State, Vec<(Rewrite, u64)>);

struct Searcher<'a> {
    traces: &'a TraceSet,
    cfg: &'a SearchConfig,
    k_bound: usize,
    deadline: Instant,
    cache: ConstraintCache,
    unsat_args: BTreeSet<String>,
    log: Vec<LogEntry>,
    pbe_calls: usize,
    pbe_sat: usize,
}

impl<'a> Searcher<'a> {
    fn new(traces: &'a TraceSet, cfg: &'a SearchConfig) -> Self {
        Searcher {
            traces,
            cfg,
            k_bound: cfg.retry_bound.unwrap_or_else(|| traces.default_retry_bound()),
            deadline: Instant::now() + cfg.timeout,
            cache: ConstraintCache::new(),
            unsat_args: BTreeSet::new(),
            log: Vec::new(),
            pbe_calls: 0,
            pbe_sat: 0,
        }
    }

    fn expired(&self) -> bool {
        Instant::now() >= self.deadline
    }

    fn cost(&self, st: &State) -> u64 {
        self.cfg.cost.eval(&st.program, &st.logs, self.traces.total_records())
    }

    /// Search order: cost first, then `br` uses, so a cost-neutral step
    /// that retires a `br` use still counts as progress.
    fn key(&self, st: &State) -> (u64, u64) {
        (self.cost(st), br_uses(&st.program))
    }

    fn ctx(&self) -> RewriteCtx<'_> {
        RewriteCtx { traces: self.traces, k_bound: self.k_bound, unsat_args: &self.unsat_args }
    }

    /// Successor states of `kind`, cheapest first, restricted to those
    /// cheaper than `below` when given.
    fn candidates(&self, st: &State, kind: RuleKind, below: Option<(u64, u64)>) -> Vec<(u64, Rewrite, State)> {
        let ctx = self.ctx();
        let mut out: Vec<((u64, u64), Rewrite, State)> = enumerate_rewrites(st, &ctx, kind)
            .into_iter()
            .filter_map(|rw| {
                let next = apply(st, &rw, &ctx).ok()?;
                let key = self.key(&next);
                below.is_none_or(|b| key < b).then_some((key, rw, next))
            })
            .collect();
        // stable: equal keys keep the engine's rule-then-site order
        out.sort_by_key(|(k, _, _)| *k);
        out.into_iter().map(|((c, _), rw, next)| (c, rw, next)).collect()
    }

    fn record(&mut self, rw: &Rewrite, before: u64, after: u64) {
        self.log.push(LogEntry { rule: rw.rule, site: rw.site.clone(), cost_before: before, cost_after: after });
    }

    /// Applies improving refinements until none is left.
    fn refine(&mut self, mut st: State) -> (State, bool) {
        loop {
            if self.expired() {
                return (st, true);
            }
            let cur = self.cost(&st);
            let Some((c, rw, next)) = self.candidates(&st, RuleKind::Refinement, Some(self.key(&st))).into_iter().next()
            else {
                return (st, false);
            };
            self.record(&rw, cur, c);
            st = next;
        }
    }

    fn solve(&mut self, st: &State, hole: &str) -> Option<crate::hidden::HiddenFnBody> {
        let examples = st.hole_examples().remove(hole).unwrap_or_default();
        let remaining = self.deadline.saturating_duration_since(Instant::now());
        let opts = PbeOptions { max_size: self.cfg.pbe.max_size, timeout: self.cfg.pbe.timeout.min(remaining) };
        self.pbe_calls += 1;
        match self.cache.solve(&examples, &opts) {
            SynthesisResult::Sat(f) => {
                self.pbe_sat += 1;
                Some(f)
            }
            SynthesisResult::Unsat { .. } => None,
        }
    }

    /// Fills `hole` with `body`, lowering it when the result still replays.
    fn close(&self, st: &State, hole: &str, body: crate::hidden::HiddenFnBody) -> Option<State> {
        let filled = instantiate(&st.program, hole, body);
        let lowered = lower_hidden(&filled, hole);
        State::new(lowered, &st.sigma, self.traces, self.k_bound)
            .or_else(|_| State::new(filled, &st.sigma, self.traces, self.k_bound))
            .ok()
    }

    /// Tries synthesis candidates cheapest first; returns the first that
    /// closes and improves on the current cost.
    fn synthesize(&mut self, st: &State) -> (Option<State>, bool) {
        let cur = self.key(st);
        for (_, rw, open) in self.candidates(st, RuleKind::Synthesis, Some(cur)) {
            if self.expired() {
                return (None, true);
            }
            let hole = rw.hole.clone().expect("synthesis rules open a hole");
            match self.solve(&open, &hole) {
                Some(body) => {
                    let Some(closed) = self.close(&open, &hole, body) else { continue };
                    let c = self.key(&closed);
                    if c < cur {
                        self.record(&rw, cur.0, c.0);
                        return (Some(closed), false);
                    }
                }
                None => {
                    if let Some(k) = &rw.unsat_key {
                        if self.unsat_args.insert(k.clone()) {
                            // a refinement may be unblocked now
                            return (Some(st.clone()), false);
                        }
                    }
                }
            }
        }
        (None, false)
    }

    fn alternating(&mut self, mut st: State) -> (State, Outcome) {
        loop {
            let (refined, timed_out) = self.refine(st);
            st = refined;
            if timed_out {
                return (st, Outcome::TimedOut);
            }
            match self.synthesize(&st) {
                (_, true) => return (st, Outcome::TimedOut),
                (Some(next), _) => st = next,
                (None, _) => return (st, Outcome::Converged),
            }
        }
    }

    fn rts(&mut self, st: State) -> (State, Outcome) {
        let (mut st, timed_out) = self.refine(st);
        if timed_out {
            return (st, Outcome::TimedOut);
        }
        loop {
            match self.synthesize(&st) {
                (_, true) => return (st, Outcome::TimedOut),
                (Some(next), _) => st = next,
                (None, _) => break,
            }
        }
        let (st, timed_out) = self.refine(st);
        (st, if timed_out { Outcome::TimedOut } else { Outcome::Converged })
    }

    fn ksearch(&mut self, init: State, k: usize) -> (State, Outcome) {
        let mut seen: BTreeSet<String> = BTreeSet::new();
        seen.insert(print_program(&init.program));
        let mut reached: Vec<Reached> = vec![(self.cost(&init), 0, init.clone(), Vec::new())];
        let mut queue: VecDeque<(usize, usize)> = VecDeque::from([(0, 0)]);
        let mut timed_out = false;
        while let Some((idx, depth)) = queue.pop_front() {
            if depth >= k {
                continue;
            }
            if self.expired() {
                timed_out = true;
                break;
            }
            let st = reached[idx].2.clone();
            let path = reached[idx].3.clone();
            for kind in [RuleKind::Refinement, RuleKind::Synthesis] {
                for (c, rw, next) in self.candidates(&st, kind, None) {
                    if !seen.insert(print_program(&next.program)) {
                        continue;
                    }
                    let mut p = path.clone();
                    p.push((rw, c));
                    let n = reached.len();
                    reached.push((c, n, next, p));
                    queue.push_back((n, depth + 1));
                }
            }
        }
        reached.sort_by_key(|(c, n, _, _)| (*c, *n));
        let base = self.cost(&init);
        for (_, _, st, path) in reached {
            if self.expired() {
                timed_out = true;
            }
            let Some(closed) = self.close_all(st, timed_out) else { continue };
            let mut before = base;
            for (rw, c) in &path {
                self.record(rw, before, *c);
                before = *c;
            }
            return (closed, if timed_out { Outcome::TimedOut } else { Outcome::Converged });
        }
        (init, Outcome::TimedOut)
    }

    /// Solves every open hole of `st`; without time left only hole-free
    /// states qualify.
    fn close_all(&mut self, mut st: State, no_time: bool) -> Option<State> {
        if no_time && !st.program.holes.is_empty() {
            return None;
        }
        let holes = st.program.holes.clone();
        let mut bodies = BTreeMap::new();
        for h in &holes {
            bodies.insert(h.clone(), self.solve(&st, h)?);
        }
        for (h, body) in bodies {
            st = self.close(&st, &h, body)?;
        }
        Some(st)
    }
}

/// Runs the configured strategy from the initial program and verifies the
/// result against every trace.
pub fn run(traces: &TraceSet, cfg: &SearchConfig) -> Result<SearchResult, SearchError> {
    let mut s = Searcher::new(traces, cfg);
    let init = build_initial(traces, s.k_bound)?;
    let (st, outcome) = match cfg.strategy {
        Strategy::Alternating => s.alternating(init),
        Strategy::Rts => s.rts(init),
        Strategy::KSearch(k) => s.ksearch(init, k),
    };
    let st = if matches!(cfg.strategy, Strategy::KSearch(0)) { st } else { scalarize_params(&st, traces, s.k_bound) };
    verify_final(&st.program, &st.sigma, traces, s.k_bound)?;
    let cost = s.cost(&st);
    Ok(SearchResult {
        program: st.program,
        sigma: st.sigma,
        cost,
        outcome,
        log: s.log,
        pbe_calls: s.pbe_calls,
        pbe_sat: s.pbe_sat,
    })
}

/// The closing correctness check: no holes and every trace replays.
pub fn verify_final(p: &Program, sigma: &TraceValuation, traces: &TraceSet, k_bound: usize) -> Result<(), PsiViolation> {
    if let Some(h) = p.holes.first() {
        return Err(PsiViolation { trace: 0, error: crate::eval::EvalError::UnresolvedHole(h.clone()) });
    }
    check_psi(p, sigma, traces, k_bound)
}
