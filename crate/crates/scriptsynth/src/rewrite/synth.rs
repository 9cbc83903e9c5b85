use super::refine::arg_key;
use super::*;
use crate::dsl::{seq_bound_vars, NamedArgs};
use crate::trace::TraceRecord;

pub(super) fn enumerate(state: &State, ctx: &RewriteCtx<'_>) -> Vec<Rewrite> {
    let mut out = Vec::new();
    for site in state.program.sites() {
        match state.program.stmt(&site) {
            Some(Instruction::Ite { cond, .. }) if cond.vars().iter().any(|v| v == BRANCH_PARAM) => {
                eliminate_branch(state, &site, &mut out)
            }
            Some(Instruction::LetVisible { .. }) => eliminate_argument(state, &site, &mut out),
            _ => {}
        }
    }
    for prefix in loop_free_seqs(&state.program) {
        spans(state, ctx, &prefix, &mut out);
    }
    out
}

fn non_br_params(p: &Program) -> Vec<String> {
    p.params.iter().filter(|x| *x != BRANCH_PARAM).cloned().collect()
}

fn dedup(v: Vec<String>) -> Vec<String> {
    let mut seen = BTreeSet::new();
    v.into_iter().filter(|x| seen.insert(x.clone())).collect()
}

struct Opened {
    program: Program,
    hole: String,
    var: String,
}

fn open(p: &Program, var_stem: &str) -> Opened {
    let mut program = p.clone();
    let hole = p.fresh_name("f");
    program.holes.push(hole.clone());
    let taken = {
        let mut t = program.taken_names();
        t.insert(hole.clone());
        t
    };
    let var = crate::dsl::fresh_from(&taken, var_stem);
    Opened { program, hole, var }
}

fn insert_at(p: &mut Program, site: &SitePath, ins: Vec<Instruction>) {
    let idx = site.index();
    p.seq_mut(site.parent_seq()).expect("site exists").splice(idx..idx, ins);
}

fn cells_from(p: &Program, site: &SitePath, per_trace: BTreeMap<usize, Vec<JsonValue>>) -> BTreeMap<usize, Cell> {
    let looped = p.in_loop(site);
    per_trace
        .into_iter()
        .map(|(t, mut vals)| {
            let c = if looped || vals.len() != 1 { Cell::PerIteration(vals) } else { Cell::Scalar(vals.remove(0)) };
            (t, c)
        })
        .collect()
}

fn eliminate_branch(state: &State, site: &SitePath, out: &mut Vec<Rewrite>) {
    let p = &state.program;
    let Some(Instruction::Ite { cond, .. }) = p.stmt(site) else { return };
    let mut per_trace: BTreeMap<usize, Vec<JsonValue>> = BTreeMap::new();
    for (t, v) in state.visits(site) {
        let Some(b) = pred_at(cond, v) else { return };
        per_trace.entry(t).or_default().push(JsonValue::Bool(b));
    }
    let cells = cells_from(p, site, per_trace);
    let o = open(p, "c");
    let mut q = o.program;
    let args = dedup([non_br_params(p), p.bound_before(site)].concat());
    if let Some(Instruction::Ite { cond, .. }) = q.stmt_mut(site) {
        *cond = Predicate::truthy(&o.var);
    }
    insert_at(&mut q, site, vec![Instruction::LetHidden { var: o.var.clone(), func: o.hole.clone(), args }]);
    out.push(Rewrite {
        rule: RuleId::EliminateBranch,
        site: site_string(site),
        program: q,
        transform: ValuationTransform::BindHole { var: o.var, cells },
        hole: Some(o.hole),
        unsat_key: None,
    });
}

fn eliminate_argument(state: &State, site: &SitePath, out: &mut Vec<Rewrite>) {
    let p = &state.program;
    let Some(Instruction::LetVisible { api, args, .. }) = p.stmt(site) else { return };
    let in_scope: Vec<String> = p.bound_before(site).into_iter().filter(|v| !p.params.contains(v)).collect();
    if in_scope.is_empty() {
        return;
    }
    for (key, e) in args {
        if !e.mentions(BRANCH_PARAM) {
            continue;
        }
        let mut per_trace: BTreeMap<usize, Vec<JsonValue>> = BTreeMap::new();
        let mut ok = true;
        for (t, v) in state.visits(site) {
            match eval_at(p, e, v) {
                Some(x) => per_trace.entry(t).or_default().push(x),
                None => ok = false,
            }
        }
        if !ok {
            continue;
        }
        // hoist in front of the outermost loop when the value cannot change inside it
        let hoist = p.enclosing_loop(site).filter(|l| {
            let invariant = per_trace.values().all(|vs| vs.windows(2).all(|w| w[0] == w[1]));
            let params_only = e.vars().iter().all(|v| p.params.contains(v));
            let always = state.visits(l).all(|(t, _)| per_trace.contains_key(&t));
            invariant && params_only && always
        });
        let (at, cells) = match &hoist {
            Some(l) => {
                let cells = per_trace.iter().map(|(t, vs)| (*t, Cell::Scalar(vs[0].clone()))).collect();
                (l.clone(), cells)
            }
            None => (site.clone(), cells_from(p, site, per_trace)),
        };
        let o = open(p, "v");
        let mut q = o.program;
        if let Some(Instruction::LetVisible { args, .. }) = q.stmt_mut(site) {
            args.insert(key.clone(), Expr::Var(o.var.clone()));
        }
        let fargs = dedup([non_br_params(p), p.bound_before(&at)].concat());
        insert_at(&mut q, &at, vec![Instruction::LetHidden { var: o.var.clone(), func: o.hole.clone(), args: fargs }]);
        out.push(Rewrite {
            rule: RuleId::EliminateArgument,
            site: format!("{site}:{key}"),
            program: q,
            transform: ValuationTransform::BindHole { var: o.var, cells },
            hole: Some(o.hole),
            unsat_key: Some(arg_key(api, key, e)),
        });
    }
}

/// Prefixes of every statement sequence that is not inside a loop.
fn loop_free_seqs(p: &Program) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for site in p.sites() {
        match p.stmt(&site) {
            Some(Instruction::Ite { .. }) if !p.in_loop(&site) => {
                for b in 0..2 {
                    let mut v = site.0.clone();
                    v.push(b);
                    out.push(v);
                }
            }
            _ => {}
        }
    }
    out
}

/// Records covered by `seq[i..j]` on each trace that reaches it.
fn span_records<'t, 's>(
    state: &'s State,
    traces: &'t TraceSet,
    prefix: &[usize],
    i: usize,
    j: usize,
) -> BTreeMap<usize, (&'t [TraceRecord], &'s Visit)> {
    let mut out = BTreeMap::new();
    let site = |k: usize| {
        let mut v = prefix.to_vec();
        v.push(k);
        SitePath(v)
    };
    let head = site(i);
    for (t, log) in state.logs.iter().enumerate() {
        let Some(first) = log.visits.iter().find(|v| v.site == head) else { continue };
        let mut end = first.rec_end;
        for k in i + 1..j {
            let s = site(k);
            for v in log.visits_of(&s) {
                end = end.max(v.rec_end);
            }
        }
        out.insert(t + 1, (&traces.get(t + 1)[first.rec_start..end], first));
    }
    out
}

fn span_calls(span: &[Instruction]) -> Vec<(&String, &String, &NamedArgs)> {
    fn walk<'a>(seq: &'a [Instruction], out: &mut Vec<(&'a String, &'a String, &'a NamedArgs)>) {
        for ins in seq {
            if let Instruction::LetVisible { var, api, args } = ins {
                out.push((var, api, args));
            }
            for b in ins.blocks() {
                walk(b, out);
            }
        }
    }
    let mut out = Vec::new();
    walk(span, &mut out);
    out
}

fn same_keys(rec: &TraceRecord, args: &NamedArgs) -> bool {
    rec.request.len() == args.len() && args.keys().all(|k| rec.request.contains_key(k))
}

/// Whether anything bound in `seq[i..j]` is read outside of it.
fn escapes(p: &Program, prefix: &[usize], i: usize, j: usize) -> bool {
    let seq = p.seq(prefix).expect("prefix exists");
    let mut bound = Vec::new();
    seq_bound_vars(&seq[i..j], &mut bound);
    let mut q = p.clone();
    q.seq_mut(prefix).unwrap().drain(i..j);
    bound.iter().any(|v| q.uses(v))
}

fn spans(state: &State, ctx: &RewriteCtx<'_>, prefix: &[usize], out: &mut Vec<Rewrite>) {
    let p = &state.program;
    let seq = p.seq(prefix).expect("prefix exists");
    for i in 0..seq.len() {
        for j in i + 1..=seq.len() {
            let span = &seq[i..j];
            if contains_return(span) {
                break;
            }
            let calls = span_calls(span);
            if calls.is_empty() {
                continue;
            }
            let recs = span_records(state, ctx.traces, prefix, i, j);
            let mut head = prefix.to_vec();
            head.push(i);
            let head = SitePath(head);
            if let Some(r) = retry(state, ctx, &head, span, &recs) {
                if !escapes(p, prefix, i, j) {
                    out.push(splice_span(p, prefix, i, j, r));
                }
            }
            if calls.len() >= 2 {
                if let Some(r) = foreach(state, &head, &calls, &recs) {
                    if !escapes(p, prefix, i, j) {
                        out.push(splice_span(p, prefix, i, j, r));
                    }
                }
            }
        }
    }
}

struct SpanRewrite {
    rule: RuleId,
    with: Vec<Instruction>,
    program: Program,
    hole: String,
    var: String,
    cells: BTreeMap<usize, Cell>,
}

fn splice_span(p: &Program, prefix: &[usize], i: usize, j: usize, r: SpanRewrite) -> Rewrite {
    let mut q = r.program;
    q.seq_mut(prefix).unwrap().splice(i..j, r.with);
    let mut start = prefix.to_vec();
    start.push(i);
    let _ = p;
    Rewrite {
        rule: r.rule,
        site: format!("{}..{}", SitePath(start), j),
        program: q,
        transform: ValuationTransform::BindHole { var: r.var, cells: r.cells },
        hole: Some(r.hole),
        unsat_key: None,
    }
}

fn retry(
    state: &State,
    ctx: &RewriteCtx<'_>,
    head: &SitePath,
    span: &[Instruction],
    recs: &BTreeMap<usize, (&[TraceRecord], &Visit)>,
) -> Option<SpanRewrite> {
    (0..span.len()).find_map(|at| retry_with(state, ctx, head, span, recs, at))
}

/// Retry over the span with `span[at]` as the repeated call. Hidden lets
/// ahead of it that feed its arguments move in front of the loop.
fn retry_with(
    state: &State,
    ctx: &RewriteCtx<'_>,
    head: &SitePath,
    span: &[Instruction],
    recs: &BTreeMap<usize, (&[TraceRecord], &Visit)>,
    at: usize,
) -> Option<SpanRewrite> {
    let p = &state.program;
    let Instruction::LetVisible { var: x, api, args } = &span[at] else { return None };
    if recs.is_empty() {
        return None;
    }
    let mut scope: BTreeSet<String> = p.bound_before(head).into_iter().chain(p.params.iter().cloned()).collect();
    let needed: BTreeSet<String> = args.values().flat_map(|e| e.vars()).collect();
    let mut prelude = Vec::new();
    for ins in &span[..at] {
        if let Instruction::LetHidden { var, args: hargs, .. } = ins {
            if needed.contains(var) && hargs.iter().all(|a| scope.contains(a)) {
                prelude.push(ins.clone());
            }
        }
    }
    scope.extend(prelude.iter().filter_map(|ins| ins.bound_var().map(str::to_string)));
    if !needed.iter().all(|v| scope.contains(v)) {
        return None;
    }
    let mut tsite = head.0.clone();
    *tsite.last_mut().expect("head is a statement") += at;
    let tsite = SitePath(tsite);
    let mut cells = BTreeMap::new();
    let mut longest = 0;
    for (t, (rs, _)) in recs {
        let v = state.logs[t - 1].visits.iter().find(|v| v.site == tsite)?;
        let template: Vec<(&String, JsonValue)> =
            args.iter().map(|(k, e)| eval_at(p, e, v).map(|x| (k, x))).collect::<Option<_>>()?;
        for r in rs.iter() {
            if &r.api != api || !same_keys(r, args) || template.iter().any(|(k, x)| r.request.get(*k) != Some(x)) {
                return None;
            }
        }
        let n = rs.len();
        if n == 0 || n > ctx.k_bound {
            return None;
        }
        longest = longest.max(n);
        let mut vals = vec![JsonValue::Bool(false); n - 1];
        vals.push(JsonValue::Bool(true));
        cells.insert(*t, Cell::PerIteration(vals));
    }
    if longest < 2 {
        return None;
    }
    let o = open(p, "s");
    let hoisted: Vec<String> = prelude.iter().filter_map(|ins| ins.bound_var().map(str::to_string)).collect();
    let fargs = dedup([vec![x.clone()], p.bound_before(head), hoisted, non_br_params(p)].concat());
    let body = vec![
        Instruction::LetVisible { var: x.clone(), api: api.clone(), args: args.clone() },
        Instruction::LetHidden { var: o.var.clone(), func: o.hole.clone(), args: fargs },
    ];
    let mut with = prelude;
    with.push(Instruction::Retry { id: crate::dsl::LoopId(0), body, until: Predicate::truthy(&o.var) });
    Some(SpanRewrite { rule: RuleId::IntroduceRetry, with, program: o.program, hole: o.hole, var: o.var, cells })
}

fn foreach(
    state: &State,
    head: &SitePath,
    calls: &[(&String, &String, &NamedArgs)],
    recs: &BTreeMap<usize, (&[TraceRecord], &Visit)>,
) -> Option<SpanRewrite> {
    let p = &state.program;
    let (x, api, targs) = calls[0];
    if recs.is_empty() {
        return None;
    }
    for (rs, _) in recs.values() {
        if rs.iter().any(|r| &r.api != api || !same_keys(r, targs)) {
            return None;
        }
    }
    let scope: BTreeSet<String> = p.bound_before(head).into_iter().chain(p.params.iter().cloned()).collect();
    let mut varying = None;
    let mut new_args = NamedArgs::new();
    for key in targs.keys() {
        let per: Vec<(usize, Vec<&JsonValue>)> =
            recs.iter().map(|(t, (rs, _))| (*t, rs.iter().map(|r| &r.request[key]).collect())).collect();
        let varies = per.iter().any(|(_, vs)| vs.windows(2).any(|w| w[0] != w[1]));
        if varies {
            if varying.is_some() {
                return None;
            }
            varying = Some((key.clone(), per));
            continue;
        }
        let all: BTreeSet<String> = per.iter().flat_map(|(_, vs)| vs.iter().map(|v| v.canonical())).collect();
        if all.len() <= 1 {
            let v = per.iter().find_map(|(_, vs)| vs.first().cloned().cloned()).unwrap_or(JsonValue::Null);
            new_args.insert(key.clone(), Expr::Const(v));
            continue;
        }
        // per-trace invariant: reuse an argument expression that already computes it
        let found = calls.iter().map(|(_, _, a)| &a[key]).find(|e| {
            e.vars().iter().all(|v| scope.contains(v))
                && per.iter().all(|(t, vs)| vs.is_empty() || eval_at(p, e, recs[t].1).as_ref() == Some(vs[0]))
        })?;
        new_args.insert(key.clone(), found.clone());
    }
    let (vkey, per) = varying?;
    let o = open(p, "l");
    let mut taken = o.program.taken_names();
    taken.insert(o.var.clone());
    let item = crate::dsl::fresh_from(&taken, "u");
    new_args.insert(vkey.clone(), Expr::Var(item.clone()));
    let ordered: NamedArgs = targs.keys().map(|k| (k.clone(), new_args[k].clone())).collect();
    let cells = per
        .into_iter()
        .map(|(t, vs)| (t, Cell::Scalar(JsonValue::Array(vs.into_iter().cloned().collect()))))
        .collect();
    let fargs = dedup([non_br_params(p), p.bound_before(head)].concat());
    let with = vec![
        Instruction::LetHidden { var: o.var.clone(), func: o.hole.clone(), args: fargs },
        Instruction::Foreach {
            id: crate::dsl::LoopId(0),
            var: item,
            list: Expr::Var(o.var.clone()),
            body: vec![Instruction::LetVisible { var: x.clone(), api: api.clone(), args: ordered }],
        },
    ];
    Some(SpanRewrite { rule: RuleId::IntroduceForeach, with, program: o.program, hole: o.hole, var: o.var, cells })
}
