use std::collections::BTreeMap;

use super::*;
use crate::dsl::NamedArgs;
use crate::hidden::{HiddenExpr, PathExpr};

pub(super) fn enumerate(state: &State, ctx: &RewriteCtx<'_>) -> Vec<Rewrite> {
    let p = &state.program;
    let mut out = Vec::new();
    for site in p.sites() {
        match p.stmt(&site) {
            Some(Instruction::Ite { cond, then_branch, else_branch }) => {
                let ite = Ite { p, site: &site, cond, then_b: then_branch, else_b: else_branch };
                ite.pull(&mut out);
                ite.push(&mut out);
                ite.empty(&mut out);
                ite.merge(&mut out);
                ite.sequence(&mut out);
                ite.flatten(&mut out);
            }
            Some(Instruction::LetHidden { .. }) => inline_trivial(state, &site, &mut out),
            _ => {}
        }
    }
    for param in &p.params {
        if !p.uses(param) {
            let mut q = p.clone();
            q.params.retain(|x| x != param);
            out.push(refinement(RuleId::EliminateUnusedParam, format!("param:{param}"), q));
        }
    }
    introduce_parameter(state, ctx, &mut out);
    out
}

fn refinement(rule: RuleId, site: String, program: Program) -> Rewrite {
    Rewrite { rule, site, program, transform: ValuationTransform::Identity, hole: None, unsat_key: None }
}

/// Merges argument maps with identical keys, guarding differing values by `c`.
fn merge_args(c: &Predicate, a: &NamedArgs, b: &NamedArgs) -> Option<NamedArgs> {
    if a.len() != b.len() || a.keys().any(|k| !b.contains_key(k)) {
        return None;
    }
    Some(
        a.iter()
            .map(|(k, ea)| {
                let eb = &b[k];
                let e = if ea == eb {
                    ea.clone()
                } else {
                    Expr::Ternary(Box::new(c.clone()), Box::new(ea.clone()), Box::new(eb.clone()))
                };
                (k.clone(), e)
            })
            .collect(),
    )
}

fn splice(p: &Program, site: &SitePath, with: Vec<Instruction>) -> Program {
    let mut q = p.clone();
    let idx = site.index();
    q.seq_mut(site.parent_seq()).expect("site exists").splice(idx..idx + 1, with);
    q
}

fn as_call(ins: Option<&Instruction>) -> Option<(&String, &String, &NamedArgs)> {
    match ins {
        Some(Instruction::LetVisible { var, api, args }) => Some((var, api, args)),
        _ => None,
    }
}

struct Ite<'a> {
    p: &'a Program,
    site: &'a SitePath,
    cond: &'a Predicate,
    then_b: &'a InstructionSeq,
    else_b: &'a InstructionSeq,
}

impl Ite<'_> {
    fn ite(&self, cond: Predicate, then_branch: InstructionSeq, else_branch: InstructionSeq) -> Instruction {
        Instruction::Ite { cond, then_branch, else_branch }
    }

    /// Rewrites `with` in place of this conditional and renames `from` to `to`.
    fn emit(&self, rule: RuleId, with: Vec<Instruction>, rename: Option<(&str, &str)>, out: &mut Vec<Rewrite>) {
        let mut q = splice(self.p, self.site, with);
        if let Some((from, to)) = rename {
            if from != to {
                if bound_count(self.p, from) != 1 || bound_count(self.p, to) != 1 {
                    return;
                }
                rename_everywhere(&mut q, from, to);
            }
        }
        out.push(refinement(rule, site_string(self.site), q));
    }

    fn cond_stable(&self) -> bool {
        let mut bound = Vec::new();
        crate::dsl::seq_bound_vars(self.then_b, &mut bound);
        crate::dsl::seq_bound_vars(self.else_b, &mut bound);
        self.cond.vars().iter().all(|v| !bound.contains(v))
    }

    fn pull(&self, out: &mut Vec<Rewrite>) {
        let (Some((x, api, a)), Some((y, api2, b))) = (as_call(self.then_b.first()), as_call(self.else_b.first()))
        else {
            return;
        };
        if api != api2 {
            return;
        }
        let Some(args) = merge_args(self.cond, a, b) else { return };
        let call = Instruction::LetVisible { var: x.clone(), api: api.clone(), args };
        let rest = self.ite(self.cond.clone(), self.then_b[1..].to_vec(), self.else_b[1..].to_vec());
        self.emit(RuleId::PullCallOut, vec![call, rest], Some((y, x)), out);
    }

    fn push(&self, out: &mut Vec<Rewrite>) {
        let (Some((x, api, a)), Some((y, api2, b))) = (as_call(self.then_b.last()), as_call(self.else_b.last()))
        else {
            return;
        };
        if api != api2 || !self.cond_stable() {
            return;
        }
        let Some(args) = merge_args(self.cond, a, b) else { return };
        let (tn, en) = (self.then_b.len() - 1, self.else_b.len() - 1);
        let head = self.ite(self.cond.clone(), self.then_b[..tn].to_vec(), self.else_b[..en].to_vec());
        let call = Instruction::LetVisible { var: x.clone(), api: api.clone(), args };
        self.emit(RuleId::PushCallOut, vec![head, call], Some((y, x)), out);
    }

    fn empty(&self, out: &mut Vec<Rewrite>) {
        match (self.then_b.is_empty(), self.else_b.is_empty()) {
            (true, true) => self.emit(RuleId::EliminateEmptyIf, Vec::new(), None, out),
            (true, false) => {
                let flipped = self.ite(self.cond.clone().negate(), self.else_b.clone(), Vec::new());
                self.emit(RuleId::InvertEmptyThen, vec![flipped], None, out);
            }
            _ => {}
        }
    }

    fn merge(&self, out: &mut Vec<Rewrite>) {
        let (Some((x, api, a)), [Instruction::Ite { cond: c2, then_branch: t2, else_branch: e2 }]) =
            (as_call(self.then_b.first()), self.else_b.as_slice())
        else {
            return;
        };
        if self.then_b.len() != 1 {
            return;
        }
        let inner = [(t2, e2, c2.clone()), (e2, t2, c2.clone().negate())];
        for (call_side, other, guard) in inner {
            let Some((y, api2, b)) = as_call(call_side.first()) else { continue };
            if call_side.len() != 1 || api != api2 {
                continue;
            }
            let Some(args) = merge_args(self.cond, a, b) else { continue };
            let cond = Predicate::Or(Box::new(self.cond.clone()), Box::new(guard));
            let call = Instruction::LetVisible { var: x.clone(), api: api.clone(), args };
            let merged = self.ite(cond, vec![call], other.clone());
            self.emit(RuleId::MergeNested, vec![merged], Some((y, x)), out);
        }
    }

    fn sequence(&self, out: &mut Vec<Rewrite>) {
        let Some(Instruction::Ite { cond: c2, then_branch: t2, else_branch: e2 }) = self.then_b.last() else { return };
        if !self.else_b.is_empty() || !e2.is_empty() || self.then_b.len() < 2 || !self.cond_stable() {
            return;
        }
        let n = self.then_b.len() - 1;
        let first = self.ite(self.cond.clone(), self.then_b[..n].to_vec(), Vec::new());
        let both = Predicate::And(Box::new(self.cond.clone()), Box::new(c2.clone()));
        let second = self.ite(both, t2.clone(), Vec::new());
        self.emit(RuleId::SequenceNested, vec![first, second], None, out);
    }

    fn flatten(&self, out: &mut Vec<Rewrite>) {
        let [Instruction::Ite { cond: c2, then_branch: t2, else_branch: e2 }] = self.then_b.as_slice() else { return };
        if !self.else_b.is_empty() || !e2.is_empty() {
            return;
        }
        let both = Predicate::And(Box::new(self.cond.clone()), Box::new(c2.clone()));
        self.emit(RuleId::FlattenNested, vec![self.ite(both, t2.clone(), Vec::new())], None, out);
    }
}

pub(super) fn calls_to(seq: &[Instruction], f: &str) -> usize {
    fn in_expr(e: &Expr, f: &str) -> usize {
        match e {
            Expr::HiddenCall(g, _) => (g == f) as usize,
            Expr::Ternary(_, a, b) => in_expr(a, f) + in_expr(b, f),
            _ => 0,
        }
    }
    seq.iter()
        .map(|ins| {
            let own = match ins {
                Instruction::LetHidden { func, .. } => (func == f) as usize,
                Instruction::LetVisible { args, .. } => args.values().map(|e| in_expr(e, f)).sum(),
                Instruction::Foreach { list, .. } => in_expr(list, f),
                _ => 0,
            };
            own + ins.blocks().iter().map(|b| calls_to(b, f)).sum::<usize>()
        })
        .sum()
}

fn subst_expr(e: &mut Expr, var: &str, with: &Expr) {
    match e {
        Expr::Var(v) if v == var => *e = with.clone(),
        Expr::Ternary(_, a, b) => {
            subst_expr(a, var, with);
            subst_expr(b, var, with);
        }
        _ => {}
    }
}

/// Replaces `var` by `with` wherever an expression may appear.
fn subst_seq(seq: &mut [Instruction], var: &str, with: &Expr) {
    for ins in seq.iter_mut() {
        match ins {
            Instruction::LetVisible { args, .. } => args.values_mut().for_each(|e| subst_expr(e, var, with)),
            Instruction::Foreach { list, .. } => subst_expr(list, var, with),
            _ => {}
        }
        for b in ins.blocks_mut() {
            subst_seq(b, var, with);
        }
    }
}

fn inline_trivial(state: &State, site: &SitePath, out: &mut Vec<Rewrite>) {
    let p = &state.program;
    let Some(Instruction::LetHidden { var, func, args }) = p.stmt(site) else { return };
    let Some(def) = p.hidden_defs.get(func) else { return };
    let mut q = splice(p, site, Vec::new());
    match &def.body {
        HiddenExpr::Path(PathExpr::Input(k)) => {
            let Some(y) = args.get(*k) else { return };
            let bound_everywhere = state.visits(site).all(|(_, v)| v.env.contains_key(y));
            if p.in_loop(site) || !bound_everywhere || bound_count(p, var) != 1 {
                return;
            }
            rename_everywhere(&mut q, var, y);
        }
        HiddenExpr::Const(v) => {
            subst_seq(&mut q.body, var, &Expr::Const(v.clone()));
            if q.uses(var) {
                return;
            }
        }
        _ => return,
    }
    if calls_to(&q.body, func) == 0 {
        q.hidden_defs.remove(func);
    }
    out.push(refinement(RuleId::InlineTrivialHidden, site_string(site), q));
}

struct Occurrence {
    site: SitePath,
    key: String,
    expr: Expr,
    api: String,
}

fn occurrences(p: &Program) -> Vec<Occurrence> {
    let mut out = Vec::new();
    for site in p.sites() {
        if let Some(Instruction::LetVisible { api, args, .. }) = p.stmt(&site) {
            for (k, e) in args {
                if matches!(e, Expr::Var(_) | Expr::HiddenCall(..)) {
                    continue;
                }
                if e.vars().iter().all(|v| p.params.contains(v)) {
                    out.push(Occurrence { site: site.clone(), key: k.clone(), expr: e.clone(), api: api.clone() });
                }
            }
        }
    }
    out
}

/// Key naming an argument site for the unsatisfiable-elimination memo.
pub(super) fn arg_key(api: &str, key: &str, e: &Expr) -> String {
    format!("{api}.{key}={e}")
}

/// One value per trace that reaches the occurrence, or `None` if it varies
/// within a trace.
fn per_trace_values(state: &State, o: &Occurrence) -> Option<BTreeMap<usize, JsonValue>> {
    let mut vals = BTreeMap::new();
    for (t, v) in state.visits(&o.site) {
        let x = eval_at(&state.program, &o.expr, v)?;
        if let Some(prev) = vals.insert(t, x.clone()) {
            if prev != x {
                return None;
            }
        }
    }
    Some(vals)
}

fn introduce_parameter(state: &State, ctx: &RewriteCtx<'_>, out: &mut Vec<Rewrite>) {
    let p = &state.program;
    let occs = occurrences(p);
    let vals: Vec<Option<BTreeMap<usize, JsonValue>>> = occs.iter().map(|o| per_trace_values(state, o)).collect();
    for (si, seed) in occs.iter().enumerate() {
        if !seed.expr.mentions(BRANCH_PARAM) {
            continue;
        }
        let Some(mut merged) = vals[si].clone() else { continue };
        if merged.is_empty() {
            continue;
        }
        let mut group = vec![si];
        for oi in 0..occs.len() {
            if oi == si {
                continue;
            }
            let Some(v) = &vals[oi] else { continue };
            if v.is_empty() || v.iter().any(|(t, x)| merged.get(t).is_some_and(|y| y != x)) {
                continue;
            }
            merged.extend(v.iter().map(|(t, x)| (*t, x.clone())));
            group.push(oi);
        }
        group.sort();
        let first = &occs[group[0]];
        let guarded = !p.bound_before(&first.site).is_empty() || p.in_loop(&first.site);
        if guarded && !ctx.unsat_args.contains(&arg_key(&first.api, &first.key, &first.expr)) {
            continue;
        }
        let distinct: BTreeSet<String> = merged.values().map(JsonValue::canonical).collect();
        let mut q = p.clone();
        let (replacement, transform) = if distinct.len() == 1 {
            (Expr::Const(merged.values().next().unwrap().clone()), ValuationTransform::Identity)
        } else {
            let name = p.fresh_name("i");
            q.params.push(name.clone());
            let mut values = BTreeMap::new();
            for t in ctx.traces.indices() {
                let v = merged.get(&t).cloned().or_else(|| eval_expr(p, &seed.expr, &state.sigma.inputs_for(t)).ok());
                values.insert(t, v.unwrap_or(JsonValue::Null));
            }
            (Expr::Var(name.clone()), ValuationTransform::BindParam { name, values })
        };
        for &oi in &group {
            let o = &occs[oi];
            if let Some(Instruction::LetVisible { args, .. }) = q.stmt_mut(&o.site) {
                args.insert(o.key.clone(), replacement.clone());
            }
        }
        out.push(Rewrite {
            rule: RuleId::IntroduceParameter,
            site: format!("{}:{}", first.site, first.key),
            program: q,
            transform,
            hole: None,
            unsat_key: None,
        });
    }
}
