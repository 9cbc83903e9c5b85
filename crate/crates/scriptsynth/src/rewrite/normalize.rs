//! Cost-neutral clean-ups applied after a hole is filled.

use super::refine::calls_to;
use super::*;
use crate::hidden::{BoolExpr, HiddenExpr, HiddenFnBody, PathExpr};

/// Turns the hole `hole` into a defined hidden function.
pub fn instantiate(p: &Program, hole: &str, body: HiddenFnBody) -> Program {
    let mut q = p.clone();
    q.holes.retain(|h| h != hole);
    q.hidden_defs.insert(hole.to_string(), body);
    q
}

/// Lowers an equality test in `func` into the condition that reads it and
/// drops argument slots the body never reads.
pub fn lower_hidden(p: &Program, func: &str) -> Program {
    let q = lower_predicate(p, func).unwrap_or_else(|| p.clone());
    drop_unused_slots(&q)
}

fn find_let(seq: &[Instruction], prefix: &[usize], func: &str) -> Option<SitePath> {
    for (i, ins) in seq.iter().enumerate() {
        let mut here = prefix.to_vec();
        here.push(i);
        if let Instruction::LetHidden { func: f, .. } = ins {
            if f == func {
                return Some(SitePath(here));
            }
        }
        for (b, block) in ins.blocks().into_iter().enumerate() {
            let mut q = here.clone();
            q.push(b);
            if let Some(s) = find_let(block, &q, func) {
                return Some(s);
            }
        }
    }
    None
}

/// Counts conditions that are exactly `var`, failing on any other read.
fn truthy_uses(seq: &[Instruction], var: &str) -> Option<usize> {
    let t = Predicate::truthy(var);
    let mut n = 0;
    for ins in seq {
        match ins {
            Instruction::Ite { cond, .. } if *cond == t => n += 1,
            Instruction::Retry { until, .. } if *until == t => n += 1,
            other if other.own_uses().iter().any(|v| v == var) => return None,
            _ => {}
        }
        for b in ins.blocks() {
            n += truthy_uses(b, var)?;
        }
    }
    Some(n)
}

fn replace_truthy(seq: &mut [Instruction], var: &str, with: &Predicate) {
    let t = Predicate::truthy(var);
    for ins in seq.iter_mut() {
        match ins {
            Instruction::Ite { cond, .. } if *cond == t => *cond = with.clone(),
            Instruction::Retry { until, .. } if *until == t => *until = with.clone(),
            _ => {}
        }
        for b in ins.blocks_mut() {
            replace_truthy(b, var, with);
        }
    }
}

fn lower_predicate(p: &Program, func: &str) -> Option<Program> {
    let def = p.hidden_defs.get(func)?;
    let (path, value, negated) = match &def.body {
        HiddenExpr::Bool(BoolExpr::Eq(j, v)) => (j, v, false),
        HiddenExpr::Bool(BoolExpr::Not(inner)) => match &**inner {
            BoolExpr::Eq(j, v) => (j, v, true),
            _ => return None,
        },
        _ => return None,
    };
    if !value.is_scalar() || calls_to(&p.body, func) != 1 {
        return None;
    }
    let site = find_let(&p.body, &[], func)?;
    let Some(Instruction::LetHidden { var, args, .. }) = p.stmt(&site) else { return None };
    if truthy_uses(&p.body, var)? == 0 {
        return None;
    }
    let slot = path.input_slot();
    let arg = args.get(slot)?.clone();
    let var = var.clone();
    let mut q = p.clone();
    let checked = if let PathExpr::Input(_) = path {
        let idx = site.index();
        q.seq_mut(site.parent_seq())?.remove(idx);
        q.hidden_defs.remove(func);
        arg
    } else {
        if let Some(Instruction::LetHidden { args, .. }) = q.stmt_mut(&site) {
            *args = vec![arg];
        }
        let body = HiddenExpr::Path(path.map_slot(&|_| 0));
        q.hidden_defs.insert(func.to_string(), HiddenFnBody { arity: 1, body });
        var.clone()
    };
    let check = Predicate::ValueCheck(checked, value.clone());
    let with = if negated { Predicate::Not(Box::new(check)) } else { check };
    replace_truthy(&mut q.body, &var, &with);
    Some(q)
}

fn retain_slots(seq: &mut [Instruction], func: &str, keep: &[usize]) {
    for ins in seq.iter_mut() {
        if let Instruction::LetHidden { func: f, args, .. } = ins {
            if f == func {
                *args = keep.iter().filter_map(|&i| args.get(i).cloned()).collect();
            }
        }
        for b in ins.blocks_mut() {
            retain_slots(b, func, keep);
        }
    }
}

fn has_expr_call(seq: &[Instruction], func: &str) -> bool {
    fn in_expr(e: &Expr, f: &str) -> bool {
        match e {
            Expr::HiddenCall(g, _) => g == f,
            Expr::Ternary(_, a, b) => in_expr(a, f) || in_expr(b, f),
            _ => false,
        }
    }
    seq.iter().any(|ins| {
        let own = match ins {
            Instruction::LetVisible { args, .. } => args.values().any(|e| in_expr(e, func)),
            Instruction::Foreach { list, .. } => in_expr(list, func),
            _ => false,
        };
        own || ins.blocks().iter().any(|b| has_expr_call(b, func))
    })
}

fn drop_unused_slots(p: &Program) -> Program {
    let mut q = p.clone();
    for (name, def) in &p.hidden_defs {
        let used = def.body.used_slots();
        if used.len() == def.arity || has_expr_call(&p.body, name) {
            continue;
        }
        let body = def.body.map_slot(&|i| used.iter().position(|&u| u == i).expect("slot is used"));
        q.hidden_defs.insert(name.clone(), HiddenFnBody { arity: used.len(), body });
        retain_slots(&mut q.body, name, &used);
    }
    q
}

/// Replaces parameters that hold a one-element list on every trace by a
/// scalar parameter wrapped with `list`.
pub fn scalarize_params(state: &State, traces: &TraceSet, k_bound: usize) -> State {
    let mut cur = state.clone();
    for param in state.program.params.clone() {
        if param == BRANCH_PARAM {
            continue;
        }
        let mut items = BTreeMap::new();
        for t in traces.indices() {
            match cur.sigma.get(&param, t).and_then(Cell::scalar) {
                Some(JsonValue::Array(v)) if v.len() == 1 => {
                    items.insert(t, v[0].clone());
                }
                _ => break,
            }
        }
        if items.len() != traces.len() {
            continue;
        }
        let mut q = cur.program.clone();
        let item = q.fresh_name("item");
        for x in q.params.iter_mut() {
            if *x == param {
                *x = item.clone();
            }
        }
        q.body.insert(0, Instruction::LetHidden { var: param.clone(), func: "list".into(), args: vec![item.clone()] });
        let mut sigma = cur.sigma.clone();
        sigma.remove_var(&param);
        sigma.params = q.params.clone();
        for (t, v) in items {
            sigma.set(&item, t, Cell::Scalar(v));
        }
        if let Ok(next) = State::new(q, &sigma, traces, k_bound) {
            cur = next;
        }
    }
    cur
}
