use std::collections::BTreeMap;

use super::ast::*;
use crate::hidden::is_builtin;

/// The wildcard binder in expected programs.
const WILDCARD: &str = "_";

#[derive(Default)]
struct Bijection {
    fwd: BTreeMap<String, String>,
    back: BTreeMap<String, String>,
}

impl Bijection {
    fn bind(&mut self, a: &str, b: &str) -> bool {
        match (self.fwd.get(a), self.back.get(b)) {
            (None, None) => {
                self.fwd.insert(a.to_string(), b.to_string());
                self.back.insert(b.to_string(), a.to_string());
                true
            }
            (Some(x), Some(y)) => x == b && y == a,
            _ => false,
        }
    }

    fn same(&self, a: &str, b: &str) -> bool {
        match (self.fwd.get(a), self.back.get(b)) {
            (Some(x), Some(_)) => x == b,
            (None, None) => a == b,
            _ => false,
        }
    }
}

struct Ctx<'a> {
    pa: &'a Program,
    pb: &'a Program,
    vars: Bijection,
    funcs: Bijection,
}

impl Ctx<'_> {
    fn binder(&mut self, a: &str, b: &str) -> bool {
        if a == WILDCARD {
            return b == WILDCARD || !self.pb.uses(b);
        }
        if b == WILDCARD {
            return !self.pa.uses(a);
        }
        self.vars.bind(a, b)
    }

    fn func(&mut self, a: &str, b: &str) -> bool {
        if is_builtin(a) || is_builtin(b) {
            return a == b;
        }
        self.funcs.bind(a, b)
    }

    fn expr(&mut self, a: &Expr, b: &Expr) -> bool {
        match (a, b) {
            (Expr::Const(x), Expr::Const(y)) => x == y,
            (Expr::Var(x), Expr::Var(y)) => self.vars.same(x, y),
            (Expr::Ternary(c1, a1, b1), Expr::Ternary(c2, a2, b2)) => {
                self.pred(c1, c2) && self.expr(a1, a2) && self.expr(b1, b2)
            }
            (Expr::HiddenCall(f, xs), Expr::HiddenCall(g, ys)) => self.func(f, g) && self.var_list(xs, ys),
            _ => false,
        }
    }

    fn var_list(&self, xs: &[String], ys: &[String]) -> bool {
        xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| self.vars.same(x, y))
    }

    fn pred(&mut self, a: &Predicate, b: &Predicate) -> bool {
        match (a, b) {
            (Predicate::True, Predicate::True) | (Predicate::False, Predicate::False) => true,
            (Predicate::And(a1, a2), Predicate::And(b1, b2)) | (Predicate::Or(a1, a2), Predicate::Or(b1, b2)) => {
                self.pred(a1, b1) && self.pred(a2, b2)
            }
            (Predicate::Not(x), Predicate::Not(y)) => self.pred(x, y),
            (Predicate::ValueCheck(x, v), Predicate::ValueCheck(y, w)) => self.vars.same(x, y) && v == w,
            (Predicate::Compare(x1, o1, y1), Predicate::Compare(x2, o2, y2)) => {
                o1 == o2 && self.vars.same(x1, x2) && self.vars.same(y1, y2)
            }
            _ => false,
        }
    }

    fn seq(&mut self, a: &[Instruction], b: &[Instruction]) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| self.instr(x, y))
    }

    fn instr(&mut self, a: &Instruction, b: &Instruction) -> bool {
        use Instruction::*;
        match (a, b) {
            (LetVisible { var: v1, api: a1, args: r1 }, LetVisible { var: v2, api: a2, args: r2 }) => {
                a1 == a2
                    && r1.len() == r2.len()
                    && r1.iter().all(|(k, e)| match r2.get(k) {
                        Some(f) => self.expr(e, f),
                        None => false,
                    })
                    && self.binder(v1, v2)
            }
            (LetHidden { var: v1, func: f1, args: x1 }, LetHidden { var: v2, func: f2, args: x2 }) => {
                self.func(f1, f2) && self.var_list(x1, x2) && self.binder(v1, v2)
            }
            (
                Ite { cond: c1, then_branch: t1, else_branch: e1 },
                Ite { cond: c2, then_branch: t2, else_branch: e2 },
            ) => self.pred(c1, c2) && self.seq(t1, t2) && self.seq(e1, e2),
            (Retry { body: b1, until: u1, .. }, Retry { body: b2, until: u2, .. }) => {
                self.seq(b1, b2) && self.pred(u1, u2)
            }
            (
                Foreach { var: v1, list: l1, body: b1, .. },
                Foreach { var: v2, list: l2, body: b2, .. },
            ) => self.expr(l1, l2) && self.binder(v1, v2) && self.seq(b1, b2),
            (Return, Return) | (Empty, Empty) => true,
            _ => false,
        }
    }

    fn defs_agree(&self) -> bool {
        self.funcs.fwd.iter().all(|(fa, fb)| {
            match (self.pa.hidden_defs.get(fa), self.pb.hidden_defs.get(fb)) {
                (Some(x), Some(y)) => x == y,
                (None, None) => self.pa.holes.contains(fa) && self.pb.holes.contains(fb),
                _ => false,
            }
        })
    }
}

/// Structural equality up to a bijective renaming of variables and hidden
/// functions. Built-ins map only to themselves.
pub fn equiv_mod_renaming(a: &Program, b: &Program) -> bool {
    if a.params.len() != b.params.len() {
        return false;
    }
    let mut ctx = Ctx { pa: a, pb: b, vars: Bijection::default(), funcs: Bijection::default() };
    for (x, y) in a.params.iter().zip(&b.params) {
        if !ctx.binder(x, y) {
            return false;
        }
    }
    ctx.seq(&a.body, &b.body) && ctx.defs_agree()
}

#[cfg(test)]
mod tests {
    use super::super::parse_program;
    use super::*;

    #[test]
    fn renaming_is_accepted() {
        let a = parse_program(
            "lambda p.\nlet x = s.A(k=p)\nlet y = f(x)\nif y == 1 {\n  let z = s.B(k=x)\n}\nwhere\nf := ($0) -> $0.a\n",
        )
        .unwrap();
        let b = parse_program(
            "lambda q.\nlet u = s.A(k=q)\nlet w = g(u)\nif w == 1 {\n  let _ = s.B(k=u)\n}\nwhere\ng := ($0) -> $0.a\n",
        )
        .unwrap();
        assert!(equiv_mod_renaming(&a, &b));
        assert!(equiv_mod_renaming(&b, &a));
    }

    #[test]
    fn mismatches_are_rejected() {
        let a = parse_program("lambda p, q.\nlet x = s.A(k=p, m=q)\n").unwrap();
        let b = parse_program("lambda p, q.\nlet x = s.A(k=q, m=p)\n").unwrap();
        assert!(!equiv_mod_renaming(&a, &b));
        let c = parse_program("lambda p.\nlet x = f(p)\nwhere\nf := ($0) -> $0.a\n").unwrap();
        let d = parse_program("lambda p.\nlet x = f(p)\nwhere\nf := ($0) -> $0.b\n").unwrap();
        assert!(!equiv_mod_renaming(&c, &d));
        let e = parse_program("lambda p.\nlet x = list(p)\n").unwrap();
        let g = parse_program("lambda p.\nlet x = first(p)\n").unwrap();
        assert!(!equiv_mod_renaming(&e, &g));
        // one variable cannot stand for two
        let h = parse_program("lambda p.\nlet x = s.A()\nlet y = s.A()\nlet z = s.B(a=x, b=y)\n").unwrap();
        let i = parse_program("lambda p.\nlet x = s.A()\nlet y = s.A()\nlet z = s.B(a=x, b=x)\n").unwrap();
        assert!(!equiv_mod_renaming(&h, &i));
    }
}
