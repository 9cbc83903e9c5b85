use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use indexmap::IndexMap;

use crate::hidden::HiddenFnBody;
use crate::json::JsonValue;

/// The parameter introduced by the initial program to select a trace.
pub const BRANCH_PARAM: &str = "br";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LoopId(pub u32);

pub type NamedArgs = IndexMap<String, Expr>;
pub type InstructionSeq = Vec<Instruction>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Expr {
    Const(JsonValue),
    Var(String),
    Ternary(Box<Predicate>, Box<Expr>, Box<Expr>),
    HiddenCall(String, Vec<String>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Ge,
    Gt,
    Le,
    Lt,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Predicate {
    True,
    False,
    And(Box<Predicate>, Box<Predicate>),
    Or(Box<Predicate>, Box<Predicate>),
    Not(Box<Predicate>),
    ValueCheck(String, JsonValue),
    Compare(String, CmpOp, String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Instruction {
    LetVisible { var: String, api: String, args: NamedArgs },
    LetHidden { var: String, func: String, args: Vec<String> },
    Ite { cond: Predicate, then_branch: InstructionSeq, else_branch: InstructionSeq },
    Retry { id: LoopId, body: InstructionSeq, until: Predicate },
    Foreach { id: LoopId, var: String, list: Expr, body: InstructionSeq },
    Return,
    Empty,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Program {
    pub params: Vec<String>,
    pub body: InstructionSeq,
    pub hidden_defs: BTreeMap<String, HiddenFnBody>,
    pub holes: Vec<String>,
}

/// Location of a statement: alternating statement index and branch selector
/// (0 for then/body, 1 for else), always ending at a statement index.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SitePath(pub Vec<usize>);

impl SitePath {
    pub fn parent_seq(&self) -> &[usize] {
        &self.0[..self.0.len() - 1]
    }

    pub fn index(&self) -> usize {
        *self.0.last().expect("site path is never empty")
    }

    pub fn child(&self, branch: usize, index: usize) -> SitePath {
        let mut v = self.0.clone();
        v.push(branch);
        v.push(index);
        SitePath(v)
    }

    pub fn sibling(&self, index: usize) -> SitePath {
        let mut v = self.0.clone();
        *v.last_mut().unwrap() = index;
        SitePath(v)
    }
}

impl fmt::Display for SitePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|i| i.to_string()).collect();
        f.write_str(&parts.join("."))
    }
}

impl Expr {
    pub fn var(name: &str) -> Expr {
        Expr::Var(name.to_string())
    }

    pub fn collect_vars(&self, out: &mut Vec<String>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(v) => out.push(v.clone()),
            Expr::Ternary(c, a, b) => {
                c.collect_vars(out);
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Expr::HiddenCall(_, args) => out.extend(args.iter().cloned()),
        }
    }

    pub fn vars(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    pub fn mentions(&self, name: &str) -> bool {
        self.vars().iter().any(|v| v == name)
    }

    pub fn rename(&mut self, from: &str, to: &str) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(v) => {
                if v == from {
                    *v = to.to_string();
                }
            }
            Expr::Ternary(c, a, b) => {
                c.rename(from, to);
                a.rename(from, to);
                b.rename(from, to);
            }
            Expr::HiddenCall(_, args) => rename_all(args, from, to),
        }
    }

    /// Occurrences of `name`, counting nested ternaries.
    pub fn count_var(&self, name: &str) -> usize {
        self.vars().iter().filter(|v| *v == name).count()
    }
}

impl Predicate {
    pub fn collect_vars(&self, out: &mut Vec<String>) {
        match self {
            Predicate::True | Predicate::False => {}
            Predicate::And(a, b) | Predicate::Or(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Predicate::Not(p) => p.collect_vars(out),
            Predicate::ValueCheck(v, _) => out.push(v.clone()),
            Predicate::Compare(a, _, b) => {
                out.push(a.clone());
                out.push(b.clone());
            }
        }
    }

    pub fn vars(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    pub fn rename(&mut self, from: &str, to: &str) {
        match self {
            Predicate::True | Predicate::False => {}
            Predicate::And(a, b) | Predicate::Or(a, b) => {
                a.rename(from, to);
                b.rename(from, to);
            }
            Predicate::Not(p) => p.rename(from, to),
            Predicate::ValueCheck(v, _) => {
                if v == from {
                    *v = to.to_string();
                }
            }
            Predicate::Compare(a, _, b) => {
                if a == from {
                    *a = to.to_string();
                }
                if b == from {
                    *b = to.to_string();
                }
            }
        }
    }

    pub fn negate(self) -> Predicate {
        match self {
            Predicate::Not(p) => *p,
            Predicate::True => Predicate::False,
            Predicate::False => Predicate::True,
            p => Predicate::Not(Box::new(p)),
        }
    }

    /// `if x` is a check against `true`.
    pub fn truthy(var: &str) -> Predicate {
        Predicate::ValueCheck(var.to_string(), JsonValue::Bool(true))
    }
}

fn rename_all(args: &mut [String], from: &str, to: &str) {
    for a in args.iter_mut() {
        if a == from {
            *a = to.to_string();
        }
    }
}

impl Instruction {
    /// The variable this instruction binds, if any.
    pub fn bound_var(&self) -> Option<&str> {
        match self {
            Instruction::LetVisible { var, .. } | Instruction::LetHidden { var, .. } => Some(var),
            Instruction::Foreach { var, .. } => Some(var),
            _ => None,
        }
    }

    /// Variables read directly by this instruction, not by nested blocks.
    pub fn own_uses(&self) -> Vec<String> {
        let mut out = Vec::new();
        match self {
            Instruction::LetVisible { args, .. } => args.values().for_each(|e| e.collect_vars(&mut out)),
            Instruction::LetHidden { args, .. } => out.extend(args.iter().cloned()),
            Instruction::Ite { cond, .. } => cond.collect_vars(&mut out),
            Instruction::Retry { until, .. } => until.collect_vars(&mut out),
            Instruction::Foreach { list, .. } => list.collect_vars(&mut out),
            Instruction::Return | Instruction::Empty => {}
        }
        out
    }

    pub fn blocks(&self) -> Vec<&InstructionSeq> {
        match self {
            Instruction::Ite { then_branch, else_branch, .. } => vec![then_branch, else_branch],
            Instruction::Retry { body, .. } | Instruction::Foreach { body, .. } => vec![body],
            _ => Vec::new(),
        }
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut InstructionSeq> {
        match self {
            Instruction::Ite { then_branch, else_branch, .. } => vec![then_branch, else_branch],
            Instruction::Retry { body, .. } | Instruction::Foreach { body, .. } => vec![body],
            _ => Vec::new(),
        }
    }

    pub fn is_loop(&self) -> bool {
        matches!(self, Instruction::Retry { .. } | Instruction::Foreach { .. })
    }

    /// Renames uses (not bindings) of `from` in this instruction and nested blocks.
    pub fn rename_uses(&mut self, from: &str, to: &str) {
        match self {
            Instruction::LetVisible { args, .. } => args.values_mut().for_each(|e| e.rename(from, to)),
            Instruction::LetHidden { args, .. } => rename_all(args, from, to),
            Instruction::Ite { cond, .. } => cond.rename(from, to),
            Instruction::Retry { until, .. } => until.rename(from, to),
            Instruction::Foreach { list, .. } => list.rename(from, to),
            Instruction::Return | Instruction::Empty => {}
        }
        for block in self.blocks_mut() {
            rename_uses_in(block, from, to);
        }
    }
}

pub fn rename_uses_in(seq: &mut [Instruction], from: &str, to: &str) {
    for ins in seq.iter_mut() {
        ins.rename_uses(from, to);
    }
}

/// Whether any instruction in `seq` (recursively) reads `name`.
pub fn seq_uses(seq: &[Instruction], name: &str) -> bool {
    seq.iter().any(|ins| {
        ins.own_uses().iter().any(|v| v == name) || ins.blocks().iter().any(|b| seq_uses(b, name))
    })
}

/// Every variable read anywhere in `seq`.
pub fn seq_all_uses(seq: &[Instruction], out: &mut BTreeSet<String>) {
    for ins in seq {
        out.extend(ins.own_uses());
        for b in ins.blocks() {
            seq_all_uses(b, out);
        }
    }
}

/// Every variable bound anywhere in `seq`, in pre-order.
pub fn seq_bound_vars(seq: &[Instruction], out: &mut Vec<String>) {
    for ins in seq {
        if let Some(v) = ins.bound_var() {
            out.push(v.to_string());
        }
        for b in ins.blocks() {
            seq_bound_vars(b, out);
        }
    }
}

/// Pre-order paths of every statement in `seq`, prefixed by `prefix`.
pub fn seq_sites(seq: &[Instruction], prefix: &[usize], out: &mut Vec<SitePath>) {
    for (i, ins) in seq.iter().enumerate() {
        let mut p = prefix.to_vec();
        p.push(i);
        out.push(SitePath(p.clone()));
        for (b, block) in ins.blocks().into_iter().enumerate() {
            let mut q = p.clone();
            q.push(b);
            seq_sites(block, &q, out);
        }
    }
}

impl Program {
    pub fn new(params: Vec<String>, body: InstructionSeq) -> Program {
        let mut p = Program { params, body, ..Default::default() };
        p.renumber_loops();
        p
    }

    pub fn seq(&self, prefix: &[usize]) -> Option<&InstructionSeq> {
        let mut seq = &self.body;
        for pair in prefix.chunks(2) {
            let ins = seq.get(pair[0])?;
            seq = *ins.blocks().get(*pair.get(1)?)?;
        }
        Some(seq)
    }

    pub fn seq_mut(&mut self, prefix: &[usize]) -> Option<&mut InstructionSeq> {
        let mut seq = &mut self.body;
        for pair in prefix.chunks(2) {
            let ins = seq.get_mut(pair[0])?;
            seq = ins.blocks_mut().into_iter().nth(*pair.get(1)?)?;
        }
        Some(seq)
    }

    pub fn stmt(&self, site: &SitePath) -> Option<&Instruction> {
        self.seq(site.parent_seq())?.get(site.index())
    }

    pub fn stmt_mut(&mut self, site: &SitePath) -> Option<&mut Instruction> {
        let idx = site.index();
        self.seq_mut(site.parent_seq())?.get_mut(idx)
    }

    pub fn sites(&self) -> Vec<SitePath> {
        let mut out = Vec::new();
        seq_sites(&self.body, &[], &mut out);
        out
    }

    /// Whether the statement at `site` sits inside a loop body.
    pub fn in_loop(&self, site: &SitePath) -> bool {
        self.enclosing_loop(site).is_some()
    }

    /// The outermost loop statement enclosing `site`.
    pub fn enclosing_loop(&self, site: &SitePath) -> Option<SitePath> {
        let v = &site.0;
        let mut k = 1;
        while k < v.len() {
            let stmt_path = SitePath(v[..k].to_vec());
            if self.stmt(&stmt_path).map(Instruction::is_loop).unwrap_or(false) {
                return Some(stmt_path);
            }
            k += 2;
        }
        None
    }

    /// Let-bound variables visible at `site`: everything bound earlier in
    /// flow order, skipping bodies of loops that do not contain the site.
    pub fn bound_before(&self, site: &SitePath) -> Vec<String> {
        let mut out = Vec::new();
        collect_bound_before(&self.body, &site.0, &mut out);
        out
    }

    pub fn all_bound_vars(&self) -> Vec<String> {
        let mut out = Vec::new();
        seq_bound_vars(&self.body, &mut out);
        out
    }

    pub fn uses(&self, name: &str) -> bool {
        seq_uses(&self.body, name)
    }

    /// Assigns loop ids in pre-order.
    pub fn renumber_loops(&mut self) {
        fn walk(seq: &mut [Instruction], next: &mut u32) {
            for ins in seq.iter_mut() {
                match ins {
                    Instruction::Retry { id, .. } | Instruction::Foreach { id, .. } => {
                        *id = LoopId(*next);
                        *next += 1;
                    }
                    _ => {}
                }
                for b in ins.blocks_mut() {
                    walk(b, next);
                }
            }
        }
        let mut next = 0;
        walk(&mut self.body, &mut next);
    }

    /// Every name already taken by a parameter, binding, hole or definition.
    pub fn taken_names(&self) -> BTreeSet<String> {
        let mut names: BTreeSet<String> = self.params.iter().cloned().collect();
        names.extend(self.all_bound_vars());
        names.extend(self.holes.iter().cloned());
        names.extend(self.hidden_defs.keys().cloned());
        names
    }

    /// A fresh name `{stem}_{k}` with the smallest unused `k >= 1`.
    pub fn fresh_name(&self, stem: &str) -> String {
        let taken = self.taken_names();
        fresh_from(&taken, stem)
    }
}

pub fn fresh_from(taken: &BTreeSet<String>, stem: &str) -> String {
    (1..)
        .map(|k| format!("{stem}_{k}"))
        .find(|n| !taken.contains(n))
        .expect("unbounded")
}

fn collect_bound_before(seq: &[Instruction], path: &[usize], out: &mut Vec<String>) {
    let target = path.first().copied();
    for (i, ins) in seq.iter().enumerate() {
        if Some(i) == target {
            if path.len() >= 3 {
                if let Instruction::Foreach { var, .. } = ins {
                    out.push(var.clone());
                }
                let blocks = ins.blocks();
                if path[1] == 1 {
                    // else branch: the then branch is visible in flow order
                    seq_bound_vars(blocks[0], out);
                }
                collect_bound_before(blocks[path[1]], &path[2..], out);
            }
            return;
        }
        if let Some(v) = ins.bound_var() {
            if !ins.is_loop() {
                out.push(v.to_string());
            }
        }
        if !ins.is_loop() {
            for b in ins.blocks() {
                seq_bound_vars(b, out);
            }
        }
    }
}
