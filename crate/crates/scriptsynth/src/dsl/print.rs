use std::fmt::{self, Write};

use super::ast::*;
use crate::json::JsonValue;

const INDENT: &str = "  ";

impl fmt::Display for CmpOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CmpOp::Ge => ">=",
            CmpOp::Gt => ">",
            CmpOp::Le => "<=",
            CmpOp::Lt => "<",
        })
    }
}

fn prec(p: &Predicate) -> u8 {
    match p {
        Predicate::Or(..) => 1,
        Predicate::And(..) => 2,
        _ => 3,
    }
}

fn write_pred_min(f: &mut fmt::Formatter<'_>, p: &Predicate, min: u8) -> fmt::Result {
    if prec(p) < min {
        write!(f, "({p})")
    } else {
        write!(f, "{p}")
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Predicate::True => f.write_str("true"),
            Predicate::False => f.write_str("false"),
            Predicate::ValueCheck(x, JsonValue::Bool(true)) => f.write_str(x),
            Predicate::ValueCheck(x, v) => write!(f, "{x} == {v}"),
            Predicate::Not(inner) => match &**inner {
                Predicate::ValueCheck(x, v) => write!(f, "{x} != {v}"),
                other => write!(f, "!({other})"),
            },
            Predicate::Compare(a, op, b) => write!(f, "{a} {op} {b}"),
            Predicate::And(a, b) => {
                write_pred_min(f, a, 2)?;
                f.write_str(" && ")?;
                write_pred_min(f, b, 3)
            }
            Predicate::Or(a, b) => {
                write_pred_min(f, a, 1)?;
                f.write_str(" || ")?;
                write_pred_min(f, b, 2)
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(v) => write!(f, "{v}"),
            Expr::Var(v) => f.write_str(v),
            Expr::Ternary(c, a, b) => {
                let arm = |f: &mut fmt::Formatter<'_>, e: &Expr| match e {
                    Expr::Ternary(..) => write!(f, "({e})"),
                    _ => write!(f, "{e}"),
                };
                write!(f, "({c}) ? ")?;
                arm(f, a)?;
                f.write_str(" : ")?;
                arm(f, b)
            }
            Expr::HiddenCall(name, args) => write!(f, "{name}({})", args.join(", ")),
        }
    }
}

fn write_seq(out: &mut String, seq: &[Instruction], depth: usize) {
    for ins in seq {
        write_instr(out, ins, depth);
    }
}

fn write_instr(out: &mut String, ins: &Instruction, depth: usize) {
    let pad = INDENT.repeat(depth);
    match ins {
        Instruction::LetVisible { var, api, args } => {
            let parts: Vec<String> = args.iter().map(|(k, e)| format!("{k}={e}")).collect();
            let _ = writeln!(out, "{pad}let {var} = {api}({})", parts.join(", "));
        }
        Instruction::LetHidden { var, func, args } => {
            let _ = writeln!(out, "{pad}let {var} = {func}({})", args.join(", "));
        }
        Instruction::Ite { cond, then_branch, else_branch } => {
            let _ = writeln!(out, "{pad}if {cond} {{");
            write_seq(out, then_branch, depth + 1);
            if else_branch.is_empty() {
                let _ = writeln!(out, "{pad}}}");
            } else {
                let _ = writeln!(out, "{pad}}} else {{");
                write_seq(out, else_branch, depth + 1);
                let _ = writeln!(out, "{pad}}}");
            }
        }
        Instruction::Retry { body, until, .. } => {
            let _ = writeln!(out, "{pad}retry {{");
            write_seq(out, body, depth + 1);
            let _ = writeln!(out, "{pad}}} until {until}");
        }
        Instruction::Foreach { var, list, body, .. } => {
            let _ = writeln!(out, "{pad}for ({var}) in {list} {{");
            write_seq(out, body, depth + 1);
            let _ = writeln!(out, "{pad}}}");
        }
        Instruction::Return => {
            let _ = writeln!(out, "{pad}return");
        }
        Instruction::Empty => {
            let _ = writeln!(out, "{pad}skip");
        }
    }
}

/// Deterministic surface syntax; `parse_program` reads it back.
pub fn print_program(p: &Program) -> String {
    let mut out = String::new();
    if !p.holes.is_empty() {
        let _ = writeln!(out, "LAMBDA {}.", p.holes.join(", "));
    }
    if p.params.is_empty() {
        out.push_str("lambda .\n");
    } else {
        let _ = writeln!(out, "lambda {}.", p.params.join(", "));
    }
    write_seq(&mut out, &p.body, 0);
    if !p.hidden_defs.is_empty() {
        out.push_str("where\n");
        for (name, def) in &p.hidden_defs {
            let _ = writeln!(out, "{name} := {def}");
        }
    }
    out
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print_program(self))
    }
}
