use std::collections::BTreeSet;

use indexmap::IndexMap;

use super::ast::*;
use super::lexer::{lex, Tok, Token};
use super::ParseError;
use crate::hidden::{is_builtin, BoolExpr, HiddenExpr, HiddenFnBody, PathExpr};
use crate::json::JsonValue;

const KEYWORDS: &[&str] = &[
    "let", "if", "else", "retry", "until", "for", "in", "return", "skip", "where", "lambda",
    "LAMBDA", "true", "false", "null",
];

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let i = (self.pos + k).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, msg: impl Into<String>) -> PResult<T> {
        let t = &self.toks[self.pos];
        Err(ParseError { line: t.line, col: t.col, message: msg.into() })
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Tok::Punct(q) if *q == p)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if self.is_punct(p) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, p: &str) -> PResult<()> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            self.error(format!("expected `{p}`, found {}", describe(self.peek())))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<()> {
        if self.is_kw(kw) {
            self.bump();
            Ok(())
        } else {
            self.error(format!("expected `{kw}`, found {}", describe(self.peek())))
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                self.bump();
                Ok(s)
            }
            other => self.error(format!("expected identifier, found {}", describe(&other))),
        }
    }

    fn ident_list(&mut self, terminator: &str) -> PResult<Vec<String>> {
        let mut out = Vec::new();
        if self.is_punct(terminator) {
            return Ok(out);
        }
        loop {
            out.push(self.ident()?);
            if !self.eat_punct(",") {
                break;
            }
        }
        Ok(out)
    }

    fn program(&mut self) -> PResult<Program> {
        let mut holes = Vec::new();
        if self.is_kw("LAMBDA") {
            self.bump();
            holes = self.ident_list(".")?;
            self.expect_punct(".")?;
        }
        self.expect_kw("lambda")?;
        let params = self.ident_list(".")?;
        self.expect_punct(".")?;
        let body = self.seq()?;
        let mut hidden_defs = std::collections::BTreeMap::new();
        if self.is_kw("where") {
            self.bump();
            while !matches!(self.peek(), Tok::Eof) {
                let name = self.ident()?;
                self.expect_punct(":=")?;
                let def = self.hidden_def()?;
                if hidden_defs.insert(name.clone(), def).is_some() {
                    return self.error(format!("duplicate definition of {name}"));
                }
            }
        }
        if !matches!(self.peek(), Tok::Eof) {
            return self.error(format!("unexpected {}", describe(self.peek())));
        }
        let mut p = Program { params, body, hidden_defs, holes };
        let hidden_names: BTreeSet<String> =
            p.holes.iter().chain(p.hidden_defs.keys()).cloned().collect();
        classify_nullary(&mut p.body, &hidden_names);
        p.renumber_loops();
        Ok(p)
    }

    fn seq(&mut self) -> PResult<InstructionSeq> {
        let mut out = Vec::new();
        while !self.is_punct("}") && !self.is_kw("where") && !matches!(self.peek(), Tok::Eof) {
            out.push(self.stmt()?);
        }
        Ok(out)
    }

    fn block(&mut self) -> PResult<InstructionSeq> {
        self.expect_punct("{")?;
        let s = self.seq()?;
        self.expect_punct("}")?;
        Ok(s)
    }

    fn stmt(&mut self) -> PResult<Instruction> {
        let kw = match self.peek() {
            Tok::Ident(s) => s.clone(),
            other => return self.error(format!("expected statement, found {}", describe(other))),
        };
        match kw.as_str() {
            "let" => {
                self.bump();
                let var = self.ident()?;
                self.expect_punct("=")?;
                self.call(var)
            }
            "if" => {
                self.bump();
                let cond = self.pred()?;
                let then_branch = self.block()?;
                let else_branch = if self.is_kw("else") {
                    self.bump();
                    self.block()?
                } else {
                    Vec::new()
                };
                Ok(Instruction::Ite { cond, then_branch, else_branch })
            }
            "retry" => {
                self.bump();
                let body = self.block()?;
                self.expect_kw("until")?;
                let until = self.pred()?;
                Ok(Instruction::Retry { id: LoopId(0), body, until })
            }
            "for" => {
                self.bump();
                self.expect_punct("(")?;
                let var = self.ident()?;
                self.expect_punct(")")?;
                self.expect_kw("in")?;
                let list = self.expr()?;
                let body = self.block()?;
                Ok(Instruction::Foreach { id: LoopId(0), var, list, body })
            }
            "return" => {
                self.bump();
                Ok(Instruction::Return)
            }
            "skip" => {
                self.bump();
                Ok(Instruction::Empty)
            }
            _ => self.error(format!("expected statement, found {}", describe(self.peek()))),
        }
    }

    fn call(&mut self, var: String) -> PResult<Instruction> {
        let mut name = self.ident()?;
        let mut dotted = false;
        while self.is_punct(".") && matches!(self.peek_at(1), Tok::Ident(_)) {
            self.bump();
            if let Tok::Ident(s) = self.bump() {
                name.push('.');
                name.push_str(&s);
            }
            dotted = true;
        }
        self.expect_punct("(")?;
        if self.eat_punct(")") {
            return Ok(Instruction::LetVisible { var, api: name, args: IndexMap::new() });
        }
        let named = matches!(self.peek(), Tok::Ident(_)) && matches!(self.peek_at(1), Tok::Punct("="));
        if named {
            let mut args = IndexMap::new();
            loop {
                let key = match self.bump() {
                    Tok::Ident(s) => s,
                    _ => unreachable!(),
                };
                self.expect_punct("=")?;
                let e = self.expr()?;
                if args.insert(key.clone(), e).is_some() {
                    return self.error(format!("duplicate argument {key}"));
                }
                if !self.eat_punct(",") {
                    break;
                }
                if !(matches!(self.peek(), Tok::Ident(_)) && matches!(self.peek_at(1), Tok::Punct("="))) {
                    return self.error("expected named argument");
                }
            }
            self.expect_punct(")")?;
            Ok(Instruction::LetVisible { var, api: name, args })
        } else {
            if dotted {
                return self.error(format!("call to {name} needs named arguments"));
            }
            let args = self.ident_list(")")?;
            self.expect_punct(")")?;
            Ok(Instruction::LetHidden { var, func: name, args })
        }
    }

    fn pred(&mut self) -> PResult<Predicate> {
        let mut lhs = self.pred_and()?;
        while self.eat_punct("||") {
            let rhs = self.pred_and()?;
            lhs = Predicate::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn pred_and(&mut self) -> PResult<Predicate> {
        let mut lhs = self.pred_unary()?;
        while self.eat_punct("&&") {
            let rhs = self.pred_unary()?;
            lhs = Predicate::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn pred_unary(&mut self) -> PResult<Predicate> {
        if self.eat_punct("!") {
            let inner = self.pred_unary()?;
            return Ok(Predicate::Not(Box::new(inner)));
        }
        if self.eat_punct("(") {
            let p = self.pred()?;
            self.expect_punct(")")?;
            return Ok(p);
        }
        if self.is_kw("true") {
            self.bump();
            return Ok(Predicate::True);
        }
        if self.is_kw("false") {
            self.bump();
            return Ok(Predicate::False);
        }
        let x = self.ident()?;
        let op = match self.peek() {
            Tok::Punct(p) => *p,
            _ => return Ok(Predicate::truthy(&x)),
        };
        match op {
            "==" | "!=" => {
                self.bump();
                let v = self.literal()?;
                let check = Predicate::ValueCheck(x, v);
                Ok(if op == "!=" { Predicate::Not(Box::new(check)) } else { check })
            }
            ">=" | ">" | "<=" | "<" => {
                self.bump();
                let y = self.ident()?;
                let op = match op {
                    ">=" => CmpOp::Ge,
                    ">" => CmpOp::Gt,
                    "<=" => CmpOp::Le,
                    _ => CmpOp::Lt,
                };
                Ok(Predicate::Compare(x, op, y))
            }
            _ => Ok(Predicate::truthy(&x)),
        }
    }

    fn expr(&mut self) -> PResult<Expr> {
        if self.is_punct("(") {
            let save = self.pos;
            self.bump();
            if let Ok(c) = self.pred() {
                if self.eat_punct(")") && self.eat_punct("?") {
                    let a = self.expr()?;
                    self.expect_punct(":")?;
                    let b = self.expr()?;
                    return Ok(Expr::Ternary(Box::new(c), Box::new(a), Box::new(b)));
                }
            }
            self.pos = save;
            self.bump();
            let e = self.expr()?;
            self.expect_punct(")")?;
            return Ok(e);
        }
        match self.peek() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                let name = self.ident()?;
                if self.eat_punct("(") {
                    let args = self.ident_list(")")?;
                    self.expect_punct(")")?;
                    Ok(Expr::HiddenCall(name, args))
                } else {
                    Ok(Expr::Var(name))
                }
            }
            _ => Ok(Expr::Const(self.literal()?)),
        }
    }

    fn literal(&mut self) -> PResult<JsonValue> {
        match self.peek().clone() {
            Tok::Str(s) => {
                self.bump();
                Ok(JsonValue::String(s))
            }
            Tok::Int(n) => {
                self.bump();
                Ok(JsonValue::Int(n))
            }
            Tok::Float(s) => {
                self.bump();
                Ok(JsonValue::Float(s))
            }
            Tok::Ident(s) if s == "true" || s == "false" || s == "null" => {
                self.bump();
                Ok(match s.as_str() {
                    "true" => JsonValue::Bool(true),
                    "false" => JsonValue::Bool(false),
                    _ => JsonValue::Null,
                })
            }
            Tok::Punct("[") => {
                self.bump();
                let mut items = Vec::new();
                if !self.eat_punct("]") {
                    loop {
                        items.push(self.literal()?);
                        if !self.eat_punct(",") {
                            break;
                        }
                    }
                    self.expect_punct("]")?;
                }
                Ok(JsonValue::Array(items))
            }
            Tok::Punct("{") => {
                self.bump();
                let mut map = IndexMap::new();
                if !self.eat_punct("}") {
                    loop {
                        let key = match self.bump() {
                            Tok::Str(s) => s,
                            other => return self.error(format!("expected object key, found {}", describe(&other))),
                        };
                        self.expect_punct(":")?;
                        let v = self.literal()?;
                        map.insert(key, v);
                        if !self.eat_punct(",") {
                            break;
                        }
                    }
                    self.expect_punct("}")?;
                }
                Ok(JsonValue::Object(map))
            }
            other => self.error(format!("expected literal, found {}", describe(&other))),
        }
    }

    fn hidden_def(&mut self) -> PResult<HiddenFnBody> {
        self.expect_punct("(")?;
        let mut binders: Vec<Option<String>> = Vec::new();
        if !self.is_punct(")") {
            loop {
                match self.bump() {
                    Tok::Slot(n) if n == binders.len() => binders.push(None),
                    Tok::Slot(n) => return self.error(format!("binder ${n} out of order")),
                    Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => binders.push(Some(s)),
                    other => return self.error(format!("expected binder, found {}", describe(&other))),
                }
                if !self.eat_punct(",") {
                    break;
                }
            }
        }
        self.expect_punct(")")?;
        self.expect_punct("->")?;
        let arity = binders.len();
        let mut hp = HiddenParser { p: self, binders: &binders };
        let body = hp.expr()?;
        if let Some(s) = body.used_slots().into_iter().find(|s| *s >= arity) {
            return self.error(format!("slot ${s} exceeds arity {arity}"));
        }
        Ok(HiddenFnBody { arity, body })
    }
}

struct HiddenParser<'a> {
    p: &'a mut Parser,
    binders: &'a [Option<String>],
}

impl HiddenParser<'_> {
    fn expr(&mut self) -> PResult<HiddenExpr> {
        let first = self.unary()?;
        if !self.p.is_punct("&&") {
            return Ok(first);
        }
        let mut acc = self.as_bool(first)?;
        while self.p.eat_punct("&&") {
            let rhs = self.unary()?;
            let rhs = self.as_bool(rhs)?;
            acc = BoolExpr::And(Box::new(acc), Box::new(rhs));
        }
        Ok(HiddenExpr::Bool(acc))
    }

    fn as_bool(&self, e: HiddenExpr) -> PResult<BoolExpr> {
        match e {
            HiddenExpr::Bool(b) => Ok(b),
            _ => self.p.error("expected a boolean expression"),
        }
    }

    fn unary(&mut self) -> PResult<HiddenExpr> {
        if self.p.eat_punct("!") {
            let inner = self.unary()?;
            let b = self.as_bool(inner)?;
            return Ok(HiddenExpr::Bool(BoolExpr::Not(Box::new(b))));
        }
        let e = self.primary()?;
        if self.p.eat_punct("==") {
            let v = self.p.literal()?;
            return match e {
                HiddenExpr::Path(j) => Ok(HiddenExpr::Bool(BoolExpr::Eq(j, v))),
                _ => self.p.error("left side of `==` must be a path"),
            };
        }
        Ok(e)
    }

    fn primary(&mut self) -> PResult<HiddenExpr> {
        match self.p.peek().clone() {
            Tok::Ident(s) if s == "empty" && matches!(self.p.peek_at(1), Tok::Punct("(")) => {
                self.p.bump();
                self.p.bump();
                let j = self.path()?;
                self.p.expect_punct(")")?;
                Ok(HiddenExpr::Bool(BoolExpr::Empty(j)))
            }
            Tok::Punct("(") => {
                self.p.bump();
                let inner = self.expr()?;
                self.p.expect_punct(")")?;
                match inner {
                    HiddenExpr::Path(j) => Ok(HiddenExpr::Path(self.postfix(j)?)),
                    other => Ok(other),
                }
            }
            Tok::Punct("[") => {
                self.p.bump();
                let mut items = Vec::new();
                if !self.p.eat_punct("]") {
                    loop {
                        items.push(self.expr()?);
                        if !self.p.eat_punct(",") {
                            break;
                        }
                    }
                    self.p.expect_punct("]")?;
                }
                Ok(HiddenExpr::list(items))
            }
            Tok::Slot(_) | Tok::Ident(_) if self.starts_path() => Ok(HiddenExpr::Path(self.path()?)),
            _ => {
                let v = self.p.literal()?;
                if self.p.is_punct("+") || self.p.is_punct("++") {
                    Ok(HiddenExpr::Path(self.add_tail(v)?))
                } else {
                    Ok(HiddenExpr::Const(v))
                }
            }
        }
    }

    fn starts_path(&self) -> bool {
        match self.p.peek() {
            Tok::Slot(_) => true,
            Tok::Ident(s) => s == "length" || self.binders.iter().any(|b| b.as_deref() == Some(s)),
            _ => false,
        }
    }

    fn add_tail(&mut self, v: JsonValue) -> PResult<PathExpr> {
        let concat = self.p.is_punct("++");
        self.p.bump();
        let j = self.path()?;
        Ok(if concat { PathExpr::Concat(v, Box::new(j)) } else { PathExpr::Add(v, Box::new(j)) })
    }

    /// A path, including a leading `v + ...` chain.
    fn path(&mut self) -> PResult<PathExpr> {
        match self.p.peek().clone() {
            Tok::Slot(n) => {
                self.p.bump();
                self.postfix(PathExpr::Input(n))
            }
            Tok::Ident(s) if s == "length" && matches!(self.p.peek_at(1), Tok::Punct("(")) => {
                self.p.bump();
                self.p.bump();
                let j = self.path()?;
                self.p.expect_punct(")")?;
                self.postfix(PathExpr::Length(Box::new(j)))
            }
            Tok::Ident(s) => match self.binders.iter().position(|b| b.as_deref() == Some(s.as_str())) {
                Some(i) => {
                    self.p.bump();
                    self.postfix(PathExpr::Input(i))
                }
                None => self.p.error(format!("unknown binder {s}")),
            },
            Tok::Punct("(") => {
                self.p.bump();
                let j = self.path()?;
                self.p.expect_punct(")")?;
                self.postfix(j)
            }
            _ => {
                let v = self.p.literal()?;
                if self.p.is_punct("+") || self.p.is_punct("++") {
                    self.add_tail(v)
                } else {
                    self.p.error("expected a path")
                }
            }
        }
    }

    fn postfix(&mut self, mut j: PathExpr) -> PResult<PathExpr> {
        loop {
            if self.p.is_punct(".") || self.p.is_punct("..") {
                let desc = self.p.is_punct("..");
                self.p.bump();
                let key = match self.p.bump() {
                    Tok::Ident(s) | Tok::Str(s) => s,
                    other => return self.p.error(format!("expected key, found {}", describe(&other))),
                };
                j = if desc { PathExpr::Desc(Box::new(j), key) } else { PathExpr::Child(Box::new(j), key) };
            } else if self.p.is_punct("[") {
                self.p.bump();
                let lo = self.int()?;
                if self.p.eat_punct(":") {
                    let hi = self.int()?;
                    self.p.expect_punct("]")?;
                    j = PathExpr::Slice(Box::new(j), lo, hi);
                } else {
                    self.p.expect_punct("]")?;
                    j = PathExpr::Index(Box::new(j), lo);
                }
            } else {
                return Ok(j);
            }
        }
    }

    fn int(&mut self) -> PResult<i64> {
        match self.p.bump() {
            Tok::Int(n) => Ok(n),
            other => self.p.error(format!("expected integer, found {}", describe(&other))),
        }
    }
}

fn classify_nullary(seq: &mut [Instruction], hidden: &BTreeSet<String>) {
    for ins in seq.iter_mut() {
        if let Instruction::LetVisible { var, api, args } = ins {
            if args.is_empty() && (hidden.contains(api.as_str()) || is_builtin(api)) {
                *ins = Instruction::LetHidden { var: var.clone(), func: api.clone(), args: Vec::new() };
            }
        }
        for b in ins.blocks_mut() {
            classify_nullary(b, hidden);
        }
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Slot(n) => format!("`${n}`"),
        Tok::Int(n) => format!("`{n}`"),
        Tok::Float(s) => format!("`{s}`"),
        Tok::Str(s) => format!("string {s:?}"),
        Tok::Punct(p) => format!("`{p}`"),
        Tok::Eof => "end of input".to_string(),
    }
}

pub fn parse_program(text: &str) -> Result<Program, ParseError> {
    let toks = lex(text)?;
    Parser { toks, pos: 0 }.program()
}

/// Parses a single hidden-function definition such as `($0) -> $0.a[0]`.
pub fn parse_hidden_fn(text: &str) -> Result<HiddenFnBody, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0 };
    let def = p.hidden_def()?;
    if !matches!(p.peek(), Tok::Eof) {
        return p.error(format!("unexpected {}", describe(p.peek())));
    }
    Ok(def)
}
