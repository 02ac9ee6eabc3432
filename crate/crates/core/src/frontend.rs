// SPDX-License-Identifier: Apache-2.0

//! Straight-line kernel language and its lowering to a [`Dfg`].
//!
//! ```text
//! program := stmt+
//! stmt    := "in" ident ("," ident)* ";" | ident "=" expr ";" | "out" ident ";"
//! expr    := term (("+" | "-") term)*
//! term    := factor ("*" factor)*
//! factor  := ident | integer | "(" expr ")" | "(" "-" integer ")"
//! ```
//!
//! Variables are single-assignment. Free variables become stream inputs,
//! ordered by the optional `in` statement and then by first textual use.

use std::collections::{HashMap, HashSet};
use std::fmt;

use thiserror::Error;

use crate::dfg::{Dfg, DfgBuilder, OpKind, Word};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KernelError {
    #[error("{pos}: {msg}")]
    Syntax { pos: Pos, msg: String },
    #[error("{pos}: `{name}` is assigned more than once")]
    Reassignment { pos: Pos, name: String },
    #[error("{pos}: `{name}` is used before its definition")]
    UseBeforeDefinition { pos: Pos, name: String },
    #[error("{pos}: output `{name}` is not a defined variable")]
    UndefinedOutput { pos: Pos, name: String },
    #[error("{pos}: output `{name}` declared twice")]
    DuplicateOutput { pos: Pos, name: String },
    #[error("{pos}: input `{name}` declared twice or also assigned")]
    BadInputDecl { pos: Pos, name: String },
    #[error("program declares no outputs")]
    NoOutputs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
}

impl BinOp {
    fn kind(self) -> OpKind {
        match self {
            BinOp::Add => OpKind::Add,
            BinOp::Sub => OpKind::Sub,
            BinOp::Mul => OpKind::Mul,
        }
    }

    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Var(String),
    Lit(Word),
    Bin(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn bin(op: BinOp, a: Expr, b: Expr) -> Expr {
        Expr::Bin(op, Box::new(a), Box::new(b))
    }

    fn visit_vars<'a>(&'a self, f: &mut impl FnMut(&'a str)) {
        match self {
            Expr::Var(v) => f(v),
            Expr::Lit(_) => {}
            Expr::Bin(_, a, b) => {
                a.visit_vars(f);
                b.visit_vars(f);
            }
        }
    }

    fn visit_lits(&self, f: &mut impl FnMut(Word)) {
        match self {
            Expr::Var(_) => {}
            Expr::Lit(v) => f(*v),
            Expr::Bin(_, a, b) => {
                a.visit_lits(f);
                b.visit_lits(f);
            }
        }
    }

    pub fn eval(&self, env: &HashMap<String, Word>) -> Option<Word> {
        Some(match self {
            Expr::Var(v) => *env.get(v)?,
            Expr::Lit(v) => *v,
            Expr::Bin(op, a, b) => op.kind().apply(a.eval(env)?, b.eval(env)?),
        })
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Var(v) => f.write_str(v),
            Expr::Lit(v) if *v < 0 => write!(f, "(-{})", v.unsigned_abs()),
            Expr::Lit(v) => write!(f, "{v}"),
            Expr::Bin(op, a, b) => write!(f, "({} {} {})", a, op.symbol(), b),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    pub target: String,
    pub expr: Expr,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct KernelProgram {
    pub declared_inputs: Vec<String>,
    pub statements: Vec<Assignment>,
    pub outputs: Vec<String>,
}

impl KernelProgram {
    /// Stream inputs: declared ones first, then remaining free variables by
    /// first textual use.
    pub fn inputs(&self) -> Vec<String> {
        let assigned: HashSet<&str> = self.statements.iter().map(|s| s.target.as_str()).collect();
        let mut seen: HashSet<&str> = HashSet::new();
        let mut order: Vec<String> = Vec::new();
        for d in &self.declared_inputs {
            if seen.insert(d) {
                order.push(d.clone());
            }
        }
        for s in &self.statements {
            s.expr.visit_vars(&mut |v| {
                if !assigned.contains(v) && seen.insert(v) {
                    order.push(v.to_string());
                }
            });
        }
        order
    }

    /// Direct tree-walking interpretation, independent of lowering.
    pub fn interpret(&self, env: &HashMap<String, Word>) -> Option<Vec<Word>> {
        let mut vars = env.clone();
        for s in &self.statements {
            let v = s.expr.eval(&vars)?;
            vars.insert(s.target.clone(), v);
        }
        self.outputs.iter().map(|o| vars.get(o).copied()).collect()
    }

    /// Canonical source text; parses back to an equal program.
    pub fn render(&self) -> String {
        let mut out = String::new();
        if !self.declared_inputs.is_empty() {
            out.push_str(&format!("in {};\n", self.declared_inputs.join(", ")));
        }
        for s in &self.statements {
            out.push_str(&format!("{} = {};\n", s.target, s.expr));
        }
        for o in &self.outputs {
            out.push_str(&format!("out {o};\n"));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Int(u64),
    Sym(char),
    Eof,
}

struct Lexer {
    toks: Vec<(Tok, Pos)>,
}

impl Lexer {
    fn lex(text: &str) -> Result<Vec<(Tok, Pos)>, KernelError> {
        let mut lx = Lexer { toks: Vec::new() };
        let mut last = Pos { line: 1, col: 1 };
        for (li, line) in text.lines().enumerate() {
            let code = match line.find("//") {
                Some(i) => &line[..i],
                None => line,
            };
            let chars: Vec<char> = code.chars().collect();
            let mut i = 0;
            while i < chars.len() {
                let c = chars[i];
                let pos = Pos { line: li + 1, col: i + 1 };
                if c.is_whitespace() {
                    i += 1;
                } else if c.is_ascii_alphabetic() || c == '_' {
                    let start = i;
                    while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                        i += 1;
                    }
                    lx.toks.push((Tok::Ident(chars[start..i].iter().collect()), pos));
                } else if c.is_ascii_digit() {
                    let start = i;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                    let digits: String = chars[start..i].iter().collect();
                    let value = digits.parse::<u64>().map_err(|_| KernelError::Syntax {
                        pos,
                        msg: format!("integer `{digits}` out of range"),
                    })?;
                    lx.toks.push((Tok::Int(value), pos));
                } else if "=;,+-*()".contains(c) {
                    lx.toks.push((Tok::Sym(c), pos));
                    i += 1;
                } else {
                    return Err(KernelError::Syntax {
                        pos,
                        msg: format!("unexpected character `{c}`"),
                    });
                }
                last = Pos { line: li + 1, col: i + 1 };
            }
        }
        lx.toks.push((Tok::Eof, last));
        Ok(lx.toks)
    }
}

struct Parser {
    toks: Vec<(Tok, Pos)>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn peek2(&self) -> &Tok {
        &self.toks[(self.at + 1).min(self.toks.len() - 1)].0
    }

    fn pos(&self) -> Pos {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.at].0.clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, KernelError> {
        Err(KernelError::Syntax {
            pos: self.pos(),
            msg: msg.into(),
        })
    }

    fn expect(&mut self, c: char) -> Result<(), KernelError> {
        match self.peek() {
            Tok::Sym(s) if *s == c => {
                self.bump();
                Ok(())
            }
            other => self.err(format!("expected `{c}`, found {}", describe(other))),
        }
    }

    fn ident(&mut self) -> Result<String, KernelError> {
        match self.peek().clone() {
            Tok::Ident(s) if s != "in" && s != "out" => {
                self.bump();
                Ok(s)
            }
            other => self.err(format!("expected identifier, found {}", describe(&other))),
        }
    }

    fn literal(&mut self, negative: bool) -> Result<Word, KernelError> {
        let pos = self.pos();
        let Tok::Int(v) = self.bump() else {
            unreachable!("literal() called on a non-integer token")
        };
        let signed = if negative { -(v as i128) } else { v as i128 };
        Word::try_from(signed).map_err(|_| KernelError::Syntax {
            pos,
            msg: format!("integer {signed} does not fit in 32 bits"),
        })
    }

    fn expr(&mut self) -> Result<Expr, KernelError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Sym('+') => BinOp::Add,
                Tok::Sym('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            lhs = Expr::bin(op, lhs, self.term()?);
        }
    }

    fn term(&mut self) -> Result<Expr, KernelError> {
        let mut lhs = self.factor()?;
        while self.peek() == &Tok::Sym('*') {
            self.bump();
            lhs = Expr::bin(BinOp::Mul, lhs, self.factor()?);
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Expr, KernelError> {
        match self.peek().clone() {
            Tok::Int(_) => Ok(Expr::Lit(self.literal(false)?)),
            Tok::Sym('(') => {
                self.bump();
                if self.peek() == &Tok::Sym('-') && matches!(self.peek2(), Tok::Int(_)) {
                    self.bump();
                    let v = self.literal(true)?;
                    self.expect(')')?;
                    return Ok(Expr::Lit(v));
                }
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Ident(_) => Ok(Expr::Var(self.ident()?)),
            other => self.err(format!("expected operand, found {}", describe(&other))),
        }
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Int(v) => format!("`{v}`"),
        Tok::Sym(c) => format!("`{c}`"),
        Tok::Eof => "end of input".to_string(),
    }
}

/// Parses and validates a kernel.
pub fn parse_kernel(text: &str) -> Result<KernelProgram, KernelError> {
    let mut p = Parser {
        toks: Lexer::lex(text)?,
        at: 0,
    };
    if p.peek() == &Tok::Eof {
        return p.err("expected at least one statement");
    }
    let mut prog = KernelProgram::default();
    let mut out_pos = Vec::new();
    let mut in_pos = Vec::new();
    while p.peek() != &Tok::Eof {
        let pos = p.pos();
        match p.peek().clone() {
            Tok::Ident(kw) if kw == "out" => {
                p.bump();
                let name = p.ident()?;
                p.expect(';')?;
                prog.outputs.push(name);
                out_pos.push(pos);
            }
            Tok::Ident(kw) if kw == "in" => {
                p.bump();
                loop {
                    let at = p.pos();
                    prog.declared_inputs.push(p.ident()?);
                    in_pos.push(at);
                    if p.peek() == &Tok::Sym(',') {
                        p.bump();
                    } else {
                        break;
                    }
                }
                p.expect(';')?;
            }
            _ => {
                let target = p.ident()?;
                p.expect('=')?;
                let expr = p.expr()?;
                p.expect(';')?;
                prog.statements.push(Assignment { target, expr, pos });
            }
        }
    }
    validate(&prog, &out_pos, &in_pos)?;
    Ok(prog)
}

fn validate(prog: &KernelProgram, out_pos: &[Pos], in_pos: &[Pos]) -> Result<(), KernelError> {
    let mut assigned_at: HashMap<&str, usize> = HashMap::new();
    for (i, s) in prog.statements.iter().enumerate() {
        if assigned_at.insert(&s.target, i).is_some() {
            return Err(KernelError::Reassignment {
                pos: s.pos,
                name: s.target.clone(),
            });
        }
    }
    let mut declared = HashSet::new();
    for (d, &pos) in prog.declared_inputs.iter().zip(in_pos) {
        if !declared.insert(d.as_str()) || assigned_at.contains_key(d.as_str()) {
            return Err(KernelError::BadInputDecl { pos, name: d.clone() });
        }
    }
    for (i, s) in prog.statements.iter().enumerate() {
        let mut bad = None;
        s.expr.visit_vars(&mut |v| {
            if bad.is_none() && assigned_at.get(v).is_some_and(|&j| j >= i) {
                bad = Some(v.to_string());
            }
        });
        if let Some(name) = bad {
            return Err(KernelError::UseBeforeDefinition { pos: s.pos, name });
        }
    }
    if prog.outputs.is_empty() {
        return Err(KernelError::NoOutputs);
    }
    let mut seen = HashSet::new();
    for (o, &pos) in prog.outputs.iter().zip(out_pos) {
        if !assigned_at.contains_key(o.as_str()) {
            return Err(KernelError::UndefinedOutput { pos, name: o.clone() });
        }
        if !seen.insert(o.as_str()) {
            return Err(KernelError::DuplicateOutput { pos, name: o.clone() });
        }
    }
    Ok(())
}

/// Lowers with structural hash-consing: identical `(op, operand, operand)`
/// triples share one node. Literals become constant inputs after the real
/// inputs.
pub fn lower_to_dfg(prog: &KernelProgram) -> Dfg {
    let inputs = prog.inputs();
    let mut literals: Vec<Word> = Vec::new();
    for s in &prog.statements {
        s.expr.visit_lits(&mut |v| {
            if !literals.contains(&v) {
                literals.push(v);
            }
        });
    }

    let mut taken: HashSet<String> = inputs.iter().cloned().collect();
    taken.extend(prog.statements.iter().map(|s| s.target.clone()));
    let mut fresh = Namer { taken, next: 0 };

    let mut b = DfgBuilder::new();
    for i in &inputs {
        b.input(i);
    }
    let mut lit_names: HashMap<Word, String> = HashMap::new();
    for &v in &literals {
        let base = if v < 0 {
            format!("k_m{}", v.unsigned_abs())
        } else {
            format!("k{v}")
        };
        let name = fresh.claim(base);
        b.constant(&name, v);
        lit_names.insert(v, name);
    }

    let mut lw = Lowerer {
        builder: b,
        env: inputs.iter().map(|i| (i.clone(), i.clone())).collect(),
        lit_names,
        consed: HashMap::new(),
        namer: fresh,
    };
    for s in &prog.statements {
        let node = lw.lower(&s.expr);
        lw.env.insert(s.target.clone(), node);
    }
    for o in &prog.outputs {
        let src = lw.env[o].clone();
        lw.builder.output(o, &src);
    }
    lw.builder.build().expect("lowering of a validated program is well-formed")
}

struct Namer {
    taken: HashSet<String>,
    next: usize,
}

impl Namer {
    fn claim(&mut self, base: String) -> String {
        let mut name = base.clone();
        let mut n = 0;
        while self.taken.contains(&name) {
            n += 1;
            name = format!("{base}_{n}");
        }
        self.taken.insert(name.clone());
        name
    }

    fn op(&mut self) -> String {
        loop {
            let name = format!("n{}", self.next);
            self.next += 1;
            if self.taken.insert(name.clone()) {
                return name;
            }
        }
    }
}

struct Lowerer {
    builder: DfgBuilder,
    env: HashMap<String, String>,
    lit_names: HashMap<Word, String>,
    consed: HashMap<(BinOp, String, String), String>,
    namer: Namer,
}

impl Lowerer {
    fn lower(&mut self, e: &Expr) -> String {
        match e {
            Expr::Var(v) => self.env[v].clone(),
            Expr::Lit(v) => self.lit_names[v].clone(),
            Expr::Bin(op, a, b) => {
                let a = self.lower(a);
                let b = self.lower(b);
                let key = (*op, a, b);
                if let Some(n) = self.consed.get(&key) {
                    return n.clone();
                }
                let name = self.namer.op();
                self.builder.op(&name, op.kind(), &key.1, &key.2);
                self.consed.insert(key, name.clone());
                name
            }
        }
    }
}

/// Parse and lower in one step.
pub fn compile_kernel(text: &str) -> Result<Dfg, KernelError> {
    Ok(lower_to_dfg(&parse_kernel(text)?))
}
