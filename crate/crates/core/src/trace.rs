// SPDX-License-Identifier: Apache-2.0

//! Cycle trace events and their two text forms: the per-cycle table (one
//! column per FU, `Load Rn` / `OP (Ra Rb)` cells) and `cycle,fu,action,detail,value` rows.

use std::fmt::Write as _;

use thiserror::Error;

use crate::dfg::{OpKind, Word};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Load(u8),
    Issue { op: OpKind, a: u8, b: u8 },
    Emit,
    Stall,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TraceEvent {
    /// 1-based.
    pub cycle: u64,
    pub fu: usize,
    pub action: Action,
    /// Loaded word, issued result or emitted word, when known.
    pub value: Option<Word>,
}

impl TraceEvent {
    pub fn is_table_cell(&self) -> bool {
        matches!(self.action, Action::Load(_) | Action::Issue { .. })
    }

    pub fn without_value(mut self) -> Self {
        self.value = None;
        self
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TraceParseError {
    #[error("line {line}: {msg}")]
    Bad { line: usize, msg: String },
}

fn op_name(op: OpKind, a: u8, b: u8) -> &'static str {
    match op {
        OpKind::Add => "ADD",
        OpKind::Sub => "SUB",
        OpKind::Mul if a == b => "SQR",
        OpKind::Mul => "MUL",
        OpKind::Bypass => "BYP",
        OpKind::Input | OpKind::Output => unreachable!("not an FU instruction"),
    }
}

fn parse_op(name: &str) -> Option<OpKind> {
    Some(match name {
        "ADD" => OpKind::Add,
        "SUB" => OpKind::Sub,
        "SQR" | "MUL" => OpKind::Mul,
        "BYP" => OpKind::Bypass,
        _ => return None,
    })
}

fn parse_reg(s: &str) -> Option<u8> {
    let n: u8 = s.strip_prefix('R')?.parse().ok()?;
    (n < 32).then_some(n)
}

pub fn cell_text(action: &Action) -> String {
    match *action {
        Action::Load(r) => format!("Load R{r}"),
        Action::Issue { op, a, b } => format!("{} (R{} R{})", op_name(op, a, b), a, b),
        Action::Emit => "Emit".to_string(),
        Action::Stall => "Stall".to_string(),
    }
}

fn parse_cell(cell: &str) -> Option<Action> {
    if let Some(r) = cell.strip_prefix("Load ") {
        return parse_reg(r).map(Action::Load);
    }
    let (name, rest) = cell.split_once(' ')?;
    let regs = rest.strip_prefix('(')?.strip_suffix(')')?;
    let (a, b) = regs.split_once(' ')?;
    let (a, b) = (parse_reg(a)?, parse_reg(b)?);
    let op = parse_op(name)?;
    if name == "SQR" && a != b || name == "MUL" && a == b {
        return None;
    }
    Some(Action::Issue { op, a, b })
}

/// Renders loads and issues as a tab-separated table covering cycles
/// `1..=last_cycle`. Other events are omitted; they appear only in rows form.
pub fn render_table(events: &[TraceEvent], fu_count: usize, last_cycle: u64) -> String {
    let mut grid = vec![vec![String::new(); fu_count]; last_cycle as usize];
    for e in events.iter().filter(|e| e.is_table_cell() && e.cycle <= last_cycle) {
        grid[e.cycle as usize - 1][e.fu] = cell_text(&e.action);
    }
    let mut out = String::from("cycle");
    for k in 0..fu_count {
        let _ = write!(out, "\tFU{k}");
    }
    out.push('\n');
    for (i, row) in grid.iter().enumerate() {
        let _ = write!(out, "{}", i + 1);
        for cell in row {
            out.push('\t');
            out.push_str(cell);
        }
        out.push('\n');
    }
    out
}

/// Table covering every cycle up to the last load or issue.
pub fn render_full_table(events: &[TraceEvent], fu_count: usize) -> String {
    let last = events
        .iter()
        .filter(|e| e.is_table_cell())
        .map(|e| e.cycle)
        .max()
        .unwrap_or(0);
    render_table(events, fu_count, last)
}

/// Inverse of [`render_table`]: events sorted by `(cycle, fu)`, values absent.
pub fn parse_table(text: &str) -> Result<Vec<TraceEvent>, TraceParseError> {
    let mut lines = text.lines().enumerate();
    let bad = |line: usize, msg: String| TraceParseError::Bad { line: line + 1, msg };
    let (_, header) = lines.next().ok_or_else(|| bad(0, "missing header".into()))?;
    let cols: Vec<&str> = header.split('\t').collect();
    if cols.first() != Some(&"cycle")
        || cols[1..].iter().enumerate().any(|(k, c)| *c != format!("FU{k}"))
    {
        return Err(bad(0, format!("bad header `{header}`")));
    }
    let fu_count = cols.len() - 1;
    let mut events = Vec::new();
    for (ln, line) in lines {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != fu_count + 1 {
            return Err(bad(ln, format!("expected {} columns, found {}", fu_count + 1, fields.len())));
        }
        let cycle: u64 = fields[0]
            .parse()
            .map_err(|_| bad(ln, format!("bad cycle `{}`", fields[0])))?;
        for (fu, cell) in fields[1..].iter().enumerate() {
            if cell.is_empty() {
                continue;
            }
            let action = parse_cell(cell).ok_or_else(|| bad(ln, format!("bad cell `{cell}`")))?;
            events.push(TraceEvent {
                cycle,
                fu,
                action,
                value: None,
            });
        }
    }
    Ok(events)
}

pub fn render_rows(events: &[TraceEvent]) -> String {
    let mut out = String::from("cycle,fu,action,detail,value\n");
    for e in events {
        let (action, detail) = match e.action {
            Action::Load(r) => ("load", format!("R{r}")),
            Action::Issue { op, a, b } => ("issue", format!("{} R{} R{}", op_name(op, a, b), a, b)),
            Action::Emit => ("emit", String::new()),
            Action::Stall => ("stall", String::new()),
        };
        let value = e.value.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{},{}", e.cycle, e.fu, action, detail, value);
    }
    out
}

pub fn parse_rows(text: &str) -> Result<Vec<TraceEvent>, TraceParseError> {
    let mut events = Vec::new();
    for (ln, line) in text.lines().enumerate().skip(1) {
        let bad = |msg: String| TraceParseError::Bad { line: ln + 1, msg };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(bad(format!("expected 5 fields, found {}", f.len())));
        }
        let cycle = f[0].parse().map_err(|_| bad(format!("bad cycle `{}`", f[0])))?;
        let fu = f[1].parse().map_err(|_| bad(format!("bad fu `{}`", f[1])))?;
        let action = match f[2] {
            "load" => Action::Load(parse_reg(f[3]).ok_or_else(|| bad(format!("bad register `{}`", f[3])))?),
            "issue" => {
                let parts: Vec<&str> = f[3].split(' ').collect();
                let cell = match parts.as_slice() {
                    [op, a, b] => format!("{op} ({a} {b})"),
                    _ => return Err(bad(format!("bad issue `{}`", f[3]))),
                };
                parse_cell(&cell).ok_or_else(|| bad(format!("bad issue `{}`", f[3])))?
            }
            "emit" => Action::Emit,
            "stall" => Action::Stall,
            other => return Err(bad(format!("unknown action `{other}`"))),
        };
        let value = if f[4].is_empty() {
            None
        } else {
            Some(f[4].parse().map_err(|_| bad(format!("bad value `{}`", f[4])))?)
        };
        events.push(TraceEvent { cycle, fu, action, value });
    }
    Ok(events)
}
