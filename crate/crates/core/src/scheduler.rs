// SPDX-License-Identifier: Apache-2.0

//! ASAP scheduling of a [`Dfg`] onto a linear chain of time-multiplexed FUs.
//!
//! Stage `s` (1-based) runs on FU `s - 1`. FU0's register file holds the
//! stream inputs in declaration order; FU `k + 1`'s slot `j` holds the result
//! of FU `k`'s `j`-th instruction. Every edge must cross exactly one stage
//! boundary, so values needed further downstream are forwarded by bypass
//! instructions.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::dfg::{Dfg, OpKind, Word};
use crate::trace::{self, Action, TraceEvent};

/// Instruction memory and register file depth.
pub const FU_DEPTH: usize = 32;

/// Cycles between an FU's last issue and its next load: the result of the
/// last issue lands two cycles later.
pub const FLUSH_CYCLES: u64 = 2;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScheduleError {
    #[error("DFG has no arithmetic node reachable from an output")]
    NoArithmetic,
    #[error("stage {stage} needs {count} instructions, instruction memory holds {FU_DEPTH}")]
    StageOverflow { stage: usize, count: usize },
    #[error("FU{fu} receives {count} words per iteration, register file holds {FU_DEPTH}")]
    RfOverflow { fu: usize, count: usize },
    #[error("schedule file line {line}: {msg}")]
    Format { line: usize, msg: String },
}

/// A value flowing through the chain: either a DFG node's own result or a
/// bypass copy of it forwarded out of `stage`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ValueId {
    Node(usize),
    Copy { of: usize, stage: usize },
}

impl ValueId {
    pub fn origin(self) -> usize {
        match self {
            ValueId::Node(n) | ValueId::Copy { of: n, .. } => n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageEntry {
    pub value: ValueId,
    pub kind: OpKind,
    pub operands: Vec<ValueId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StagePlan {
    /// `stages[s - 1]` is stage `s`.
    pub stages: Vec<Vec<StageEntry>>,
    /// Stage of every DFG node (inputs 0; unused for pruned and output nodes).
    pub stage_of: Vec<usize>,
    /// Input node indices in stream order.
    pub inputs: Vec<usize>,
    /// `(output id, source node)` in declaration order.
    pub outputs: Vec<(String, usize)>,
    /// Live arithmetic node count (pruned dead code excluded).
    pub op_nodes: usize,
    input_meta: Vec<StreamInput>,
}

impl StagePlan {
    pub fn depth(&self) -> usize {
        self.stages.len()
    }

    /// Value read by a consumer in `stage` that needs `origin`'s result.
    fn operand_at(&self, origin: usize, stage: usize) -> ValueId {
        if self.stage_of[origin] + 1 == stage {
            ValueId::Node(origin)
        } else {
            ValueId::Copy { of: origin, stage: stage - 1 }
        }
    }

    /// Stage producing `v`, `0` for stream inputs.
    pub fn stage_of_value(&self, v: ValueId) -> usize {
        match v {
            ValueId::Node(n) => self.stage_of[n],
            ValueId::Copy { stage, .. } => stage,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FuInstr {
    pub op: OpKind,
    pub src_a: u8,
    pub src_b: u8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FuProgram {
    pub fu_index: usize,
    pub instrs: Vec<FuInstr>,
    /// Words written into this FU's register file per iteration.
    pub expected_loads: usize,
}

impl FuProgram {
    /// Length of one load/execute/flush round on this FU.
    pub fn busy_cycles(&self) -> u64 {
        (self.expected_loads + self.instrs.len()) as u64 + FLUSH_CYCLES
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StreamInput {
    pub id: String,
    /// Literal value fed automatically; `None` for caller-supplied inputs.
    pub constant: Option<Word>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OutputSlot {
    pub id: String,
    /// Index of the final-stage instruction whose result is this output.
    pub slot: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    pub fu_programs: Vec<FuProgram>,
    pub ii: u64,
    pub input_order: Vec<StreamInput>,
    pub output_order: Vec<OutputSlot>,
}

/// Nodes that contribute to at least one output.
fn live_nodes(dfg: &Dfg) -> Vec<bool> {
    let mut live = vec![false; dfg.nodes().len()];
    let mut stack = dfg.outputs();
    while let Some(n) = stack.pop() {
        if !std::mem::replace(&mut live[n], true) {
            stack.extend(dfg.node(n).operands.iter().copied());
        }
    }
    live
}

/// Places every live arithmetic node at its earliest stage. Arithmetic that
/// reaches no output is dropped.
pub fn asap_schedule(dfg: &Dfg) -> Result<StagePlan, ScheduleError> {
    let live = live_nodes(dfg);
    let level = dfg.levels();
    let ops: Vec<usize> = (0..dfg.nodes().len())
        .filter(|&i| live[i] && dfg.node(i).kind.is_arithmetic())
        .collect();
    let depth = ops.iter().map(|&i| level[i]).max().ok_or(ScheduleError::NoArithmetic)?;
    let mut stages = vec![Vec::new(); depth];
    for &i in &ops {
        let n = dfg.node(i);
        stages[level[i] - 1].push(StageEntry {
            value: ValueId::Node(i),
            kind: n.kind,
            operands: n.operands.iter().map(|&o| ValueId::Node(o)).collect(),
        });
    }
    let inputs = dfg.inputs();
    Ok(StagePlan {
        stages,
        stage_of: level,
        input_meta: inputs
            .iter()
            .map(|&i| StreamInput {
                id: dfg.node(i).id.clone(),
                constant: dfg.node(i).constant,
            })
            .collect(),
        inputs,
        outputs: dfg
            .outputs()
            .into_iter()
            .map(|o| (dfg.node(o).id.clone(), dfg.node(o).operands[0]))
            .collect(),
        op_nodes: ops.len(),
    })
}

/// Inserts bypass chains so every edge spans one stage boundary and every
/// output leaves from the final stage. Within a stage, arithmetic keeps
/// declaration order and bypasses follow, ordered by the node they forward.
pub fn legalize_bypass(plan: &StagePlan) -> Result<StagePlan, ScheduleError> {
    let depth = plan.depth();
    // Furthest stage that must see each value in its register file.
    let mut reach: BTreeMap<usize, usize> = BTreeMap::new();
    for (s, stage) in plan.stages.iter().enumerate() {
        for e in stage {
            for o in &e.operands {
                let r = reach.entry(o.origin()).or_insert(0);
                *r = (*r).max(s + 1);
            }
        }
    }
    for &(_, src) in &plan.outputs {
        reach.insert(src, depth + 1);
    }

    let mut out = plan.clone();
    for stage in &mut out.stages {
        stage.retain(|e| e.kind != OpKind::Bypass);
    }
    for (&origin, &furthest) in &reach {
        for s in plan.stage_of[origin] + 1..furthest {
            out.stages[s - 1].push(StageEntry {
                value: ValueId::Copy { of: origin, stage: s },
                kind: OpKind::Bypass,
                operands: vec![ValueId::Node(origin)],
            });
        }
    }
    for s in 1..=depth {
        let mut stage = std::mem::take(&mut out.stages[s - 1]);
        stage.sort_by_key(|e| (e.kind == OpKind::Bypass, e.value.origin()));
        for e in &mut stage {
            for o in &mut e.operands {
                *o = out.operand_at(o.origin(), s);
            }
        }
        if stage.len() > FU_DEPTH {
            return Err(ScheduleError::StageOverflow { stage: s, count: stage.len() });
        }
        out.stages[s - 1] = stage;
    }
    Ok(out)
}

/// Assigns register-file addresses and builds the per-FU programs.
pub fn allocate(plan: &StagePlan) -> Result<Schedule, ScheduleError> {
    let mut rf: BTreeMap<ValueId, usize> = plan
        .inputs
        .iter()
        .enumerate()
        .map(|(j, &i)| (ValueId::Node(i), j))
        .collect();
    let mut loads = plan.inputs.len();
    let mut programs = Vec::with_capacity(plan.depth());
    for (k, stage) in plan.stages.iter().enumerate() {
        if loads > FU_DEPTH {
            return Err(ScheduleError::RfOverflow { fu: k, count: loads });
        }
        if stage.len() > FU_DEPTH {
            return Err(ScheduleError::StageOverflow { stage: k + 1, count: stage.len() });
        }
        let addr = |v: &ValueId| -> u8 {
            let a = rf
                .get(v)
                .unwrap_or_else(|| panic!("operand {v:?} is not resident in FU{k}; plan not legalized"));
            *a as u8
        };
        let instrs = stage
            .iter()
            .map(|e| {
                let a = addr(&e.operands[0]);
                let b = if e.kind == OpKind::Bypass { a } else { addr(&e.operands[1]) };
                FuInstr { op: e.kind, src_a: a, src_b: b }
            })
            .collect();
        programs.push(FuProgram {
            fu_index: k,
            instrs,
            expected_loads: loads,
        });
        rf = stage.iter().enumerate().map(|(j, e)| (e.value, j)).collect();
        loads = stage.len();
    }
    let last = plan.depth();
    let output_order = plan
        .outputs
        .iter()
        .map(|(id, src)| {
            let v = plan.operand_at(*src, last + 1);
            OutputSlot {
                id: id.clone(),
                slot: *rf.get(&v).expect("output value leaves the final stage"),
            }
        })
        .collect();
    let mut schedule = Schedule {
        fu_programs: programs,
        ii: 0,
        input_order: plan.input_meta.clone(),
        output_order,
    };
    schedule.ii = compute_ii(&schedule);
    Ok(schedule)
}

/// `max_k(loads_k + ops_k + 2)`.
pub fn compute_ii(schedule: &Schedule) -> u64 {
    schedule.fu_programs.iter().map(FuProgram::busy_cycles).max().unwrap_or(0)
}

/// ASAP, legalize, allocate.
pub fn schedule_dfg(dfg: &Dfg) -> Result<Schedule, ScheduleError> {
    allocate(&legalize_bypass(&asap_schedule(dfg)?)?)
}

impl Schedule {
    pub fn fu_count(&self) -> usize {
        self.fu_programs.len()
    }

    pub fn word_count(&self) -> usize {
        self.fu_programs.iter().map(|p| p.instrs.len()).sum()
    }

    /// Arithmetic instructions across the chain (bypasses excluded).
    pub fn op_nodes(&self) -> usize {
        self.fu_programs
            .iter()
            .flat_map(|p| &p.instrs)
            .filter(|i| i.op != OpKind::Bypass)
            .count()
    }

    pub fn bypass_count(&self) -> usize {
        self.word_count() - self.op_nodes()
    }

    /// Static timetable for `iterations` back-to-back iterations with the
    /// input stream never running dry. FU0 starts iteration `i` so that its
    /// first issue lands at `loads_0 + 1 + i * ii`; each downstream FU starts
    /// issuing the cycle after its last load, two cycles behind its producer.
    pub fn timetable(&self, iterations: u64) -> Vec<TraceEvent> {
        let mut events = Vec::new();
        let Some(first) = self.fu_programs.first() else {
            return events;
        };
        for it in 0..iterations {
            let mut issue_start = first.expected_loads as u64 + 1 + it * self.ii;
            let mut load_start = issue_start - first.expected_loads as u64;
            for p in &self.fu_programs {
                if p.fu_index > 0 {
                    issue_start = load_start + p.expected_loads as u64;
                }
                for j in 0..p.expected_loads {
                    events.push(ev(load_start + j as u64, p.fu_index, Action::Load(j as u8)));
                }
                for (j, ins) in p.instrs.iter().enumerate() {
                    let action = Action::Issue { op: ins.op, a: ins.src_a, b: ins.src_b };
                    events.push(ev(issue_start + j as u64, p.fu_index, action));
                }
                load_start = issue_start + 2;
            }
            let last = self.fu_programs.len() - 1;
            for j in 0..self.fu_programs[last].instrs.len() {
                events.push(ev(load_start + j as u64, last, Action::Emit));
            }
        }
        events.sort_by_key(|e| (e.cycle, e.fu, !e.is_table_cell()));
        events
    }

    /// Tab-separated cycle table (one column per FU) of the first `cycles` cycles.
    pub fn render_table(&self, cycles: u64) -> String {
        let iterations = cycles / self.ii.max(1) + 2;
        trace::render_table(&self.timetable(iterations), self.fu_count(), cycles)
    }

    /// Machine-readable `key = value` form, read back by [`Schedule::parse`].
    pub fn render(&self) -> String {
        let mut s = String::from("# tmfu schedule\nversion = 1\n");
        let _ = writeln!(s, "ii = {}", self.ii);
        for i in &self.input_order {
            match i.constant {
                Some(v) => writeln!(s, "constant = {} {}", i.id, v),
                None => writeln!(s, "input = {}", i.id),
            }
            .unwrap();
        }
        for o in &self.output_order {
            let _ = writeln!(s, "output = {} {}", o.id, o.slot);
        }
        for p in &self.fu_programs {
            let instrs: Vec<String> = p
                .instrs
                .iter()
                .map(|i| format!("{} R{} R{}", i.op.mnemonic().to_uppercase(), i.src_a, i.src_b))
                .collect();
            let _ = writeln!(s, "fu = {} {} {}", p.fu_index, p.expected_loads, instrs.join(", "));
        }
        s
    }

    pub fn parse(text: &str) -> Result<Schedule, ScheduleError> {
        let mut sched = Schedule {
            fu_programs: Vec::new(),
            ii: 0,
            input_order: Vec::new(),
            output_order: Vec::new(),
        };
        let mut version = None;
        let mut declared_ii = None;
        for (ln, raw) in text.lines().enumerate() {
            let line = ln + 1;
            let bad = |msg: String| ScheduleError::Format { line, msg };
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| bad(format!("expected `key = value`, found `{content}`")))?;
            let words: Vec<&str> = value.split_whitespace().collect();
            let num = |s: &str| -> Result<usize, ScheduleError> {
                s.parse().map_err(|_| bad(format!("bad number `{s}`")))
            };
            match key {
                "version" => version = Some(num(value)?),
                "ii" => declared_ii = Some(num(value)? as u64),
                "input" if words.len() == 1 => sched.input_order.push(StreamInput {
                    id: words[0].to_string(),
                    constant: None,
                }),
                "constant" if words.len() == 2 => sched.input_order.push(StreamInput {
                    id: words[0].to_string(),
                    constant: Some(words[1].parse().map_err(|_| bad(format!("bad constant `{}`", words[1])))?),
                }),
                "output" if words.len() == 2 => sched.output_order.push(OutputSlot {
                    id: words[0].to_string(),
                    slot: num(words[1])?,
                }),
                "fu" if words.len() >= 2 => {
                    let fu_index = num(words[0])?;
                    if fu_index != sched.fu_programs.len() {
                        return Err(bad(format!("expected fu {}, found {fu_index}", sched.fu_programs.len())));
                    }
                    let expected_loads = num(words[1])?;
                    let rest = value.splitn(3, char::is_whitespace).nth(2).unwrap_or("");
                    let instrs = rest
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(|s| parse_instr(s).ok_or_else(|| bad(format!("bad instruction `{s}`"))))
                        .collect::<Result<Vec<_>, _>>()?;
                    sched.fu_programs.push(FuProgram {
                        fu_index,
                        instrs,
                        expected_loads,
                    });
                }
                _ => return Err(bad(format!("unrecognized entry `{content}`"))),
            }
        }
        let fmt_err = |msg: &str| ScheduleError::Format { line: 0, msg: msg.to_string() };
        if version != Some(1) {
            return Err(fmt_err("missing or unsupported version"));
        }
        if sched.fu_programs.is_empty() {
            return Err(fmt_err("schedule has no FUs"));
        }
        sched.ii = compute_ii(&sched);
        if declared_ii != Some(sched.ii) {
            return Err(fmt_err("declared ii disagrees with the FU programs"));
        }
        Ok(sched)
    }
}

fn parse_instr(s: &str) -> Option<FuInstr> {
    let f: Vec<&str> = s.split_whitespace().collect();
    let [op, a, b] = f.as_slice() else { return None };
    let op = match *op {
        "ADD" => OpKind::Add,
        "SUB" => OpKind::Sub,
        "MUL" => OpKind::Mul,
        "BYP" => OpKind::Bypass,
        _ => return None,
    };
    let reg = |r: &str| r.strip_prefix('R')?.parse::<u8>().ok().filter(|&n| (n as usize) < FU_DEPTH);
    Some(FuInstr { op, src_a: reg(a)?, src_b: reg(b)? })
}

fn ev(cycle: u64, fu: usize, action: Action) -> TraceEvent {
    TraceEvent { cycle, fu, action, value: None }
}
