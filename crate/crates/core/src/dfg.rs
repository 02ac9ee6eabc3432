// SPDX-License-Identifier: Apache-2.0

//! Dataflow-graph model: nodes, text format, validation, statistics and the
//! functional interpreter used as the reference for the simulator.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use indexmap::IndexMap;
use thiserror::Error;

/// Datapath word. All arithmetic wraps in 32-bit two's complement.
pub type Word = i32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OpKind {
    Input,
    Output,
    Add,
    Sub,
    Mul,
    /// Identity forward to the next stage. Only the scheduler creates these.
    Bypass,
}

impl OpKind {
    pub fn arity(self) -> usize {
        match self {
            OpKind::Input => 0,
            OpKind::Output | OpKind::Bypass => 1,
            OpKind::Add | OpKind::Sub | OpKind::Mul => 2,
        }
    }

    pub fn is_arithmetic(self) -> bool {
        matches!(self, OpKind::Add | OpKind::Sub | OpKind::Mul)
    }

    /// Applies the ALU function. `Bypass` forwards `a`.
    pub fn apply(self, a: Word, b: Word) -> Word {
        match self {
            OpKind::Add => a.wrapping_add(b),
            OpKind::Sub => a.wrapping_sub(b),
            OpKind::Mul => a.wrapping_mul(b),
            OpKind::Bypass => a,
            OpKind::Input | OpKind::Output => panic!("{self:?} has no ALU function"),
        }
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            OpKind::Input => "in",
            OpKind::Output => "out",
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::Bypass => "byp",
        }
    }

    fn from_mnemonic(s: &str) -> Option<OpKind> {
        match s {
            "add" => Some(OpKind::Add),
            "sub" => Some(OpKind::Sub),
            "mul" => Some(OpKind::Mul),
            _ => None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DfgError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: unknown operand `{id}`")]
    UnknownOperand { line: usize, id: String },
    #[error("line {line}: duplicate node id `{id}`")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: `{id}` expects {expected} operand(s), found {found}")]
    Arity {
        line: usize,
        id: String,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: `{id}` cannot consume output node `{operand}`")]
    OutputAsOperand {
        line: usize,
        id: String,
        operand: String,
    },
    #[error("line {line}: bypass node `{id}` is reserved for the scheduler")]
    UserBypass { line: usize, id: String },
    #[error("dependency cycle through `{witness}`")]
    Cycle { witness: String },
    #[error("no value bound for input `{0}`")]
    MissingInput(String),
    #[error("expected {expected} input values, got {found}")]
    InputArity { expected: usize, found: usize },
}

/// A node as stored in a validated [`Dfg`]. Operands are indices into
/// [`Dfg::nodes`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DfgNode {
    pub id: String,
    pub kind: OpKind,
    pub operands: Vec<usize>,
    /// Set for inputs synthesized from integer literals; the stream feeds this value.
    pub constant: Option<Word>,
}

/// Validated, acyclic dataflow graph. Declaration order is preserved and is
/// the tie-breaker for every ordering decision downstream.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Dfg {
    nodes: Vec<DfgNode>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DfgStats {
    pub input_count: usize,
    pub output_count: usize,
    /// Every operand reference, including edges into output nodes.
    pub edge_count: usize,
    pub op_nodes: usize,
    pub graph_depth: usize,
}

impl DfgStats {
    /// `op_nodes / graph_depth` as `(numerator, denominator)`; `(0, 1)` when
    /// there is no arithmetic.
    pub fn avg_parallelism(&self) -> (usize, usize) {
        if self.graph_depth == 0 {
            (0, 1)
        } else {
            (self.op_nodes, self.graph_depth)
        }
    }

    /// Average parallelism truncated to two decimals, e.g. `2.16` for 13/6.
    pub fn avg_parallelism_display(&self) -> String {
        let (n, d) = self.avg_parallelism();
        let hundredths = n * 100 / d;
        format!("{}.{:02}", hundredths / 100, hundredths % 100)
    }
}

struct PendingNode {
    line: usize,
    id: String,
    kind: OpKind,
    operands: Vec<String>,
    constant: Option<Word>,
}

/// Incremental constructor; [`DfgBuilder::build`] resolves and validates.
#[derive(Default)]
pub struct DfgBuilder {
    pending: Vec<PendingNode>,
}

impl DfgBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, line: usize, id: &str, kind: OpKind, operands: Vec<String>, constant: Option<Word>) {
        self.pending.push(PendingNode {
            line,
            id: id.to_string(),
            kind,
            operands,
            constant,
        });
    }

    pub fn input(&mut self, id: &str) -> &mut Self {
        let line = self.pending.len() + 1;
        self.push(line, id, OpKind::Input, Vec::new(), None);
        self
    }

    pub fn constant(&mut self, id: &str, value: Word) -> &mut Self {
        let line = self.pending.len() + 1;
        self.push(line, id, OpKind::Input, Vec::new(), Some(value));
        self
    }

    pub fn op(&mut self, id: &str, kind: OpKind, a: &str, b: &str) -> &mut Self {
        let line = self.pending.len() + 1;
        self.push(line, id, kind, vec![a.to_string(), b.to_string()], None);
        self
    }

    pub fn output(&mut self, id: &str, src: &str) -> &mut Self {
        let line = self.pending.len() + 1;
        self.push(line, id, OpKind::Output, vec![src.to_string()], None);
        self
    }

    pub fn build(self) -> Result<Dfg, DfgError> {
        let mut index: HashMap<&str, usize> = HashMap::new();
        for (i, p) in self.pending.iter().enumerate() {
            if index.insert(p.id.as_str(), i).is_some() {
                return Err(DfgError::DuplicateId {
                    line: p.line,
                    id: p.id.clone(),
                });
            }
        }
        let mut nodes = Vec::with_capacity(self.pending.len());
        for p in &self.pending {
            if p.kind == OpKind::Bypass {
                return Err(DfgError::UserBypass {
                    line: p.line,
                    id: p.id.clone(),
                });
            }
            if p.operands.len() != p.kind.arity() {
                return Err(DfgError::Arity {
                    line: p.line,
                    id: p.id.clone(),
                    expected: p.kind.arity(),
                    found: p.operands.len(),
                });
            }
            let mut operands = Vec::with_capacity(p.operands.len());
            for name in &p.operands {
                let &j = index.get(name.as_str()).ok_or_else(|| DfgError::UnknownOperand {
                    line: p.line,
                    id: name.clone(),
                })?;
                if self.pending[j].kind == OpKind::Output {
                    return Err(DfgError::OutputAsOperand {
                        line: p.line,
                        id: p.id.clone(),
                        operand: name.clone(),
                    });
                }
                operands.push(j);
            }
            nodes.push(DfgNode {
                id: p.id.clone(),
                kind: p.kind,
                operands,
                constant: p.constant,
            });
        }
        topo_indices(&nodes)?;
        Ok(Dfg { nodes })
    }
}

/// Kahn's algorithm, always taking the ready node with the lowest
/// declaration index.
fn topo_indices(nodes: &[DfgNode]) -> Result<Vec<usize>, DfgError> {
    let mut pending_deps: Vec<usize> = nodes
        .iter()
        .map(|n| n.operands.iter().collect::<BTreeSet<_>>().len())
        .collect();
    let mut users: Vec<Vec<usize>> = vec![Vec::new(); nodes.len()];
    for (i, n) in nodes.iter().enumerate() {
        for &o in n.operands.iter().collect::<BTreeSet<_>>() {
            users[o].push(i);
        }
    }
    let mut ready: BTreeSet<usize> = (0..nodes.len()).filter(|&i| pending_deps[i] == 0).collect();
    let mut order = Vec::with_capacity(nodes.len());
    while let Some(i) = ready.pop_first() {
        order.push(i);
        for &u in &users[i] {
            pending_deps[u] -= 1;
            if pending_deps[u] == 0 {
                ready.insert(u);
            }
        }
    }
    if order.len() != nodes.len() {
        let witness = (0..nodes.len()).find(|&i| pending_deps[i] > 0).expect("unordered node");
        return Err(DfgError::Cycle {
            witness: nodes[witness].id.clone(),
        });
    }
    Ok(order)
}

fn valid_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl Dfg {
    /// Parses the line format: `i <id>`, `k <id> <value>`,
    /// `n <id> <add|sub|mul> <a> <b>`, `o <id> <src>`; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Dfg, DfgError> {
        let mut b = DfgBuilder::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = lineno + 1;
            let content = raw.split('#').next().unwrap_or("");
            let fields: Vec<&str> = content.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            let syntax = |msg: String| DfgError::Syntax { line, msg };
            let id = *fields.get(1).ok_or_else(|| syntax(format!("`{}` needs a node id", fields[0])))?;
            if !valid_ident(id) {
                return Err(syntax(format!("invalid node id `{id}`")));
            }
            match fields[0] {
                "i" => {
                    if fields.len() != 2 {
                        return Err(DfgError::Arity {
                            line,
                            id: id.to_string(),
                            expected: 0,
                            found: fields.len() - 2,
                        });
                    }
                    b.push(line, id, OpKind::Input, Vec::new(), None);
                }
                "k" => {
                    if fields.len() != 3 {
                        return Err(syntax(format!("constant `{id}` needs exactly one value")));
                    }
                    let value: Word = fields[2]
                        .parse()
                        .map_err(|_| syntax(format!("bad constant value `{}`", fields[2])))?;
                    b.push(line, id, OpKind::Input, Vec::new(), Some(value));
                }
                "n" => {
                    let op = fields.get(2).ok_or_else(|| syntax(format!("`{id}` needs an operation")))?;
                    let kind = OpKind::from_mnemonic(op)
                        .ok_or_else(|| syntax(format!("unknown operation `{op}`")))?;
                    let operands: Vec<String> = fields[3..].iter().map(|s| s.to_string()).collect();
                    if let Some(bad) = operands.iter().find(|o| !valid_ident(o)) {
                        return Err(syntax(format!("invalid operand `{bad}`")));
                    }
                    b.push(line, id, kind, operands, None);
                }
                "o" => {
                    let operands: Vec<String> = fields[2..].iter().map(|s| s.to_string()).collect();
                    if let Some(bad) = operands.iter().find(|o| !valid_ident(o)) {
                        return Err(syntax(format!("invalid operand `{bad}`")));
                    }
                    b.push(line, id, OpKind::Output, operands, None);
                }
                other => return Err(syntax(format!("unknown line kind `{other}`"))),
            }
        }
        b.build()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for n in &self.nodes {
            let line = match (n.kind, n.constant) {
                (OpKind::Input, Some(v)) => format!("k {} {}", n.id, v),
                (OpKind::Input, None) => format!("i {}", n.id),
                (OpKind::Output, _) => format!("o {} {}", n.id, self.nodes[n.operands[0]].id),
                (kind, _) => format!(
                    "n {} {} {} {}",
                    n.id,
                    kind.mnemonic(),
                    self.nodes[n.operands[0]].id,
                    self.nodes[n.operands[1]].id
                ),
            };
            out.push_str(&line);
            out.push('\n');
        }
        out
    }

    pub fn nodes(&self) -> &[DfgNode] {
        &self.nodes
    }

    pub fn node(&self, idx: usize) -> &DfgNode {
        &self.nodes[idx]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    /// Input node indices in declaration order, constants included.
    pub fn inputs(&self) -> Vec<usize> {
        self.indices_of(|n| n.kind == OpKind::Input)
    }

    /// Inputs that must be bound by the caller (not literal constants).
    pub fn free_inputs(&self) -> Vec<usize> {
        self.indices_of(|n| n.kind == OpKind::Input && n.constant.is_none())
    }

    pub fn outputs(&self) -> Vec<usize> {
        self.indices_of(|n| n.kind == OpKind::Output)
    }

    fn indices_of(&self, pred: impl Fn(&DfgNode) -> bool) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| pred(&self.nodes[i])).collect()
    }

    pub fn topological_order(&self) -> Vec<&DfgNode> {
        topo_indices(&self.nodes)
            .expect("validated dfg is acyclic")
            .into_iter()
            .map(|i| &self.nodes[i])
            .collect()
    }

    pub(crate) fn topological_indices(&self) -> Vec<usize> {
        topo_indices(&self.nodes).expect("validated dfg is acyclic")
    }

    /// ASAP level per node: inputs 0, arithmetic `1 + max(operands)`,
    /// outputs inherit their source's level.
    pub fn levels(&self) -> Vec<usize> {
        let mut level = vec![0usize; self.nodes.len()];
        for i in self.topological_indices() {
            let n = &self.nodes[i];
            level[i] = match n.kind {
                OpKind::Input => 0,
                OpKind::Output => level[n.operands[0]],
                _ => 1 + n.operands.iter().map(|&o| level[o]).max().unwrap_or(0),
            };
        }
        level
    }

    pub fn stats(&self) -> DfgStats {
        let level = self.levels();
        DfgStats {
            input_count: self.nodes.iter().filter(|n| n.kind == OpKind::Input).count(),
            output_count: self.nodes.iter().filter(|n| n.kind == OpKind::Output).count(),
            edge_count: self.nodes.iter().map(|n| n.operands.len()).sum(),
            op_nodes: self.nodes.iter().filter(|n| n.kind.is_arithmetic()).count(),
            graph_depth: self.outputs().into_iter().map(|o| level[o]).max().unwrap_or(0),
        }
    }

    /// Evaluates every output. Literal constants use their recorded value.
    pub fn evaluate(&self, inputs: &HashMap<String, Word>) -> Result<IndexMap<String, Word>, DfgError> {
        let mut value = vec![0 as Word; self.nodes.len()];
        for i in self.topological_indices() {
            let n = &self.nodes[i];
            value[i] = match n.kind {
                OpKind::Input => match n.constant {
                    Some(v) => v,
                    None => *inputs
                        .get(&n.id)
                        .ok_or_else(|| DfgError::MissingInput(n.id.clone()))?,
                },
                OpKind::Output => value[n.operands[0]],
                kind => kind.apply(value[n.operands[0]], value[n.operands[1]]),
            };
        }
        Ok(self
            .outputs()
            .into_iter()
            .map(|o| (self.nodes[o].id.clone(), value[o]))
            .collect())
    }

    /// Positional form of [`Dfg::evaluate`]: `values` follow [`Dfg::free_inputs`],
    /// results follow [`Dfg::outputs`].
    pub fn evaluate_vector(&self, values: &[Word]) -> Result<Vec<Word>, DfgError> {
        let free = self.free_inputs();
        if free.len() != values.len() {
            return Err(DfgError::InputArity {
                expected: free.len(),
                found: values.len(),
            });
        }
        let env = free
            .iter()
            .zip(values)
            .map(|(&i, &v)| (self.nodes[i].id.clone(), v))
            .collect();
        Ok(self.evaluate(&env)?.into_values().collect())
    }
}

impl fmt::Display for Dfg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GRADIENT: &str = include_str!("../data/gradient.dfg");

    fn env(pairs: &[(&str, Word)]) -> HashMap<String, Word> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn gradient_shape() {
        let d = Dfg::parse(GRADIENT).unwrap();
        let s = d.stats();
        assert_eq!((s.input_count, s.output_count), (5, 1));
        assert_eq!(s.op_nodes, 11);
        assert_eq!(s.graph_depth, 4);
        assert_eq!(s.avg_parallelism_display(), "2.75");
        // 4 subs and 4 squares and 3 adds, 2 operands each, plus the output edge
        assert_eq!(s.edge_count, 23);
    }

    #[test]
    fn pass_through() {
        let d = Dfg::parse("i x\no y x\n").unwrap();
        let s = d.stats();
        assert_eq!(d.nodes().len(), 2);
        assert_eq!((s.op_nodes, s.graph_depth), (0, 0));
        assert_eq!(s.avg_parallelism_display(), "0.00");
        assert_eq!(d.evaluate(&env(&[("x", 9)])).unwrap()["y"], 9);
    }

    #[test]
    fn unknown_operand_named() {
        let err = Dfg::parse("i x\nn t add x missing_id\no y t\n").unwrap_err();
        assert_eq!(
            err,
            DfgError::UnknownOperand {
                line: 2,
                id: "missing_id".into()
            }
        );
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(Dfg::parse("i x\ni x\n"), Err(DfgError::DuplicateId { line: 2, .. })));
        assert!(matches!(
            Dfg::parse("i x\nn t add x\n"),
            Err(DfgError::Arity { expected: 2, found: 1, .. })
        ));
        assert!(matches!(Dfg::parse("q x\n"), Err(DfgError::Syntax { line: 1, .. })));
        assert!(matches!(Dfg::parse("i 3x\n"), Err(DfgError::Syntax { .. })));
        assert!(matches!(Dfg::parse("i x\nn t div x x\n"), Err(DfgError::Syntax { .. })));
        assert!(matches!(
            Dfg::parse("i x\no y x\no z y\n"),
            Err(DfgError::OutputAsOperand { .. })
        ));
    }

    #[test]
    fn self_reference_is_cycle() {
        let err = Dfg::parse("i x\nn t add t x\no y t\n").unwrap_err();
        assert_eq!(err, DfgError::Cycle { witness: "t".into() });
    }

    #[test]
    fn forward_references_allowed() {
        let d = Dfg::parse("o y t\nn t mul x x\ni x\n").unwrap();
        let order: Vec<&str> = d.topological_order().iter().map(|n| n.id.as_str()).collect();
        assert_eq!(order, ["x", "t", "y"]);
        assert_eq!(d.evaluate(&env(&[("x", -7)])).unwrap()["y"], 49);
    }

    #[test]
    fn topological_levels_on_gradient() {
        let d = Dfg::parse(GRADIENT).unwrap();
        let pos: HashMap<&str, usize> = d
            .topological_order()
            .iter()
            .enumerate()
            .map(|(i, n)| (n.id.as_str(), i))
            .collect();
        for n in d.nodes() {
            for &o in &n.operands {
                assert!(pos[d.nodes()[o].id.as_str()] < pos[n.id.as_str()]);
            }
        }
        let lv = d.levels();
        for (n, l) in d.nodes().iter().zip(&lv) {
            let want = match n.kind {
                OpKind::Input => 0,
                OpKind::Sub => 1,
                OpKind::Mul => 2,
                OpKind::Add if n.id == "g" => 4,
                OpKind::Add => 3,
                OpKind::Output => 4,
                OpKind::Bypass => unreachable!(),
            };
            assert_eq!(*l, want, "{}", n.id);
        }
    }

    #[test]
    fn single_node_order() {
        let d = Dfg::parse("i x\n").unwrap();
        assert_eq!(d.topological_order().len(), 1);
    }

    #[test]
    fn gradient_evaluation() {
        let d = Dfg::parse(GRADIENT).unwrap();
        let out = d
            .evaluate(&env(&[("a", 3), ("b", 5), ("c", 2), ("d", 1), ("e", 4)]))
            .unwrap();
        assert_eq!(out["y"], 15);
        let same = d
            .evaluate(&env(&[("a", 8), ("b", 8), ("c", 8), ("d", 8), ("e", 8)]))
            .unwrap();
        assert_eq!(same["y"], 0);
        assert_eq!(
            d.evaluate(&env(&[("a", 1)])),
            Err(DfgError::MissingInput("b".into()))
        );
    }

    #[test]
    fn square_wraps() {
        let d = Dfg::parse("i x\nn t mul x x\no y t\n").unwrap();
        assert_eq!(d.evaluate_vector(&[1 << 16]).unwrap(), vec![0]);
    }

    #[test]
    fn constants_round_trip_and_feed() {
        let text = "i x\nk k_m3 -3\nn t mul x k_m3\no y t\n";
        let d = Dfg::parse(text).unwrap();
        assert_eq!(d.render(), text);
        assert_eq!(d.free_inputs().len(), 1);
        assert_eq!(d.evaluate_vector(&[5]).unwrap(), vec![-15]);
    }

    #[test]
    fn comments_and_blank_lines() {
        let d = Dfg::parse("# header\n\ni x   # trailing\n  o y x\n").unwrap();
        assert_eq!(d.render(), "i x\no y x\n");
    }

    #[test]
    fn parallelism_truncates() {
        let s = DfgStats {
            input_count: 3,
            output_count: 1,
            edge_count: 0,
            op_nodes: 13,
            graph_depth: 6,
        };
        assert_eq!(s.avg_parallelism_display(), "2.16");
        let s = DfgStats { op_nodes: 32, graph_depth: 11, ..s };
        assert_eq!(s.avg_parallelism_display(), "2.90");
    }
}
