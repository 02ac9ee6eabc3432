// SPDX-License-Identifier: Apache-2.0

//! Seeded generators for random DFGs and kernels, used by the property and
//! acceptance suites.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dfg::{Dfg, DfgBuilder, OpKind, Word};
use crate::isa::{ContextImage, ContextWord, ImageMeta, Instruction};
use crate::frontend::{Assignment, BinOp, Expr, KernelProgram, Pos};
use crate::scheduler::{schedule_dfg, FuInstr, OutputSlot, Schedule, StreamInput, FU_DEPTH};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy)]
pub struct DfgShape {
    pub max_depth: usize,
    pub max_width: usize,
    pub max_inputs: usize,
    /// Probability that an operand is drawn from any earlier level rather
    /// than the level directly above; long edges create bypass chains.
    pub long_edge: f64,
}

impl Default for DfgShape {
    fn default() -> Self {
        DfgShape {
            max_depth: 16,
            max_width: 8,
            max_inputs: 8,
            long_edge: 0.3,
        }
    }
}

const OPS: [OpKind; 3] = [OpKind::Add, OpKind::Sub, OpKind::Mul];

/// A random feed-forward DFG. Every arithmetic node feeds some output, and
/// one operand of each node comes from the level directly above so levels
/// are exact.
pub fn random_dfg(rng: &mut impl Rng, shape: &DfgShape) -> Dfg {
    let depth = rng.random_range(1..=shape.max_depth);
    let n_inputs = rng.random_range(1..=shape.max_inputs);
    let n_consts = if rng.random_bool(0.2) { rng.random_range(1..=2) } else { 0 };
    let mut b = DfgBuilder::new();
    let mut levels: Vec<Vec<String>> = vec![Vec::new()];
    for i in 0..n_inputs {
        let id = format!("x{i}");
        b.input(&id);
        levels[0].push(id);
    }
    for i in 0..n_consts {
        let id = format!("k{i}");
        b.constant(&id, rng.random_range(-9..=9));
        levels[0].push(id);
    }
    let mut used: std::collections::HashSet<String> = Default::default();
    for l in 1..=depth {
        let width = rng.random_range(1..=shape.max_width);
        let mut here = Vec::with_capacity(width);
        for j in 0..width {
            let id = format!("n{l}_{j}");
            let near = levels[l - 1].choose(rng).unwrap().clone();
            let other = if rng.random_bool(shape.long_edge) {
                let from = rng.random_range(0..l);
                levels[from].choose(rng).unwrap().clone()
            } else if rng.random_bool(0.15) {
                near.clone()
            } else {
                levels[l - 1].choose(rng).unwrap().clone()
            };
            let (a, c) = if rng.random_bool(0.5) { (near, other) } else { (other, near) };
            b.op(&id, *OPS.choose(rng).unwrap(), &a, &c);
            used.insert(a);
            used.insert(c);
            here.push(id);
        }
        levels.push(here);
    }
    let mut n_out = 0;
    for (l, level) in levels.iter().enumerate().skip(1) {
        for id in level {
            if !used.contains(id) || (l < depth && rng.random_bool(0.05)) {
                b.output(&format!("y{n_out}"), id);
                n_out += 1;
            }
        }
    }
    b.build().expect("generator emits valid graphs")
}

/// Draws DFGs until one fits the chain limits, returning it with its schedule.
pub fn random_legal_dfg(rng: &mut impl Rng, shape: &DfgShape) -> (Dfg, Schedule) {
    loop {
        let d = random_dfg(rng, shape);
        if let Ok(s) = schedule_dfg(&d) {
            return (d, s);
        }
    }
}

pub fn random_inputs(rng: &mut impl Rng, n: usize) -> Vec<Word> {
    (0..n)
        .map(|_| match rng.random_range(0..4) {
            0 => rng.random_range(-4..=4),
            1 => *[Word::MIN, Word::MAX, -1, 0, 1 << 16].choose(rng).unwrap(),
            _ => rng.random(),
        })
        .collect()
}

/// A random kernel whose statements reuse earlier subtrees, so lowering
/// has something to share.
pub fn random_kernel(rng: &mut impl Rng) -> KernelProgram {
    let n_free = rng.random_range(1..=5);
    let free: Vec<String> = (0..n_free).map(|i| format!("v{i}")).collect();
    let mut vars = free.clone();
    let mut pool: Vec<Expr> = Vec::new();
    let mut statements = Vec::new();
    for s in 0..rng.random_range(1..=5) {
        let depth = rng.random_range(1..=4);
        let expr = random_expr(rng, &vars, &mut pool, depth);
        let target = format!("t{s}");
        statements.push(Assignment {
            target: target.clone(),
            expr,
            pos: Pos { line: s + 1, col: 1 },
        });
        vars.push(target);
    }
    let mut outputs: Vec<String> = statements
        .iter()
        .filter(|_| rng.random_bool(0.4))
        .map(|s| s.target.clone())
        .collect();
    let last = statements.last().unwrap().target.clone();
    if !outputs.contains(&last) {
        outputs.push(last);
    }
    KernelProgram {
        declared_inputs: if rng.random_bool(0.3) { free } else { Vec::new() },
        statements,
        outputs,
    }
}

fn random_expr(rng: &mut impl Rng, vars: &[String], pool: &mut Vec<Expr>, depth: usize) -> Expr {
    if !pool.is_empty() && rng.random_bool(0.25) {
        return pool.choose(rng).unwrap().clone();
    }
    let e = if depth == 0 || rng.random_bool(0.2) {
        if rng.random_bool(0.15) {
            Expr::Lit(rng.random_range(-20..=20))
        } else {
            Expr::Var(vars.choose(rng).unwrap().clone())
        }
    } else {
        let op = *[BinOp::Add, BinOp::Sub, BinOp::Mul].choose(rng).unwrap();
        let a = random_expr(rng, vars, pool, depth - 1);
        let b = if rng.random_bool(0.2) { a.clone() } else { random_expr(rng, vars, pool, depth - 1) };
        Expr::bin(op, a, b)
    };
    pool.push(e.clone());
    e
}

/// A structurally valid context image with arbitrary words and metadata.
/// It need not describe a runnable pipeline.
pub fn random_image(rng: &mut impl Rng) -> ContextImage {
    let fu_count = rng.random_range(1..=16u8);
    let mut words = Vec::new();
    let mut loads = Vec::new();
    for tag in 0..fu_count {
        for _ in 0..rng.random_range(0..=FU_DEPTH) {
            let i = FuInstr {
                op: *[OpKind::Add, OpKind::Sub, OpKind::Mul, OpKind::Bypass].choose(rng).unwrap(),
                src_a: rng.random_range(0..32),
                src_b: rng.random_range(0..32),
            };
            words.push(ContextWord::new(tag, Instruction::encode(&i).unwrap()));
        }
        loads.push(rng.random_range(0..=FU_DEPTH));
    }
    let input_order = (0..rng.random_range(0..6))
        .map(|i| StreamInput {
            id: format!("in{i}"),
            constant: rng.random_bool(0.3).then(|| rng.random()),
        })
        .collect();
    let output_order = (0..rng.random_range(0..4))
        .map(|i| OutputSlot { id: format!("out{i}"), slot: rng.random_range(0..FU_DEPTH) })
        .collect();
    ContextImage {
        fu_count,
        words,
        meta: ImageMeta { input_order, output_order, expected_loads: loads, ii: rng.random_range(0..100) },
    }
}
