// SPDX-License-Identifier: Apache-2.0

//! Cycle-stepped model of the FU chain.
//!
//! Each FU loops through three phases. While `Loading` it accepts one word
//! per cycle into its register file at the data counter. The cycle after the
//! last expected word it switches to `Executing` and issues one instruction
//! per cycle. Each result is written into the next FU's register file (or the
//! output FIFO) two cycles after issue. After the last issue the FU spends two
//! cycles `Flushing` and then accepts loads again.
//!
//! FU0 reads the input FIFO and holds it back (back-pressure) outside its
//! load window. The window is placed so that FU0's first issues are exactly
//! `ii` cycles apart, which paces every downstream FU to the same period.
//! Downstream transfers have no flow control: a word arriving at an FU that
//! is not loading is a schedule bug and aborts the simulation.

use std::collections::VecDeque;

use thiserror::Error;

use crate::dfg::Word;
use crate::isa::{ContextImage, Instruction, IsaError};
use crate::scheduler::{StreamInput, FLUSH_CYCLES, FU_DEPTH};
use crate::trace::{Action, TraceEvent};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error(transparent)]
    Isa(#[from] IsaError),
    #[error("context word {index} tagged for FU{tag}, chain has {fu_count} FUs")]
    TagRange { index: usize, tag: usize, fu_count: usize },
    #[error("image declares {declared} load counts for {fu_count} FUs")]
    LoadCounts { declared: usize, fu_count: usize },
    #[error("image declares ii {declared}, programs give {computed}")]
    IiMismatch { declared: u64, computed: u64 },
    #[error("cycle {cycle}: FU{fu} received a word while {phase:?} (schedule contract violated)")]
    Contract { cycle: u64, fu: usize, phase: Phase },
    #[error("input vector {index} has {found} values, kernel takes {expected}")]
    InputArity { index: usize, expected: usize, found: usize },
    #[error("{iterations} iterations requested but only {available} input vectors given")]
    InputUnderrun { iterations: usize, available: usize },
    #[error("no completion after {0} cycles")]
    Timeout(u64),
}

impl SimError {
    /// Contract violations point at a compiler bug rather than bad input.
    pub fn is_internal(&self) -> bool {
        matches!(self, SimError::Contract { .. } | SimError::Timeout(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Loading,
    Executing,
    Flushing,
}

#[derive(Debug, Clone)]
pub struct FuState {
    pub im: Vec<Instruction>,
    pub ic: usize,
    pub rf: [Word; FU_DEPTH],
    pub dc: usize,
    pub pc: usize,
    pub phase: Phase,
    pub expected_loads: usize,
    /// Last cycle of the current flush.
    flush_until: u64,
    /// Results in flight; slot 0 is this cycle's issue, slot 2 is delivered.
    alu_pipe: [Option<Word>; 3],
}

impl FuState {
    fn new(expected_loads: usize) -> Self {
        FuState {
            im: Vec::new(),
            ic: 0,
            rf: [0; FU_DEPTH],
            dc: 0,
            pc: 0,
            phase: Phase::Loading,
            expected_loads,
            flush_until: 0,
            alu_pipe: [None; 3],
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineState {
    fus: Vec<FuState>,
    in_fifo: VecDeque<Word>,
    out_fifo: VecDeque<Word>,
    /// Last completed cycle; 0 before the first step.
    cycle: u64,
    backpressure: bool,
    input_closed: bool,
    ii: u64,
    /// Earliest cycle FU0 may issue its next round.
    next_issue_at: u64,
    output_slots: Vec<usize>,
    pending_words: Vec<Word>,
    completions: Vec<(u64, Vec<Word>)>,
}

/// Loads an image into a fresh chain. Returns the state and the number of
/// configuration cycles (one per context word).
pub fn configure(img: &ContextImage) -> Result<(PipelineState, u64), SimError> {
    let fu_count = img.fu_count as usize;
    if img.meta.expected_loads.len() != fu_count {
        return Err(SimError::LoadCounts {
            declared: img.meta.expected_loads.len(),
            fu_count,
        });
    }
    if fu_count == 0 {
        return Err(IsaError::NoFus.into());
    }
    let mut fus: Vec<FuState> = img.meta.expected_loads.iter().map(|&l| FuState::new(l)).collect();
    for (index, w) in img.words.iter().enumerate() {
        let fu = fus.get_mut(w.tag() as usize).ok_or(SimError::TagRange {
            index,
            tag: w.tag() as usize,
            fu_count,
        })?;
        if fu.ic == FU_DEPTH {
            return Err(IsaError::ImOverflow { fu: w.tag() as usize, count: FU_DEPTH + 1 }.into());
        }
        let instr = w.instruction();
        instr.decode()?;
        fu.im.push(instr);
        fu.ic += 1;
    }
    for (k, fu) in fus.iter().enumerate() {
        if fu.ic == 0 {
            return Err(IsaError::Sidecar(format!("FU{k} has no instructions")).into());
        }
        if fu.expected_loads > FU_DEPTH {
            return Err(IsaError::Sidecar(format!("FU{k} expects {} loads", fu.expected_loads)).into());
        }
    }
    let computed = fus
        .iter()
        .map(|f| (f.expected_loads + f.ic) as u64 + FLUSH_CYCLES)
        .max()
        .unwrap_or(0);
    if computed != img.meta.ii {
        return Err(SimError::IiMismatch { declared: img.meta.ii, computed });
    }
    let last_ic = fus[fu_count - 1].ic;
    if let Some(o) = img.meta.output_order.iter().find(|o| o.slot >= last_ic) {
        return Err(IsaError::Sidecar(format!("output `{}` reads slot {} of {}", o.id, o.slot, last_ic)).into());
    }
    let state = PipelineState {
        fus,
        in_fifo: VecDeque::new(),
        out_fifo: VecDeque::new(),
        cycle: 0,
        backpressure: false,
        input_closed: false,
        ii: computed,
        next_issue_at: 0,
        output_slots: img.meta.output_order.iter().map(|o| o.slot).collect(),
        pending_words: Vec::new(),
        completions: Vec::new(),
    };
    Ok((state, img.word_count() as u64))
}

impl PipelineState {
    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn ii(&self) -> u64 {
        self.ii
    }

    pub fn fus(&self) -> &[FuState] {
        &self.fus
    }

    pub fn backpressure(&self) -> bool {
        self.backpressure
    }

    pub fn out_fifo(&self) -> &VecDeque<Word> {
        &self.out_fifo
    }

    pub fn in_fifo_len(&self) -> usize {
        self.in_fifo.len()
    }

    pub fn push_input(&mut self, word: Word) {
        self.in_fifo.push_back(word);
    }

    /// Marks the end of the input stream; an empty FIFO then stops counting as a stall.
    pub fn close_input(&mut self) {
        self.input_closed = true;
    }

    /// `(cycle, outputs)` for each iteration whose last result reached the output FIFO.
    pub fn completions(&self) -> &[(u64, Vec<Word>)] {
        &self.completions
    }

    fn fu0_window_open(&self, t: u64) -> bool {
        let fu0 = &self.fus[0];
        t + fu0.expected_loads as u64 >= self.next_issue_at
    }

    /// Advances one clock cycle.
    pub fn step(&mut self) -> Result<Vec<TraceEvent>, SimError> {
        let t = self.cycle + 1;
        let last = self.fus.len() - 1;
        let mut events = Vec::new();
        let ev = |fu: usize, action: Action, value: Option<Word>| TraceEvent { cycle: t, fu, action, value };

        for k in 0..self.fus.len() {
            let fu0_ready = k != 0 || t >= self.next_issue_at;
            let fu = &mut self.fus[k];
            match fu.phase {
                Phase::Flushing if t > fu.flush_until => {
                    fu.phase = Phase::Loading;
                    fu.dc = 0;
                }
                Phase::Loading if fu.dc == fu.expected_loads && fu0_ready => {
                    fu.phase = Phase::Executing;
                    fu.pc = 0;
                }
                _ => {}
            }
        }

        for k in 0..self.fus.len() {
            let pipe = &mut self.fus[k].alu_pipe;
            pipe[2] = pipe[1];
            pipe[1] = pipe[0];
            pipe[0] = None;
            let Some(v) = pipe[2].take() else { continue };
            if k == last {
                self.out_fifo.push_back(v);
                events.push(ev(k, Action::Emit, Some(v)));
                self.pending_words.push(v);
                if self.pending_words.len() == self.fus[last].ic {
                    let words = std::mem::take(&mut self.pending_words);
                    let outs = self.output_slots.iter().map(|&s| words[s]).collect();
                    self.completions.push((t, outs));
                }
            } else {
                let next = &mut self.fus[k + 1];
                if next.phase != Phase::Loading || next.dc >= next.expected_loads {
                    return Err(SimError::Contract { cycle: t, fu: k + 1, phase: next.phase });
                }
                next.rf[next.dc] = v;
                events.push(ev(k + 1, Action::Load(next.dc as u8), Some(v)));
                next.dc += 1;
            }
        }

        let window = self.fu0_window_open(t);
        let fu0 = &mut self.fus[0];
        let accepting = fu0.phase == Phase::Loading && fu0.dc < fu0.expected_loads && window;
        self.backpressure = !accepting;
        if accepting {
            if let Some(v) = self.in_fifo.pop_front() {
                fu0.rf[fu0.dc] = v;
                events.push(ev(0, Action::Load(fu0.dc as u8), Some(v)));
                fu0.dc += 1;
            } else if !self.input_closed {
                events.push(ev(0, Action::Stall, None));
            }
        }

        for k in 0..self.fus.len() {
            let fu = &mut self.fus[k];
            if fu.phase != Phase::Executing {
                continue;
            }
            let ins = fu.im[fu.pc].decode().expect("validated at configure");
            let v = ins.op.apply(fu.rf[ins.src_a as usize], fu.rf[ins.src_b as usize]);
            fu.alu_pipe[0] = Some(v);
            events.push(ev(k, Action::Issue { op: ins.op, a: ins.src_a, b: ins.src_b }, Some(v)));
            if k == 0 && fu.pc == 0 {
                self.next_issue_at = t + self.ii;
            }
            fu.pc += 1;
            if fu.pc == fu.ic {
                fu.phase = Phase::Flushing;
                fu.flush_until = t + FLUSH_CYCLES;
            }
        }

        events.sort_by_key(|e| (e.fu, !e.is_table_cell()));
        self.cycle = t;
        Ok(events)
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    /// One vector per iteration, in output order.
    pub outputs: Vec<Vec<Word>>,
    pub trace: Vec<TraceEvent>,
    /// Cycle at which each iteration's last result reached the output FIFO.
    pub completion_cycles: Vec<u64>,
    pub config_cycles: u64,
    /// Distance between the last two completions (steady state); `None` for fewer than two.
    pub measured_period: Option<u64>,
}

/// Expands caller inputs into the FU0 stream, inserting literal constants.
pub fn stream_words(order: &[StreamInput], values: &[Word]) -> Vec<Word> {
    let mut free = values.iter();
    order
        .iter()
        .map(|i| i.constant.unwrap_or_else(|| *free.next().expect("arity checked")))
        .collect()
}

/// Configures the chain and streams `iterations` input vectors through it.
/// Vectors hold the non-constant inputs in stream order.
pub fn run(img: &ContextImage, inputs: &[Vec<Word>], iterations: usize) -> Result<RunResult, SimError> {
    let (mut state, config_cycles) = configure(img)?;
    if inputs.len() < iterations {
        return Err(SimError::InputUnderrun { iterations, available: inputs.len() });
    }
    let order = &img.meta.input_order;
    let arity = order.iter().filter(|i| i.constant.is_none()).count();
    for (index, v) in inputs.iter().take(iterations).enumerate() {
        if v.len() != arity {
            return Err(SimError::InputArity { index, expected: arity, found: v.len() });
        }
        for w in stream_words(order, v) {
            state.push_input(w);
        }
    }
    state.close_input();

    let fill: u64 = state.fus.iter().map(|f| (f.expected_loads + f.ic) as u64 + 4).sum();
    let limit = fill + (iterations as u64 + 1) * state.ii;
    let mut trace = Vec::new();
    while state.completions.len() < iterations {
        if state.cycle >= limit {
            return Err(SimError::Timeout(state.cycle));
        }
        trace.extend(state.step()?);
    }
    let completion_cycles: Vec<u64> = state.completions.iter().map(|c| c.0).collect();
    let measured_period = match completion_cycles.as_slice() {
        [.., a, b] => Some(b - a),
        _ => None,
    };
    Ok(RunResult {
        outputs: state.completions.into_iter().map(|c| c.1).collect(),
        trace,
        completion_cycles,
        config_cycles,
        measured_period,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dfg::Dfg;
    use crate::isa::build_context;
    use crate::scheduler::schedule_dfg;

    fn image(text: &str) -> ContextImage {
        build_context(&schedule_dfg(&Dfg::parse(text).unwrap()).unwrap()).unwrap()
    }

    fn gradient() -> ContextImage {
        image(include_str!("../data/gradient.dfg"))
    }

    fn at(trace: &[TraceEvent], cycle: u64, fu: usize) -> Vec<Action> {
        trace.iter().filter(|e| e.cycle == cycle && e.fu == fu).map(|e| e.action).collect()
    }

    #[test]
    fn gradient_value() {
        let r = run(&gradient(), &[vec![3, 5, 2, 1, 4]], 1).unwrap();
        assert_eq!(r.outputs, vec![vec![15]]);
        assert_eq!(r.config_cycles, 11);
        assert_eq!(r.measured_period, None);
    }

    #[test]
    fn gradient_timing_landmarks() {
        use crate::dfg::OpKind::*;
        let vecs = vec![vec![1, 2, 3, 4, 5]; 3];
        let r = run(&gradient(), &vecs, 3).unwrap();
        for c in 1..=5 {
            assert_eq!(at(&r.trace, c, 0), [Action::Load(c as u8 - 1)]);
        }
        assert_eq!(at(&r.trace, 6, 0), [Action::Issue { op: Sub, a: 0, b: 2 }]);
        assert_eq!(at(&r.trace, 8, 1), [Action::Load(0)]);
        assert_eq!(at(&r.trace, 22, 3), [Action::Issue { op: Add, a: 0, b: 1 }]);
        assert_eq!(at(&r.trace, 24, 3), [Action::Emit]);
        assert_eq!(r.completion_cycles, [24, 35, 46]);
        assert_eq!(r.measured_period, Some(11));
    }

    #[test]
    fn backpressure_window() {
        let (mut st, _) = configure(&gradient()).unwrap();
        for w in 0..20 {
            st.push_input(w);
        }
        let mut asserted = Vec::new();
        for _ in 0..16 {
            st.step().unwrap();
            if st.backpressure() {
                asserted.push(st.cycle());
            }
        }
        assert_eq!(asserted, [6, 7, 8, 9, 10, 11]);
    }

    #[test]
    fn stall_without_input() {
        let (mut st, _) = configure(&gradient()).unwrap();
        st.push_input(1);
        let _ = st.step().unwrap();
        let ev = st.step().unwrap();
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].action, Action::Stall);
        st.close_input();
        assert!(st.step().unwrap().is_empty());
    }

    #[test]
    fn all_zero_inputs() {
        let r = run(&gradient(), &[vec![0; 5]], 1).unwrap();
        assert_eq!(r.outputs, vec![vec![0]]);
    }

    #[test]
    fn paced_when_downstream_is_bottleneck() {
        // FU0: 1 load, 1 op (4 cycles); FU1: 1 load, 3 ops (6 cycles)
        let img = image("i x\nn a add x x\nn p mul a a\nn q sub a a\nn r add a a\no y1 p\no y2 q\no y3 r\n");
        assert_eq!(img.meta.ii, 6);
        let vecs: Vec<Vec<Word>> = (1..=5).map(|i| vec![i]).collect();
        let r = run(&img, &vecs, 5).unwrap();
        assert_eq!(r.measured_period, Some(6));
        assert!(r.completion_cycles.windows(2).all(|w| w[1] - w[0] == 6));
        assert_eq!(r.outputs[2], vec![36, 0, 12]);
    }

    #[test]
    fn constants_are_streamed() {
        let img = image("i x\nk k5 5\nn t mul x k5\no y t\n");
        let r = run(&img, &[vec![7], vec![-3]], 2).unwrap();
        assert_eq!(r.outputs, vec![vec![35], vec![-15]]);
    }

    #[test]
    fn run_errors() {
        let img = gradient();
        assert_eq!(
            run(&img, &[vec![1, 2, 3, 4]], 1).unwrap_err(),
            SimError::InputArity { index: 0, expected: 5, found: 4 }
        );
        assert_eq!(
            run(&img, &[vec![0; 5]], 2).unwrap_err(),
            SimError::InputUnderrun { iterations: 2, available: 1 }
        );
    }

    #[test]
    fn configure_checks() {
        let mut img = gradient();
        assert_eq!(configure(&img).unwrap().1, 11);
        let st = configure(&img).unwrap().0;
        assert_eq!(st.fus().iter().map(|f| f.ic).collect::<Vec<_>>(), [4, 4, 2, 1]);
        img.meta.ii = 12;
        assert!(matches!(configure(&img), Err(SimError::IiMismatch { .. })));
        let mut img = gradient();
        img.fu_count = 3;
        img.meta.expected_loads.pop();
        assert!(matches!(configure(&img), Err(SimError::TagRange { tag: 3, .. })));
    }

    #[test]
    fn contract_violation_is_loud() {
        // hand-made image whose FU1 needs more time than the declared pacing allows
        let img = image("i x\nn a add x x\nn p mul a a\nn q sub a a\nn r add a a\no y1 p\no y2 q\no y3 r\n");
        let (mut st, _) = configure(&img).unwrap();
        st.ii = 4;
        for w in 0..8 {
            st.push_input(w);
        }
        let err = (0..40).map(|_| st.step()).find_map(Result::err).unwrap();
        assert!(matches!(err, SimError::Contract { fu: 1, .. }));
        assert!(err.is_internal());
    }
}
