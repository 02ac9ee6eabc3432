// SPDX-License-Identifier: Apache-2.0

//! FU instruction set and the tagged configuration stream.
//!
//! Instruction word (32 bits):
//!
//! | bits    | field                         |
//! |---------|-------------------------------|
//! | 31..25  | opmode (7)                    |
//! | 24..21  | alumode (4)                   |
//! | 20..16  | inmode (5)                    |
//! | 15..11  | flags (5)                     |
//! | 10..6   | source A register             |
//! | 5..1    | source B register             |
//! | 0       | reserved, always 0            |
//!
//! Bits 31..11 form the 21-bit DSP configuration. Only four configurations
//! exist. Source A is routed to the C port (Z mux) and source B to A:B (X mux)
//! or the multiplier, so `ALUMODE = 0011` (`Z - (X + Y)`) yields `A - B`.
//!
//! | op     | opmode    | alumode | inmode | flags |
//! |--------|-----------|---------|--------|-------|
//! | Add    | 011_00_11 | 0000    | 00000  | 00000 |
//! | Sub    | 011_00_11 | 0011    | 00000  | 00000 |
//! | Mul    | 000_01_01 | 0000    | 10001  | 00000 |
//! | Bypass | 011_00_00 | 0000    | 00000  | 00000 |
//!
//! A context word (40 bits) is an 8-bit FU tag above the instruction.
//!
//! Context file layout (all integers big-endian):
//!
//! ```text
//! "OVL1" | version u8 = 1 | fu_count u8 | word_count u16
//! word_count x (tag u8, instruction u32)
//! sidecar_len u32 | sidecar (UTF-8 `key = value` lines)
//! ```

use std::fmt;

use thiserror::Error;

use crate::dfg::{OpKind, Word};
use crate::scheduler::{compute_ii, FuInstr, FuProgram, OutputSlot, Schedule, StreamInput, FU_DEPTH};

pub const MAGIC: &[u8; 4] = b"OVL1";
pub const VERSION: u8 = 1;
pub const CONTEXT_WORD_BYTES: usize = 5;
const HEADER_BYTES: usize = 8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IsaError {
    #[error("register address {0} out of range (0..32)")]
    AddressRange(u8),
    #[error("{0:?} is not an FU instruction")]
    NotAnInstruction(OpKind),
    #[error("unknown DSP configuration {0:#08x}")]
    UnknownConfig(u32),
    #[error("reserved bit set in instruction {0:#010x}")]
    ReservedBit(u32),
    #[error("context word {0:#x} wider than 40 bits")]
    WordRange(u64),
    #[error("schedule has no FUs")]
    NoFus,
    #[error("FU{fu} holds {count} instructions, instruction memory holds {FU_DEPTH}")]
    ImOverflow { fu: usize, count: usize },
    #[error("{0} FUs exceed the 8-bit tag space")]
    TooManyFus(usize),
    #[error("{0} context words exceed the 16-bit word count")]
    TooManyWords(usize),
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported context version {0}")]
    Version(u8),
    #[error("truncated context stream: need {need} bytes, have {have}")]
    Truncated { need: usize, have: usize },
    #[error("{0} trailing bytes after context image")]
    Trailing(usize),
    #[error("context word {index} has tag {tag}, chain has {fu_count} FUs")]
    TagRange { index: usize, tag: u8, fu_count: usize },
    #[error("context words out of FU order at word {0}")]
    TagOrder(usize),
    #[error("sidecar: {0}")]
    Sidecar(String),
}

/// The 21-bit DSP configuration field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AluConfig {
    pub opmode: u8,
    pub alumode: u8,
    pub inmode: u8,
    pub flags: u8,
}

impl AluConfig {
    // Opmode digits grouped as the Z, Y and X multiplexer selects.
    #[allow(clippy::unusual_byte_groupings)]
    pub const ADD: AluConfig = AluConfig::new(0b011_00_11, 0b0000, 0b00000, 0);
    #[allow(clippy::unusual_byte_groupings)]
    pub const SUB: AluConfig = AluConfig::new(0b011_00_11, 0b0011, 0b00000, 0);
    #[allow(clippy::unusual_byte_groupings)]
    pub const MUL: AluConfig = AluConfig::new(0b000_01_01, 0b0000, 0b10001, 0);
    #[allow(clippy::unusual_byte_groupings)]
    pub const BYPASS: AluConfig = AluConfig::new(0b011_00_00, 0b0000, 0b00000, 0);

    const fn new(opmode: u8, alumode: u8, inmode: u8, flags: u8) -> Self {
        AluConfig { opmode, alumode, inmode, flags }
    }

    pub fn for_op(op: OpKind) -> Result<Self, IsaError> {
        Ok(match op {
            OpKind::Add => Self::ADD,
            OpKind::Sub => Self::SUB,
            OpKind::Mul => Self::MUL,
            OpKind::Bypass => Self::BYPASS,
            other => return Err(IsaError::NotAnInstruction(other)),
        })
    }

    pub fn op(self) -> Option<OpKind> {
        [
            (Self::ADD, OpKind::Add),
            (Self::SUB, OpKind::Sub),
            (Self::MUL, OpKind::Mul),
            (Self::BYPASS, OpKind::Bypass),
        ]
        .into_iter()
        .find_map(|(c, op)| (c == self).then_some(op))
    }

    pub fn bits(self) -> u32 {
        (self.opmode as u32 & 0x7f) << 14
            | (self.alumode as u32 & 0xf) << 10
            | (self.inmode as u32 & 0x1f) << 5
            | (self.flags as u32 & 0x1f)
    }

    pub fn from_bits(bits: u32) -> Self {
        AluConfig {
            opmode: (bits >> 14 & 0x7f) as u8,
            alumode: (bits >> 10 & 0xf) as u8,
            inmode: (bits >> 5 & 0x1f) as u8,
            flags: (bits & 0x1f) as u8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Instruction(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Decoded {
    pub op: OpKind,
    pub src_a: u8,
    pub src_b: u8,
}

fn check_addr(a: u8) -> Result<u8, IsaError> {
    if (a as usize) < FU_DEPTH {
        Ok(a)
    } else {
        Err(IsaError::AddressRange(a))
    }
}

/// Field-faithful: `src_b` is stored as given even for `Bypass`, where the
/// hardware ignores it. The compiler emits bypasses with `src_b == src_a`.
pub fn encode_instruction(op: OpKind, src_a: u8, src_b: u8) -> Result<Instruction, IsaError> {
    let cfg = AluConfig::for_op(op)?;
    let (a, b) = (check_addr(src_a)?, check_addr(src_b)?);
    Ok(Instruction(cfg.bits() << 11 | (a as u32) << 6 | (b as u32) << 1))
}

pub fn decode_instruction(word: Instruction) -> Result<Decoded, IsaError> {
    let w = word.0;
    if w & 1 != 0 {
        return Err(IsaError::ReservedBit(w));
    }
    let cfg_bits = w >> 11;
    let op = AluConfig::from_bits(cfg_bits)
        .op()
        .ok_or(IsaError::UnknownConfig(cfg_bits))?;
    Ok(Decoded {
        op,
        src_a: (w >> 6 & 0x1f) as u8,
        src_b: (w >> 1 & 0x1f) as u8,
    })
}

impl Instruction {
    pub fn encode(i: &FuInstr) -> Result<Self, IsaError> {
        encode_instruction(i.op, i.src_a, i.src_b)
    }

    pub fn decode(self) -> Result<FuInstr, IsaError> {
        let d = decode_instruction(self)?;
        Ok(FuInstr { op: d.op, src_a: d.src_a, src_b: d.src_b })
    }
}

/// 40-bit configuration word: `tag << 32 | instruction`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ContextWord(u64);

impl ContextWord {
    pub fn new(tag: u8, instr: Instruction) -> Self {
        ContextWord((tag as u64) << 32 | instr.0 as u64)
    }

    pub fn from_raw(raw: u64) -> Result<Self, IsaError> {
        if raw >> 40 != 0 {
            return Err(IsaError::WordRange(raw));
        }
        Ok(ContextWord(raw))
    }

    pub fn raw(self) -> u64 {
        self.0
    }

    pub fn tag(self) -> u8 {
        (self.0 >> 32) as u8
    }

    pub fn instruction(self) -> Instruction {
        Instruction(self.0 as u32)
    }

    pub fn to_bytes(self) -> [u8; CONTEXT_WORD_BYTES] {
        let b = self.0.to_be_bytes();
        [b[3], b[4], b[5], b[6], b[7]]
    }

    pub fn from_bytes(b: [u8; CONTEXT_WORD_BYTES]) -> Self {
        ContextWord(u64::from_be_bytes([0, 0, 0, b[0], b[1], b[2], b[3], b[4]]))
    }
}

impl fmt::Display for ContextWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#012x}", self.0)
    }
}

/// Host-side facts about an image that the words alone do not carry.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ImageMeta {
    pub input_order: Vec<StreamInput>,
    pub output_order: Vec<OutputSlot>,
    pub expected_loads: Vec<usize>,
    pub ii: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextImage {
    pub fu_count: u8,
    pub words: Vec<ContextWord>,
    pub meta: ImageMeta,
}

pub fn context_bytes(word_count: usize) -> usize {
    word_count * CONTEXT_WORD_BYTES
}

/// Words ordered FU0 first, each tagged with its FU index.
pub fn build_context(schedule: &Schedule) -> Result<ContextImage, IsaError> {
    let n = schedule.fu_programs.len();
    if n == 0 {
        return Err(IsaError::NoFus);
    }
    let fu_count = u8::try_from(n).map_err(|_| IsaError::TooManyFus(n))?;
    let mut words = Vec::with_capacity(schedule.word_count());
    for p in &schedule.fu_programs {
        if p.instrs.len() > FU_DEPTH {
            return Err(IsaError::ImOverflow { fu: p.fu_index, count: p.instrs.len() });
        }
        for i in &p.instrs {
            words.push(ContextWord::new(p.fu_index as u8, Instruction::encode(i)?));
        }
    }
    if words.len() > u16::MAX as usize {
        return Err(IsaError::TooManyWords(words.len()));
    }
    Ok(ContextImage {
        fu_count,
        words,
        meta: ImageMeta {
            input_order: schedule.input_order.clone(),
            output_order: schedule.output_order.clone(),
            expected_loads: schedule.fu_programs.iter().map(|p| p.expected_loads).collect(),
            ii: schedule.ii,
        },
    })
}

impl ContextImage {
    pub fn word_count(&self) -> usize {
        self.words.len()
    }

    pub fn payload_bytes(&self) -> usize {
        context_bytes(self.words.len())
    }

    /// Decodes and regroups the words by tag.
    pub fn programs(&self) -> Result<Vec<Vec<FuInstr>>, IsaError> {
        let mut progs = vec![Vec::new(); self.fu_count as usize];
        for (index, w) in self.words.iter().enumerate() {
            let slot = progs.get_mut(w.tag() as usize).ok_or(IsaError::TagRange {
                index,
                tag: w.tag(),
                fu_count: self.fu_count as usize,
            })?;
            slot.push(w.instruction().decode()?);
        }
        Ok(progs)
    }

    /// Rebuilds the schedule the image was generated from.
    pub fn to_schedule(&self) -> Result<Schedule, IsaError> {
        let progs = self.programs()?;
        if self.meta.expected_loads.len() != progs.len() {
            return Err(IsaError::Sidecar(format!(
                "{} load counts for {} FUs",
                self.meta.expected_loads.len(),
                progs.len()
            )));
        }
        let fu_programs = progs
            .into_iter()
            .zip(&self.meta.expected_loads)
            .enumerate()
            .map(|(fu_index, (instrs, &expected_loads))| FuProgram { fu_index, instrs, expected_loads })
            .collect();
        let mut s = Schedule {
            fu_programs,
            ii: 0,
            input_order: self.meta.input_order.clone(),
            output_order: self.meta.output_order.clone(),
        };
        s.ii = compute_ii(&s);
        if s.ii != self.meta.ii {
            return Err(IsaError::Sidecar(format!("ii {} but programs give {}", self.meta.ii, s.ii)));
        }
        Ok(s)
    }

    /// One line per word: `FU<k>: <OP> R<a> R<b> [raw=0x..........]`.
    pub fn disassemble(&self) -> Result<String, IsaError> {
        let mut out = String::new();
        for w in &self.words {
            let d = decode_instruction(w.instruction())?;
            let name = match d.op {
                OpKind::Add => "ADD",
                OpKind::Sub => "SUB",
                OpKind::Mul => "MUL",
                _ => "BYP",
            };
            out.push_str(&format!(
                "FU{}: {} R{} R{} [raw=0x{:010x}]\n",
                w.tag(),
                name,
                d.src_a,
                d.src_b,
                w.raw()
            ));
        }
        Ok(out)
    }

    pub fn serialize(&self) -> Vec<u8> {
        let sidecar = render_sidecar(&self.meta);
        let mut out = Vec::with_capacity(HEADER_BYTES + self.payload_bytes() + 4 + sidecar.len());
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.push(self.fu_count);
        out.extend_from_slice(&(self.words.len() as u16).to_be_bytes());
        for w in &self.words {
            out.extend_from_slice(&w.to_bytes());
        }
        out.extend_from_slice(&(sidecar.len() as u32).to_be_bytes());
        out.extend_from_slice(sidecar.as_bytes());
        out
    }

    pub fn deserialize(bytes: &[u8]) -> Result<ContextImage, IsaError> {
        let need = |n: usize| {
            if bytes.len() < n {
                Err(IsaError::Truncated { need: n, have: bytes.len() })
            } else {
                Ok(())
            }
        };
        need(4)?;
        if &bytes[..4] != MAGIC {
            return Err(IsaError::BadMagic(bytes[..4].try_into().unwrap()));
        }
        need(HEADER_BYTES)?;
        if bytes[4] != VERSION {
            return Err(IsaError::Version(bytes[4]));
        }
        let fu_count = bytes[5];
        let word_count = u16::from_be_bytes([bytes[6], bytes[7]]) as usize;
        let words_end = HEADER_BYTES + context_bytes(word_count);
        need(words_end + 4)?;
        let mut words = Vec::with_capacity(word_count);
        let mut per_fu = vec![0usize; fu_count as usize];
        for (index, chunk) in bytes[HEADER_BYTES..words_end].chunks_exact(CONTEXT_WORD_BYTES).enumerate() {
            let w = ContextWord::from_bytes(chunk.try_into().unwrap());
            if w.tag() >= fu_count {
                return Err(IsaError::TagRange { index, tag: w.tag(), fu_count: fu_count as usize });
            }
            if words.last().is_some_and(|p: &ContextWord| p.tag() > w.tag()) {
                return Err(IsaError::TagOrder(index));
            }
            per_fu[w.tag() as usize] += 1;
            if per_fu[w.tag() as usize] > FU_DEPTH {
                return Err(IsaError::ImOverflow { fu: w.tag() as usize, count: per_fu[w.tag() as usize] });
            }
            words.push(w);
        }
        let len = u32::from_be_bytes(bytes[words_end..words_end + 4].try_into().unwrap()) as usize;
        let end = words_end + 4 + len;
        need(end)?;
        if bytes.len() > end {
            return Err(IsaError::Trailing(bytes.len() - end));
        }
        let text = std::str::from_utf8(&bytes[words_end + 4..end])
            .map_err(|e| IsaError::Sidecar(e.to_string()))?;
        Ok(ContextImage {
            fu_count,
            words,
            meta: parse_sidecar(text)?,
        })
    }
}

fn render_sidecar(meta: &ImageMeta) -> String {
    let mut s = format!("ii = {}\n", meta.ii);
    for i in &meta.input_order {
        match i.constant {
            Some(v) => s.push_str(&format!("constant = {} {}\n", i.id, v)),
            None => s.push_str(&format!("input = {}\n", i.id)),
        }
    }
    for o in &meta.output_order {
        s.push_str(&format!("output = {} {}\n", o.id, o.slot));
    }
    let loads: Vec<String> = meta.expected_loads.iter().map(usize::to_string).collect();
    s.push_str(&format!("loads = {}\n", loads.join(" ")));
    s
}

fn parse_sidecar(text: &str) -> Result<ImageMeta, IsaError> {
    let mut meta = ImageMeta::default();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let bad = || IsaError::Sidecar(format!("bad line `{line}`"));
        let (key, value) = line.split_once('=').ok_or_else(bad)?;
        let words: Vec<&str> = value.split_whitespace().collect();
        match (key.trim(), words.as_slice()) {
            ("ii", [v]) => meta.ii = v.parse().map_err(|_| bad())?,
            ("input", [id]) => meta.input_order.push(StreamInput { id: id.to_string(), constant: None }),
            ("constant", [id, v]) => meta.input_order.push(StreamInput {
                id: id.to_string(),
                constant: Some(v.parse::<Word>().map_err(|_| bad())?),
            }),
            ("output", [id, slot]) => meta.output_order.push(OutputSlot {
                id: id.to_string(),
                slot: slot.parse().map_err(|_| bad())?,
            }),
            ("loads", loads) => {
                meta.expected_loads = loads.iter().map(|l| l.parse().map_err(|_| bad())).collect::<Result<_, _>>()?
            }
            _ => return Err(bad()),
        }
    }
    Ok(meta)
}
