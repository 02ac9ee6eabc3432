// SPDX-License-Identifier: Apache-2.0

//! Analytical performance and area models, plus the published benchmark
//! reference data they are checked against.
//!
//! Throughput is modeled as `op_nodes * f / ii`. Area counts every FU as
//! 81 slices plus one DSP block, a DSP being worth 60 slices.
//! Display rounding follows the published tables: eOPC to one decimal and
//! GOPS to two, both round-half-up.

use std::fmt::Write as _;

use thiserror::Error;

use crate::dfg::DfgStats;
use crate::isa::context_bytes;
use crate::scheduler::Schedule;

pub const REFERENCE_TABLE: &str = include_str!("../data/benchmarks.tsv");
const TABLE_MAGIC: &str = "# tmfu-benchmarks v1";
const COLUMNS: [&str; 15] = [
    "name",
    "inputs",
    "outputs",
    "edges",
    "op_nodes",
    "depth",
    "parallelism",
    "ii",
    "eopc",
    "tput",
    "area",
    "scfu_tput",
    "scfu_area",
    "hls_tput",
    "hls_area",
];

/// FUs per physical pipeline; longer chains cascade pipelines.
pub const FUS_PER_PIPELINE: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("clock frequency must be positive")]
    Clock,
    #[error("replication factor must be at least 1")]
    Replication,
    #[error("initiation interval must be positive")]
    ZeroIi,
    #[error("benchmark table line {line}: {msg}")]
    Schema { line: usize, msg: String },
    #[error("benchmark `{0}` has no reference measurements")]
    MissingReference(String),
    #[error("no benchmark records")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClockConfig {
    pub hz: u64,
}

impl Default for ClockConfig {
    fn default() -> Self {
        ClockConfig { hz: 300_000_000 }
    }
}

impl ClockConfig {
    pub fn from_mhz(mhz: f64) -> Result<Self, MetricsError> {
        if !(mhz.is_finite() && mhz > 0.0) {
            return Err(MetricsError::Clock);
        }
        Ok(ClockConfig { hz: (mhz * 1e6).round() as u64 })
    }

    pub fn mhz(&self) -> f64 {
        self.hz as f64 / 1e6
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AreaModel {
    pub slices_per_fu: u64,
    pub dsp_per_fu: u64,
    pub slices_per_dsp: u64,
}

impl Default for AreaModel {
    fn default() -> Self {
        AreaModel {
            slices_per_fu: 81,
            dsp_per_fu: 1,
            slices_per_dsp: 60,
        }
    }
}

impl AreaModel {
    pub fn eslices_per_fu(&self) -> u64 {
        self.slices_per_fu + self.dsp_per_fu * self.slices_per_dsp
    }
}

/// `num / den` rounded half-up to an integer.
fn round_half_up(num: u128, den: u128) -> u128 {
    (2 * num + den) / (2 * den)
}

fn fixed(scaled: u128, decimals: usize) -> String {
    let unit = 10u128.pow(decimals as u32);
    format!("{}.{:0width$}", scaled / unit, scaled % unit, width = decimals)
}

pub fn eopc(op_nodes: usize, ii: u64) -> f64 {
    op_nodes as f64 / ii as f64
}

pub fn eopc_display(op_nodes: usize, ii: u64) -> String {
    fixed(round_half_up(op_nodes as u128 * 10, ii as u128), 1)
}

pub fn throughput_gops(op_nodes: usize, ii: u64, clock: ClockConfig) -> f64 {
    op_nodes as f64 * clock.hz as f64 / ii as f64 / 1e9
}

pub fn throughput_display(op_nodes: usize, ii: u64, clock: ClockConfig) -> String {
    let num = op_nodes as u128 * clock.hz as u128 * 100;
    fixed(round_half_up(num, ii as u128 * 1_000_000_000), 2)
}

pub fn area_eslices(fu_count: usize, model: AreaModel) -> u64 {
    fu_count as u64 * model.eslices_per_fu()
}

/// Seconds to stream `word_count` context words, one per cycle.
pub fn config_time(word_count: usize, clock: ClockConfig) -> f64 {
    word_count as f64 / clock.hz as f64
}

pub fn pipeline_count(depth: usize) -> usize {
    depth.div_ceil(FUS_PER_PIPELINE)
}

/// Linear scaling over independent replicated pipelines.
pub fn replicated_throughput(base_gops: f64, replication: u32) -> Result<f64, MetricsError> {
    if replication == 0 {
        return Err(MetricsError::Replication);
    }
    Ok(base_gops * replication as f64)
}

/// Million operations per second per e-Slice.
pub fn mops_per_eslice(gops: f64, eslices: f64) -> f64 {
    gops * 1000.0 / eslices
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub tput_gops: f64,
    pub area_eslices: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    /// `1 - ours / theirs` for area.
    pub area_reduction: f64,
    /// `theirs / ours` for throughput.
    pub tput_ratio: f64,
}

pub fn compare(ours: Measurement, theirs: Measurement) -> Comparison {
    Comparison {
        area_reduction: 1.0 - ours.area_eslices / theirs.area_eslices,
        tput_ratio: theirs.tput_gops / ours.tput_gops,
    }
}

/// One row of the shipped benchmark table.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRecord {
    pub name: String,
    pub inputs: usize,
    pub outputs: usize,
    pub edges: usize,
    pub op_nodes: usize,
    pub depth: usize,
    /// Printed columns kept as text so they can be compared verbatim.
    pub parallelism: String,
    pub ii: u64,
    pub eopc: String,
    pub tput: String,
    pub area: u64,
    pub scfu: Option<Measurement>,
    pub hls: Option<Measurement>,
}

impl BenchmarkRecord {
    pub fn overlay(&self) -> Measurement {
        Measurement {
            tput_gops: self.tput.parse().expect("validated on parse"),
            area_eslices: self.area as f64,
        }
    }

    pub fn stats(&self) -> DfgStats {
        DfgStats {
            input_count: self.inputs,
            output_count: self.outputs,
            edge_count: self.edges,
            op_nodes: self.op_nodes,
            graph_depth: self.depth,
        }
    }
}

pub fn reference_benchmarks() -> Vec<BenchmarkRecord> {
    parse_benchmark_table(REFERENCE_TABLE).expect("shipped table is well-formed")
}

/// Tab-separated, versioned. Reference columns may hold `-` when unknown.
pub fn parse_benchmark_table(text: &str) -> Result<Vec<BenchmarkRecord>, MetricsError> {
    let mut lines = text.lines().enumerate();
    let schema = |line: usize, msg: String| MetricsError::Schema { line: line + 1, msg };
    match lines.next() {
        Some((_, l)) if l.trim_end() == TABLE_MAGIC => {}
        _ => return Err(schema(0, format!("first line must be `{TABLE_MAGIC}`"))),
    }
    let mut lines = lines.filter(|(_, l)| !l.starts_with('#') && !l.trim().is_empty());
    let (hl, header) = lines.next().ok_or_else(|| schema(1, "missing header row".into()))?;
    let cols: Vec<&str> = header.split('\t').collect();
    if let Some(missing) = COLUMNS.iter().find(|c| !cols.contains(c)) {
        return Err(schema(hl, format!("missing column `{missing}`")));
    }
    let col = |name: &str| cols.iter().position(|c| *c == name).unwrap();
    let mut out = Vec::new();
    for (ln, line) in lines {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != cols.len() {
            return Err(schema(ln, format!("expected {} fields, found {}", cols.len(), f.len())));
        }
        let get = |name: &str| f[col(name)];
        let int = |name: &str| -> Result<u64, MetricsError> {
            get(name).parse().map_err(|_| schema(ln, format!("`{name}` is not an integer: `{}`", get(name))))
        };
        let real = |name: &str| -> Result<Option<f64>, MetricsError> {
            match get(name) {
                "-" => Ok(None),
                s => s
                    .parse()
                    .map(Some)
                    .map_err(|_| schema(ln, format!("`{name}` is not a number: `{s}`"))),
            }
        };
        let pair = |t: &str, a: &str| -> Result<Option<Measurement>, MetricsError> {
            Ok(match (real(t)?, real(a)?) {
                (Some(tput_gops), Some(area_eslices)) => Some(Measurement { tput_gops, area_eslices }),
                _ => None,
            })
        };
        real("tput")?.ok_or_else(|| schema(ln, "`tput` is required".into()))?;
        real("eopc")?.ok_or_else(|| schema(ln, "`eopc` is required".into()))?;
        real("parallelism")?.ok_or_else(|| schema(ln, "`parallelism` is required".into()))?;
        out.push(BenchmarkRecord {
            name: get("name").to_string(),
            inputs: int("inputs")? as usize,
            outputs: int("outputs")? as usize,
            edges: int("edges")? as usize,
            op_nodes: int("op_nodes")? as usize,
            depth: int("depth")? as usize,
            parallelism: get("parallelism").to_string(),
            ii: int("ii")?,
            eopc: get("eopc").to_string(),
            tput: get("tput").to_string(),
            area: int("area")?,
            scfu: pair("scfu_tput", "scfu_area")?,
            hls: pair("hls_tput", "hls_area")?,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub name: String,
    pub overlay: Measurement,
    pub vs_scfu: Comparison,
    pub vs_hls: Comparison,
    pub mops_per_eslice: f64,
    pub scfu_mops_per_eslice: f64,
    pub hls_mops_per_eslice: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
}

fn span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

impl ComparisonReport {
    pub fn max_area_reduction_vs_scfu(&self) -> f64 {
        span(self.rows.iter().map(|r| r.vs_scfu.area_reduction)).1
    }

    pub fn tput_ratio_span_vs_scfu(&self) -> (f64, f64) {
        span(self.rows.iter().map(|r| r.vs_scfu.tput_ratio))
    }

    pub fn tput_ratio_span_vs_hls(&self) -> (f64, f64) {
        span(self.rows.iter().map(|r| r.vs_hls.tput_ratio))
    }

    pub fn mops_span(&self) -> (f64, f64) {
        span(self.rows.iter().map(|r| r.mops_per_eslice))
    }

    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<12} {:>6} {:>6} {:>10} {:>9} {:>9} {:>9} {:>10}",
            "benchmark", "GOPS", "area", "area-red", "x-scfu", "x-hls", "area/hls", "MOPS/eS"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<12} {:>6.2} {:>6} {:>9.1}% {:>8.1}x {:>8.1}x {:>9.2} {:>10.3}",
                r.name,
                r.overlay.tput_gops,
                r.overlay.area_eslices,
                r.vs_scfu.area_reduction * 100.0,
                r.vs_scfu.tput_ratio,
                r.vs_hls.tput_ratio,
                1.0 - r.vs_hls.area_reduction,
                r.mops_per_eslice
            );
        }
        let (lo, hi) = self.tput_ratio_span_vs_scfu();
        let (mlo, mhi) = self.mops_span();
        let _ = writeln!(s, "max area reduction vs SCFU-SCN: {:.1}%", self.max_area_reduction_vs_scfu() * 100.0);
        let _ = writeln!(s, "throughput ratio vs SCFU-SCN: {lo:.1}x .. {hi:.1}x");
        let _ = writeln!(s, "overlay MOPS/e-Slice: {mlo:.3} .. {mhi:.3}");
        s
    }

    /// `[name]` sections of `key = value` lines, then a `[summary]` section.
    pub fn render_kv(&self) -> String {
        let mut s = String::new();
        for r in &self.rows {
            let _ = writeln!(s, "[{}]", r.name);
            let _ = writeln!(s, "tput_gops = {}", r.overlay.tput_gops);
            let _ = writeln!(s, "area_eslices = {}", r.overlay.area_eslices);
            let _ = writeln!(s, "area_reduction_vs_scfu = {:.4}", r.vs_scfu.area_reduction);
            let _ = writeln!(s, "area_reduction_vs_hls = {:.4}", r.vs_hls.area_reduction);
            let _ = writeln!(s, "tput_ratio_vs_scfu = {:.4}", r.vs_scfu.tput_ratio);
            let _ = writeln!(s, "tput_ratio_vs_hls = {:.4}", r.vs_hls.tput_ratio);
            let _ = writeln!(s, "mops_per_eslice = {:.4}", r.mops_per_eslice);
            let _ = writeln!(s, "scfu_mops_per_eslice = {:.4}", r.scfu_mops_per_eslice);
            let _ = writeln!(s, "hls_mops_per_eslice = {:.4}", r.hls_mops_per_eslice);
            s.push('\n');
        }
        let (lo, hi) = self.tput_ratio_span_vs_scfu();
        let _ = writeln!(s, "[summary]");
        let _ = writeln!(s, "benchmarks = {}", self.rows.len());
        let _ = writeln!(s, "max_area_reduction_vs_scfu = {:.4}", self.max_area_reduction_vs_scfu());
        let _ = writeln!(s, "min_tput_ratio_vs_scfu = {lo:.4}");
        let _ = writeln!(s, "max_tput_ratio_vs_scfu = {hi:.4}");
        s
    }
}

pub fn comparison_report(records: &[BenchmarkRecord]) -> Result<ComparisonReport, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::Empty);
    }
    let rows = records
        .iter()
        .map(|r| {
            let missing = || MetricsError::MissingReference(r.name.clone());
            let scfu = r.scfu.ok_or_else(missing)?;
            let hls = r.hls.ok_or_else(missing)?;
            let ours = r.overlay();
            Ok(ComparisonRow {
                name: r.name.clone(),
                overlay: ours,
                vs_scfu: compare(ours, scfu),
                vs_hls: compare(ours, hls),
                mops_per_eslice: mops_per_eslice(ours.tput_gops, ours.area_eslices),
                scfu_mops_per_eslice: mops_per_eslice(scfu.tput_gops, scfu.area_eslices),
                hls_mops_per_eslice: mops_per_eslice(hls.tput_gops, hls.area_eslices),
            })
        })
        .collect::<Result<_, MetricsError>>()?;
    Ok(ComparisonReport { rows })
}

/// Figures for one compiled kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub ii: u64,
    pub op_nodes: usize,
    pub bypass_count: usize,
    pub fu_count: usize,
    pub pipelines: usize,
    pub word_count: usize,
    pub context_bytes: usize,
    pub config_time_s: f64,
    pub eopc: String,
    pub tput_gops: String,
    pub area_eslices: u64,
    pub mops_per_eslice: f64,
    pub clock: ClockConfig,
    pub dfg: Option<DfgStats>,
}

impl MetricsReport {
    pub fn new(
        schedule: &Schedule,
        dfg: Option<DfgStats>,
        clock: ClockConfig,
        area: AreaModel,
    ) -> Result<Self, MetricsError> {
        if schedule.ii == 0 {
            return Err(MetricsError::ZeroIi);
        }
        let ops = schedule.op_nodes();
        let eslices = area_eslices(schedule.fu_count(), area);
        Ok(MetricsReport {
            ii: schedule.ii,
            op_nodes: ops,
            bypass_count: schedule.bypass_count(),
            fu_count: schedule.fu_count(),
            pipelines: pipeline_count(schedule.fu_count()),
            word_count: schedule.word_count(),
            context_bytes: context_bytes(schedule.word_count()),
            config_time_s: config_time(schedule.word_count(), clock),
            eopc: eopc_display(ops, schedule.ii),
            tput_gops: throughput_display(ops, schedule.ii, clock),
            area_eslices: eslices,
            mops_per_eslice: mops_per_eslice(throughput_gops(ops, schedule.ii, clock), eslices as f64),
            clock,
            dfg,
        })
    }

    pub fn render_kv(&self) -> String {
        let mut s = String::from("# tmfu metrics v1\n");
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("clock_mhz", format!("{}", self.clock.mhz()));
        if let Some(d) = &self.dfg {
            kv("inputs", d.input_count.to_string());
            kv("outputs", d.output_count.to_string());
            kv("edges", d.edge_count.to_string());
            kv("graph_depth", d.graph_depth.to_string());
            kv("avg_parallelism", d.avg_parallelism_display());
        }
        kv("op_nodes", self.op_nodes.to_string());
        kv("bypass_instrs", self.bypass_count.to_string());
        kv("fus", self.fu_count.to_string());
        kv("pipelines", self.pipelines.to_string());
        kv("ii", self.ii.to_string());
        kv("eopc", self.eopc.clone());
        kv("tput_gops", self.tput_gops.clone());
        kv("area_eslices", self.area_eslices.to_string());
        kv("mops_per_eslice", format!("{:.4}", self.mops_per_eslice));
        kv("context_words", self.word_count.to_string());
        kv("context_bytes", self.context_bytes.to_string());
        kv("config_cycles", self.word_count.to_string());
        kv("config_time_us", format!("{:.4}", self.config_time_s * 1e6));
        s
    }
}

/// Reads `key = value` lines (comments and `[section]` headers skipped).
pub fn parse_kv(text: &str) -> Vec<(String, String)> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#') && !l.starts_with('['))
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}
