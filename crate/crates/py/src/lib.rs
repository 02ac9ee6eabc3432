// SPDX-License-Identifier: Apache-2.0

//! Python bindings: `import tmfu`.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};

use tmfu_core::dfg::{self, OpKind, Word};
use tmfu_core::isa::{self, Instruction};
use tmfu_core::metrics::{self, AreaModel, ClockConfig, MetricsReport};
use tmfu_core::{frontend, scheduler, sim, trace};

fn user_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn clock(mhz: f64) -> PyResult<ClockConfig> {
    ClockConfig::from_mhz(mhz).map_err(user_err)
}

fn op_name(op: OpKind) -> &'static str {
    match op {
        OpKind::Add => "add",
        OpKind::Sub => "sub",
        OpKind::Mul => "mul",
        OpKind::Bypass => "bypass",
        OpKind::Input => "input",
        OpKind::Output => "output",
    }
}

fn op_from(name: &str) -> PyResult<OpKind> {
    match name.to_ascii_lowercase().as_str() {
        "add" => Ok(OpKind::Add),
        "sub" => Ok(OpKind::Sub),
        "mul" => Ok(OpKind::Mul),
        "bypass" | "byp" => Ok(OpKind::Bypass),
        other => Err(user_err(format!("unknown operation `{other}`"))),
    }
}

/// Dataflow graph of a kernel.
#[pyclass(module = "tmfu", frozen)]
struct Dfg(dfg::Dfg);

#[pymethods]
impl Dfg {
    /// Parses the line-oriented DFG text format.
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        dfg::Dfg::parse(text).map(Dfg).map_err(user_err)
    }

    /// Compiles kernel source.
    #[staticmethod]
    fn from_kernel(source: &str) -> PyResult<Self> {
        frontend::compile_kernel(source).map(Dfg).map_err(user_err)
    }

    fn render(&self) -> String {
        self.0.render()
    }

    /// Caller-supplied inputs in stream order.
    #[getter]
    fn inputs(&self) -> Vec<String> {
        self.0.free_inputs().into_iter().map(|i| self.0.node(i).id.clone()).collect()
    }

    #[getter]
    fn outputs(&self) -> Vec<String> {
        self.0.outputs().into_iter().map(|i| self.0.node(i).id.clone()).collect()
    }

    fn stats<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let s = self.0.stats();
        let d = PyDict::new(py);
        d.set_item("inputs", s.input_count)?;
        d.set_item("outputs", s.output_count)?;
        d.set_item("edges", s.edge_count)?;
        d.set_item("op_nodes", s.op_nodes)?;
        d.set_item("depth", s.graph_depth)?;
        d.set_item("avg_parallelism", s.avg_parallelism_display())?;
        Ok(d)
    }

    /// Reference interpreter; values follow `inputs`, results follow `outputs`.
    fn evaluate(&self, values: Vec<Word>) -> PyResult<Vec<Word>> {
        self.0.evaluate_vector(&values).map_err(user_err)
    }

    fn schedule(&self) -> PyResult<Schedule> {
        scheduler::schedule_dfg(&self.0).map(Schedule).map_err(user_err)
    }

    fn __repr__(&self) -> String {
        let s = self.0.stats();
        format!("Dfg(op_nodes={}, depth={})", s.op_nodes, s.graph_depth)
    }
}

/// Per-FU instruction lists and initiation interval.
#[pyclass(module = "tmfu", frozen)]
struct Schedule(scheduler::Schedule);

#[pymethods]
impl Schedule {
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        scheduler::Schedule::parse(text).map(Schedule).map_err(user_err)
    }

    #[getter]
    fn ii(&self) -> u64 {
        self.0.ii
    }

    #[getter]
    fn fu_count(&self) -> usize {
        self.0.fu_count()
    }

    #[getter]
    fn word_count(&self) -> usize {
        self.0.word_count()
    }

    #[getter]
    fn loads(&self) -> Vec<usize> {
        self.0.fu_programs.iter().map(|p| p.expected_loads).collect()
    }

    /// `[(op, src_a, src_b), ...]` per FU.
    #[getter]
    fn programs(&self) -> Vec<Vec<(&'static str, u8, u8)>> {
        self.0
            .fu_programs
            .iter()
            .map(|p| p.instrs.iter().map(|i| (op_name(i.op), i.src_a, i.src_b)).collect())
            .collect()
    }

    fn render(&self) -> String {
        self.0.render()
    }

    /// Static cycle table of the first `cycles` cycles.
    #[pyo3(signature = (cycles = 32))]
    fn table(&self, cycles: u64) -> String {
        self.0.render_table(cycles)
    }

    /// Key/value metrics document.
    #[pyo3(signature = (clock_mhz = 300.0))]
    fn metrics(&self, clock_mhz: f64) -> PyResult<String> {
        let r = MetricsReport::new(&self.0, None, clock(clock_mhz)?, AreaModel::default()).map_err(user_err)?;
        Ok(r.render_kv())
    }

    fn context(&self) -> PyResult<ContextImage> {
        isa::build_context(&self.0).map(ContextImage).map_err(user_err)
    }

    fn __repr__(&self) -> String {
        format!("Schedule(fus={}, ii={})", self.0.fu_count(), self.0.ii)
    }
}

/// Encoded configuration stream plus host metadata.
#[pyclass(module = "tmfu", frozen)]
struct ContextImage(isa::ContextImage);

#[pymethods]
impl ContextImage {
    #[staticmethod]
    fn deserialize(data: &[u8]) -> PyResult<Self> {
        isa::ContextImage::deserialize(data).map(ContextImage).map_err(user_err)
    }

    fn serialize<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.0.serialize())
    }

    #[getter]
    fn word_count(&self) -> usize {
        self.0.word_count()
    }

    #[getter]
    fn fu_count(&self) -> u8 {
        self.0.fu_count
    }

    /// Raw 40-bit words.
    #[getter]
    fn words(&self) -> Vec<u64> {
        self.0.words.iter().map(|w| w.raw()).collect()
    }

    fn disassemble(&self) -> PyResult<String> {
        self.0.disassemble().map_err(user_err)
    }

    /// Streams `vectors` through the pipeline. Returns a dict with `outputs`,
    /// `period`, `completion_cycles`, `config_cycles` and the trace as CSV rows.
    #[pyo3(signature = (vectors, iterations = None))]
    fn simulate<'py>(
        &self,
        py: Python<'py>,
        vectors: Vec<Vec<Word>>,
        iterations: Option<usize>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let n = iterations.unwrap_or(vectors.len());
        let r = sim::run(&self.0, &vectors, n).map_err(|e| {
            if e.is_internal() {
                PyRuntimeError::new_err(e.to_string())
            } else {
                user_err(e)
            }
        })?;
        let d = PyDict::new(py);
        d.set_item("outputs", r.outputs)?;
        d.set_item("period", r.measured_period)?;
        d.set_item("completion_cycles", r.completion_cycles)?;
        d.set_item("config_cycles", r.config_cycles)?;
        d.set_item("trace", trace::render_rows(&r.trace))?;
        d.set_item("table", trace::render_full_table(&r.trace, self.0.fu_count as usize))?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!("ContextImage(fus={}, words={})", self.0.fu_count, self.0.word_count())
    }
}

/// Kernel source straight to a context image.
#[pyfunction]
fn compile(source: &str) -> PyResult<ContextImage> {
    let dfg = frontend::compile_kernel(source).map_err(user_err)?;
    let s = scheduler::schedule_dfg(&dfg).map_err(user_err)?;
    isa::build_context(&s).map(ContextImage).map_err(user_err)
}

#[pyfunction]
fn encode_instruction(op: &str, src_a: u8, src_b: u8) -> PyResult<u32> {
    isa::encode_instruction(op_from(op)?, src_a, src_b).map(|i| i.0).map_err(user_err)
}

#[pyfunction]
fn decode_instruction(word: u32) -> PyResult<(&'static str, u8, u8)> {
    let d = isa::decode_instruction(Instruction(word)).map_err(user_err)?;
    Ok((op_name(d.op), d.src_a, d.src_b))
}

#[pyfunction]
fn context_bytes(word_count: usize) -> usize {
    isa::context_bytes(word_count)
}

#[pyfunction]
fn eopc(op_nodes: usize, ii: u64) -> PyResult<String> {
    if ii == 0 {
        return Err(user_err("initiation interval must be positive"));
    }
    Ok(metrics::eopc_display(op_nodes, ii))
}

#[pyfunction]
#[pyo3(signature = (op_nodes, ii, clock_mhz = 300.0))]
fn throughput_gops(op_nodes: usize, ii: u64, clock_mhz: f64) -> PyResult<f64> {
    if ii == 0 {
        return Err(user_err("initiation interval must be positive"));
    }
    Ok(metrics::throughput_gops(op_nodes, ii, clock(clock_mhz)?))
}

#[pyfunction]
fn area_eslices(fu_count: usize) -> u64 {
    metrics::area_eslices(fu_count, AreaModel::default())
}

/// Seconds to stream `word_count` context words.
#[pyfunction]
#[pyo3(signature = (word_count, clock_mhz = 300.0))]
fn config_time(word_count: usize, clock_mhz: f64) -> PyResult<f64> {
    Ok(metrics::config_time(word_count, clock(clock_mhz)?))
}

/// Comparison against the reference architectures, as text or key/value.
#[pyfunction]
#[pyo3(signature = (table = None, kv = false))]
fn comparison_report(table: Option<&str>, kv: bool) -> PyResult<String> {
    let records = match table {
        Some(t) => metrics::parse_benchmark_table(t).map_err(user_err)?,
        None => metrics::reference_benchmarks(),
    };
    let r = metrics::comparison_report(&records).map_err(user_err)?;
    Ok(if kv { r.render_kv() } else { r.render_text() })
}

#[pymodule]
fn tmfu(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Dfg>()?;
    m.add_class::<Schedule>()?;
    m.add_class::<ContextImage>()?;
    m.add_function(wrap_pyfunction!(compile, m)?)?;
    m.add_function(wrap_pyfunction!(encode_instruction, m)?)?;
    m.add_function(wrap_pyfunction!(decode_instruction, m)?)?;
    m.add_function(wrap_pyfunction!(context_bytes, m)?)?;
    m.add_function(wrap_pyfunction!(eopc, m)?)?;
    m.add_function(wrap_pyfunction!(throughput_gops, m)?)?;
    m.add_function(wrap_pyfunction!(area_eslices, m)?)?;
    m.add_function(wrap_pyfunction!(config_time, m)?)?;
    m.add_function(wrap_pyfunction!(comparison_report, m)?)?;
    m.add("GRADIENT_KERNEL", tmfu_core::data::GRADIENT_KERNEL)?;
    Ok(())
}
