// SPDX-License-Identifier: Apache-2.0

//! `tmfu`: compile kernels to overlay contexts, simulate them and report
//! area/throughput figures.
//!
//! Exit status: 0 on success, 1 for user errors (bad source, bad input data,
//! unreadable files), 2 when an internal invariant is violated.

mod manifest;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use tmfu_core::dfg::{Dfg, Word};
use tmfu_core::isa::{build_context, ContextImage};
use tmfu_core::metrics::{self, AreaModel, ClockConfig, MetricsReport};
use tmfu_core::scheduler::{schedule_dfg, Schedule};
use tmfu_core::{frontend, sim, trace};

use manifest::{RunManifest, SourceKind};

#[derive(Parser, Debug)]
#[command(name = "tmfu", version, about = "Time-multiplexed overlay compiler and simulator")]
struct Cli {
    /// Clock frequency used for throughput and configuration time.
    #[arg(long, global = true, default_value_t = 300.0)]
    clock_mhz: f64,
    /// Directory for generated artifacts.
    #[arg(long, global = true, env = "TMFU_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,
    /// Independent sources processed concurrently.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Kernel (`.kern`) or DFG (`.dfg`) to context image, schedule, table and metrics.
    Compile {
        #[arg(required = true)]
        sources: Vec<PathBuf>,
        /// Cycles shown in the schedule table.
        #[arg(long, default_value_t = 32)]
        cycles: u64,
    },
    /// Streams input vectors through a compiled context (or a source compiled on the fly).
    Simulate {
        source: PathBuf,
        /// One comma-separated vector per line; `#` starts a comment.
        #[arg(long)]
        inputs: PathBuf,
        /// Defaults to the number of vectors in the input file.
        #[arg(long)]
        iterations: Option<usize>,
        /// Write only this trace format (both by default).
        #[arg(long, value_enum)]
        trace_format: Option<TraceFormat>,
    },
    /// Comparison against the reference architectures.
    Report {
        /// Benchmark table; the shipped reference table when omitted.
        table: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
        format: ReportFormat,
    },
    /// Lists the words of a context image by FU.
    Disassemble { context: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TraceFormat {
    Table,
    Rows,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReportFormat {
    Text,
    Kv,
}

/// Violations of the toolchain's own invariants, reported with exit status 2.
#[derive(Debug)]
struct Internal(anyhow::Error);

impl std::fmt::Display for Internal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "internal error: {:#}", self.0)
    }
}

impl std::error::Error for Internal {}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tmfu: {e:#}");
            if e.downcast_ref::<Internal>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    let clock = ClockConfig::from_mhz(cli.clock_mhz)?;
    match &cli.command {
        Command::Compile { sources, cycles } => {
            fs::create_dir_all(&cli.out_dir)
                .with_context(|| format!("creating {}", cli.out_dir.display()))?;
            let manifests = sources
                .iter()
                .map(|s| RunManifest::new(s, &cli.out_dir, cli.clock_mhz))
                .collect::<Result<Vec<_>>>()?;
            let results = run_jobs(&manifests, cli.jobs, |m| cmd_compile(m, clock, *cycles));
            let mut first_err = None;
            for (m, r) in manifests.iter().zip(results) {
                match r {
                    Ok(summary) => println!("{summary}"),
                    Err(e) if sources.len() > 1 => {
                        eprintln!("tmfu: {}: {e:#}", m.source().display());
                        first_err.get_or_insert(e);
                    }
                    Err(e) => first_err = Some(e),
                }
            }
            first_err.map_or(Ok(()), Err)
        }
        Command::Simulate { source, inputs, iterations, trace_format } => {
            fs::create_dir_all(&cli.out_dir)
                .with_context(|| format!("creating {}", cli.out_dir.display()))?;
            let mut m = RunManifest::new(source, &cli.out_dir, cli.clock_mhz)?;
            m.inputs = Some(inputs.clone());
            m.iterations = *iterations;
            m.validate()?;
            cmd_simulate(&m, *trace_format)
        }
        Command::Report { table, format } => cmd_report(table.as_deref(), *format),
        Command::Disassemble { context } => {
            print!("{}", load_context(context)?.disassemble()?);
            Ok(())
        }
    }
}

/// Runs `f` over `items` on up to `jobs` threads, preserving order.
fn run_jobs<T: Sync, R: Send>(items: &[T], jobs: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let jobs = jobs.clamp(1, items.len().max(1));
    if jobs == 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(jobs);
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|c| s.spawn(|| c.iter().map(&f).collect::<Vec<_>>()))
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("job panicked")).collect()
    })
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn load_dfg(m: &RunManifest) -> Result<Dfg> {
    let path = m.source();
    let text = read(path)?;
    let dfg = match SourceKind::of(path) {
        SourceKind::Dfg => Dfg::parse(&text).map_err(anyhow::Error::from),
        _ => frontend::compile_kernel(&text).map_err(anyhow::Error::from),
    };
    dfg.with_context(|| path.display().to_string())
}

fn load_context(path: &Path) -> Result<ContextImage> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    ContextImage::deserialize(&bytes).with_context(|| path.display().to_string())
}

fn compile(m: &RunManifest) -> Result<(Dfg, Schedule, ContextImage)> {
    let dfg = load_dfg(m)?;
    let schedule = schedule_dfg(&dfg).with_context(|| m.source().display().to_string())?;
    let image = build_context(&schedule).with_context(|| m.source().display().to_string())?;
    Ok((dfg, schedule, image))
}

fn cmd_compile(m: &RunManifest, clock: ClockConfig, cycles: u64) -> Result<String> {
    let (dfg, schedule, image) = compile(m)?;
    let report = MetricsReport::new(&schedule, Some(dfg.stats()), clock, AreaModel::default())?;
    write(&m.context, image.serialize())?;
    write(&m.schedule, schedule.render())?;
    write(&m.schedule_table, schedule.render_table(cycles))?;
    write(&m.metrics, report.render_kv())?;
    Ok(format!(
        "{}: {} FUs, {} words, II {}, {} GOPS -> {}",
        m.source().display(),
        schedule.fu_count(),
        image.word_count(),
        schedule.ii,
        report.tput_gops,
        m.context.display()
    ))
}

fn parse_vectors(text: &str, path: &Path) -> Result<Vec<Vec<Word>>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let v = line
            .split(',')
            .map(|f| {
                let f = f.trim();
                f.parse::<Word>()
                    .map_err(|_| anyhow!("{}:{}: `{f}` is not a 32-bit integer", path.display(), n + 1))
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(v);
    }
    if out.is_empty() {
        bail!("{}: no input vectors", path.display());
    }
    Ok(out)
}

fn cmd_simulate(m: &RunManifest, format: Option<TraceFormat>) -> Result<()> {
    let image = match SourceKind::of(m.source()) {
        SourceKind::Context => load_context(m.source())?,
        _ => compile(m)?.2,
    };
    let inputs_path = m.inputs.as_deref().expect("simulate sets inputs");
    let vectors = parse_vectors(&read(inputs_path)?, inputs_path)?;
    let iterations = m.iterations.unwrap_or(vectors.len());
    let run = sim::run(&image, &vectors, iterations).map_err(|e| {
        if e.is_internal() {
            Internal(e.into()).into()
        } else {
            anyhow::Error::from(e).context(m.source().display().to_string())
        }
    })?;

    let mut out = String::from("# tmfu outputs v1\n# ");
    let names: Vec<&str> = image.meta.output_order.iter().map(|o| o.id.as_str()).collect();
    out.push_str(&names.join(","));
    out.push('\n');
    for v in &run.outputs {
        let row: Vec<String> = v.iter().map(Word::to_string).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    write(&m.outputs, out)?;
    if format != Some(TraceFormat::Rows) {
        write(&m.trace_table, trace::render_full_table(&run.trace, image.fu_count as usize))?;
    }
    if format != Some(TraceFormat::Table) {
        write(&m.trace_rows, trace::render_rows(&run.trace))?;
    }
    println!("iterations: {iterations}");
    println!("config cycles: {}", run.config_cycles);
    match run.measured_period {
        Some(p) => println!("measured period: {p}"),
        None => println!("measured period: n/a (single iteration)"),
    }
    println!("outputs: {}", m.outputs.display());
    Ok(())
}

fn cmd_report(table: Option<&Path>, format: ReportFormat) -> Result<()> {
    let records = match table {
        Some(p) => metrics::parse_benchmark_table(&read(p)?).with_context(|| p.display().to_string())?,
        None => metrics::reference_benchmarks(),
    };
    let report = metrics::comparison_report(&records)?;
    match format {
        ReportFormat::Text => print!("{}", report.render_text()),
        ReportFormat::Kv => print!("{}", report.render_kv()),
    }
    Ok(())
}
