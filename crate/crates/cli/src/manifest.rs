// SPDX-License-Identifier: Apache-2.0

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKind {
    Kernel,
    Dfg,
    Context,
}

impl SourceKind {
    /// `.dfg` and `.ovl` are recognised by extension; anything else is kernel text.
    pub fn of(path: &Path) -> SourceKind {
        match path.extension().and_then(|e| e.to_str()) {
            Some("dfg") => SourceKind::Dfg,
            Some("ovl") => SourceKind::Context,
            _ => SourceKind::Kernel,
        }
    }
}

/// Everything one compile or simulate invocation reads and writes.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub kernel: Option<PathBuf>,
    pub dfg: Option<PathBuf>,
    pub context_in: Option<PathBuf>,
    pub clock_mhz: f64,
    pub iterations: Option<usize>,
    pub inputs: Option<PathBuf>,
    pub context: PathBuf,
    pub schedule: PathBuf,
    pub schedule_table: PathBuf,
    pub metrics: PathBuf,
    pub outputs: PathBuf,
    pub trace_table: PathBuf,
    pub trace_rows: PathBuf,
}

impl RunManifest {
    /// Derives artifact paths as `<out_dir>/<stem>.<ext>`.
    pub fn new(source: &Path, out_dir: &Path, clock_mhz: f64) -> Result<Self> {
        let Some(stem) = source.file_stem().and_then(|s| s.to_str()) else {
            bail!("cannot derive an artifact name from {}", source.display());
        };
        let at = |ext: &str| out_dir.join(format!("{stem}.{ext}"));
        let kind = SourceKind::of(source);
        let m = RunManifest {
            kernel: (kind == SourceKind::Kernel).then(|| source.to_path_buf()),
            dfg: (kind == SourceKind::Dfg).then(|| source.to_path_buf()),
            context_in: (kind == SourceKind::Context).then(|| source.to_path_buf()),
            clock_mhz,
            iterations: None,
            inputs: None,
            context: at("ovl"),
            schedule: at("sched"),
            schedule_table: at("schedule.txt"),
            metrics: at("metrics"),
            outputs: at("out"),
            trace_table: at("trace.txt"),
            trace_rows: at("trace.csv"),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn source(&self) -> &Path {
        self.kernel
            .as_deref()
            .or(self.dfg.as_deref())
            .or(self.context_in.as_deref())
            .expect("validated")
    }

    pub fn validate(&self) -> Result<()> {
        let sources = [&self.kernel, &self.dfg, &self.context_in].iter().filter(|s| s.is_some()).count();
        if sources != 1 {
            bail!("exactly one kernel, DFG or context source is required, got {sources}");
        }
        if !(self.clock_mhz.is_finite() && self.clock_mhz > 0.0) {
            bail!("clock must be a positive frequency, got {} MHz", self.clock_mhz);
        }
        if self.iterations == Some(0) {
            bail!("--iterations must be at least 1");
        }
        let outputs = [
            &self.context,
            &self.schedule,
            &self.schedule_table,
            &self.metrics,
            &self.outputs,
            &self.trace_table,
            &self.trace_rows,
        ];
        let mut seen = HashSet::new();
        for p in outputs {
            if !seen.insert(p) {
                bail!("output path {} used twice", p.display());
            }
        }
        let mut inputs = vec![self.source()];
        inputs.extend(self.inputs.as_deref());
        for p in inputs {
            // A compiled context may be read and rewritten in place.
            if seen.contains(&p.to_path_buf()) && Some(p) != self.context_in.as_deref() {
                bail!("input {} would be overwritten by an output", p.display());
            }
        }
        Ok(())
    }
}
