// SPDX-License-Identifier: Apache-2.0

//! Toolchain for a linear overlay of DSP-based, time-multiplexed functional
//! units: kernel frontend, ASAP scheduler, bit-exact context encoding, a
//! cycle-accurate simulator and the analytical area/throughput models.
//!
//! ```
//! use tmfu_core::{frontend, isa, scheduler, sim};
//!
//! let dfg = frontend::compile_kernel("y = (a - b) * (a - b); out y;").unwrap();
//! let schedule = scheduler::schedule_dfg(&dfg).unwrap();
//! let image = isa::build_context(&schedule).unwrap();
//! let run = sim::run(&image, &[vec![7, 4]], 1).unwrap();
//! assert_eq!(run.outputs, vec![vec![9]]);
//! ```

pub mod dfg;
pub mod frontend;
pub mod isa;
pub mod metrics;
pub mod random;
pub mod scheduler;
pub mod sim;
pub mod trace;

pub use dfg::{Dfg, DfgError, DfgStats, OpKind, Word};
pub use frontend::{compile_kernel, KernelError};
pub use isa::{build_context, ContextImage, IsaError};
pub use metrics::{ClockConfig, MetricsError, MetricsReport};
pub use scheduler::{schedule_dfg, Schedule, ScheduleError};
pub use sim::{run, RunResult, SimError};

/// Shipped reference inputs.
pub mod data {
    pub const GRADIENT_KERNEL: &str = include_str!("../data/gradient.kern");
    pub const GRADIENT_DFG: &str = include_str!("../data/gradient.dfg");
    /// First 32 cycles of the gradient schedule, II = 11.
    pub const GRADIENT_TABLE: &str = include_str!("../data/gradient_schedule.golden");
}
