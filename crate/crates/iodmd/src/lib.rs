//! File formats and the benchmark harness for [`iodmd_core`].
//!
//! * [`io`]: trajectory CSV, model JSON and stabilization report JSON.
//! * [`harness`]: the excitation × projection-budget sweep on the transport
//!   benchmark and the tables it emits.
//!
//! The `iodmd` binary wraps both behind a command-line interface.

pub mod harness;
pub mod io;

mod error;

pub use error::{Error, Result};
