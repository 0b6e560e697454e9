//! Library side of the `dsm` command: input parsing, the analysis report,
//! simulation configs, results tables and their summaries.

pub mod analyze;
pub mod config;
pub mod error;
pub mod input;
pub mod results;
pub mod summarize;

pub use error::{CliError, Result};

/// Version stamped on every file and report this crate writes.
pub const FORMAT_VERSION: u32 = 1;
