//! Command-line harness around `rkpm-core`: scene files, trajectory I/O,
//! comparison metrics and the beam benchmark.

pub mod bench;
pub mod config;
pub mod error;
pub mod export;
pub mod metrics;
pub mod pipeline;
pub mod trajectory;

pub use error::{HarnessError, Stage};
