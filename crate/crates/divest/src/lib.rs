//! Experiment harness for `divest-core`: configuration files, seeded
//! parallel ensembles, micro/macro comparison, CSV/JSON output and the
//! commands behind the `divest` binary.

pub mod commands;
pub mod compare;
pub mod config;
pub mod ensemble;
pub mod error;
pub mod experiments;
pub mod io;
pub mod presets;
pub mod seed;

pub use config::RunConfig;
pub use error::{HarnessError, Result};
