//! Command-line front end: file I/O, subcommands, benchmark and demo
//! training built on `spw-core`.

pub mod app;
pub mod bench;
pub mod commands;
pub mod error;
pub mod io;
pub mod pfm;
pub mod record;
pub mod train;

pub use error::{CliError, CliResult};
