//! Files, configuration and command-line plumbing around [`hencler_core`].

pub mod alloc_meter;
pub mod bench;
pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod io;
pub mod records;

pub use commands::CliError;
