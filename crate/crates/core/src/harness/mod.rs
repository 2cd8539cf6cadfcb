//! Command-line harness: config grammar, trajectory files, subcommands.

pub mod cli;
pub mod config;
pub mod trajfile;
