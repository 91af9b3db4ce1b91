//! Configuration parsing and subcommands of the `parametrix` binary.

pub mod commands;
pub mod config;
