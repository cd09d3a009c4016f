//! `fracobs` command-line driver: config parsing, command execution and artifact output.

pub mod app;
pub mod config;
pub mod expr;
pub mod run;
