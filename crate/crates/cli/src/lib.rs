//! Subcommand implementations of the `phrasevec` binary. Every command reads
//! and writes files only, so a pipeline can be driven from tests exactly as
//! from the shell.

pub mod commands;
