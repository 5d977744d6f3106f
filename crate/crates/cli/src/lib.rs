//! Command line and HTTP front end over `ladderforge-core`.

pub mod api;
pub mod cli;
pub mod commands;

pub use cli::{Cli, Command};
pub use commands::run;
