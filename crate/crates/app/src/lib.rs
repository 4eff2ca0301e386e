//! Command-line pipeline and HTTP service around the `npti` toolkit.

pub mod cli;
pub mod config;
pub mod manifest;
pub mod registry;
pub mod server;
