//! Library surface of the `ginv` experiment front-end: configuration
//! loading and hashing, artifact writers, config-to-model builders, the
//! subcommand tasks, and the selftest battery.  The binary in `main.rs` is
//! a thin clap dispatcher over these modules, so integration tests can run
//! every task in-process.

pub mod artifacts;
pub mod config;
pub mod models;
pub mod selftest;
pub mod tasks;
