//! Library surface of the experiment runner, used by the `ergodic` binary
//! and the integration tests.

pub mod config;
pub mod runner;
