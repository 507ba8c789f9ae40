//! Batch commands and the network server behind the `scenescope` binary.

pub mod commands;
pub mod server;
