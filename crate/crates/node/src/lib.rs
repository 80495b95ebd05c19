//! Node service for the vaccination ledger: HTTP API, block production,
//! verifier sync and the operator CLI.

pub mod api;
pub mod cli;
pub mod config;
pub mod init;
pub mod pool;
mod ratelimit;
pub mod server;
pub mod service;
pub mod sync;

pub use config::{Mode, NodeConfig};
pub use service::{Node, NodeError};
