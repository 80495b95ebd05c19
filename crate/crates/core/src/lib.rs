//! Core of the vaxledger vaccine passport ledger.
//!
//! - [`codec`]: canonical encoding, SHA-256, Verhoeff check digits
//! - [`ledger`]: hash-chained signed blocks, Merkle trees, the block file
//! - [`registry`]: the passport state machine replayed from the chain
//! - [`auth`]: off-chain accounts and session tokens
//! - [`credential`]: signed, QR-encodable vaccination credentials

pub mod auth;
pub mod codec;
pub mod credential;
pub mod keys;
pub mod ledger;
pub mod registry;

mod fsutil;

pub use codec::Digest32;
pub use registry::{PassportRecord, RegistryState, Role, Transaction, TxKind, VaccinationEntry};
