//! Bootstrapping a fresh producer data directory.

use std::path::{Path, PathBuf};

use rand::RngCore;
use serde::Serialize;
use vaxledger_core::auth::{hash_new_account, new_account_id, AccountStore, AuthError, KdfParams};
use vaxledger_core::keys::{generate_signing_key, save_signing_key, verifying_key_hex};
use vaxledger_core::ledger::{make_genesis, ChainStore};
use vaxledger_core::Role;

use crate::config::NodeConfig;

pub const CHAIN_SALT_LEN: usize = 16;
pub const PRODUCER_ID: &str = "authority-node";
pub const CONFIG_FILE: &str = "config.json";

#[derive(Debug, Clone, Serialize)]
pub struct InitOutput {
    pub data_dir: PathBuf,
    pub config_path: PathBuf,
    pub authority_account_id: String,
    pub producer_pubkey: String,
    pub credential_pubkey: String,
    pub genesis_block_id: String,
}

#[derive(Debug, thiserror::Error)]
pub enum InitError {
    #[error("data directory {0} is not empty")]
    NotEmpty(PathBuf),
    #[error(transparent)]
    Account(#[from] AuthError),
    #[error("{0}")]
    System(String),
}

impl InitError {
    /// True for failures caused by the caller's input rather than the host.
    pub fn is_user_error(&self) -> bool {
        !matches!(self, InitError::System(_))
    }
}

fn sys(e: impl std::fmt::Display) -> InitError {
    InitError::System(e.to_string())
}

fn is_absent_or_empty(dir: &Path) -> Result<bool, InitError> {
    match std::fs::read_dir(dir) {
        Ok(mut entries) => Ok(entries.next().is_none()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(true),
        Err(e) => Err(sys(e)),
    }
}

/// Creates keys, genesis, the first AUTHORITY account and a producer config
/// in `data_dir`, which must be absent or empty.
pub fn init_data_dir(
    data_dir: &Path,
    listen_addr: &str,
    authority_email: &str,
    authority_password: &str,
    kdf: KdfParams,
    now: i64,
) -> Result<InitOutput, InitError> {
    if !is_absent_or_empty(data_dir)? {
        return Err(InitError::NotEmpty(data_dir.to_path_buf()));
    }
    let account_id = new_account_id();
    let account = hash_new_account(&account_id, authority_email, authority_password, Role::Authority, None, &kdf)?;

    std::fs::create_dir_all(data_dir).map_err(sys)?;
    let data_dir = data_dir.canonicalize().map_err(sys)?;
    let mut config = NodeConfig::producer(&data_dir, listen_addr);
    config.kdf = Some(kdf);

    let producer_key = generate_signing_key();
    let credential_key = generate_signing_key();
    save_signing_key(config.producer_key_path.as_ref().unwrap(), &producer_key).map_err(sys)?;
    save_signing_key(config.credential_key_path.as_ref().unwrap(), &credential_key).map_err(sys)?;

    let mut salt = [0u8; CHAIN_SALT_LEN];
    rand::rngs::OsRng.fill_bytes(&mut salt);
    let genesis = make_genesis(
        &salt,
        std::slice::from_ref(&account_id),
        &[producer_key.verifying_key(), credential_key.verifying_key()],
        PRODUCER_ID,
        &producer_key,
        now,
    )
    .map_err(sys)?;

    let mut accounts = AccountStore::open(config.accounts_path())?;
    accounts.insert(account)?;
    let (mut store, _) = ChainStore::open(config.chain_path()).map_err(sys)?;
    store.append(&genesis).map_err(sys)?;

    let config_path = data_dir.join(CONFIG_FILE);
    let text = serde_json::to_string_pretty(&config).map_err(sys)?;
    std::fs::write(&config_path, text + "\n").map_err(sys)?;

    Ok(InitOutput {
        data_dir,
        config_path,
        authority_account_id: account_id,
        producer_pubkey: verifying_key_hex(&producer_key.verifying_key()),
        credential_pubkey: verifying_key_hex(&credential_key.verifying_key()),
        genesis_block_id: genesis.block_id().to_hex(),
    })
}
