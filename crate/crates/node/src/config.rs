use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vaxledger_core::auth::KdfParams;

pub const CONFIG_ENV: &str = "VAXLEDGER_CONFIG";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Producer,
    Verifier,
}

fn default_interval() -> u64 {
    5
}

fn default_validity_days() -> i64 {
    365
}

fn default_login_cap() -> u32 {
    10
}

fn default_session_secs() -> i64 {
    vaxledger_core::auth::DEFAULT_SESSION_SECS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeConfig {
    pub mode: Mode,
    pub listen_addr: String,
    pub data_dir: PathBuf,
    #[serde(default = "default_interval")]
    pub block_interval_s: u64,
    #[serde(default)]
    pub peer_url: Option<String>,
    /// Producer mode: seed files for the block key and the credential key.
    #[serde(default)]
    pub producer_key_path: Option<PathBuf>,
    #[serde(default)]
    pub credential_key_path: Option<PathBuf>,
    /// Verifier mode: the public halves, hex.
    #[serde(default)]
    pub producer_pubkey: Option<String>,
    #[serde(default)]
    pub credential_pubkey: Option<String>,
    #[serde(default = "default_validity_days")]
    pub validity_window_days: i64,
    #[serde(default = "default_login_cap")]
    pub login_attempts_per_minute: u32,
    #[serde(default = "default_session_secs")]
    pub session_secs: i64,
    #[serde(default)]
    pub kdf: Option<KdfParams>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config {path}: {reason}")]
    Parse { path: PathBuf, reason: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl NodeConfig {
    pub fn producer(data_dir: impl Into<PathBuf>, listen_addr: &str) -> Self {
        let data_dir = data_dir.into();
        NodeConfig {
            mode: Mode::Producer,
            listen_addr: listen_addr.to_owned(),
            producer_key_path: Some(data_dir.join("producer.key")),
            credential_key_path: Some(data_dir.join("credential.key")),
            data_dir,
            block_interval_s: default_interval(),
            peer_url: None,
            producer_pubkey: None,
            credential_pubkey: None,
            validity_window_days: default_validity_days(),
            login_attempts_per_minute: default_login_cap(),
            session_secs: default_session_secs(),
            kdf: None,
        }
    }

    pub fn verifier(
        data_dir: impl Into<PathBuf>,
        listen_addr: &str,
        peer_url: &str,
        producer_pubkey: &str,
        credential_pubkey: &str,
    ) -> Self {
        NodeConfig {
            mode: Mode::Verifier,
            listen_addr: listen_addr.to_owned(),
            data_dir: data_dir.into(),
            block_interval_s: default_interval(),
            peer_url: Some(peer_url.to_owned()),
            producer_key_path: None,
            credential_key_path: None,
            producer_pubkey: Some(producer_pubkey.to_owned()),
            credential_pubkey: Some(credential_pubkey.to_owned()),
            validity_window_days: default_validity_days(),
            login_attempts_per_minute: default_login_cap(),
            session_secs: default_session_secs(),
            kdf: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let config: NodeConfig = serde_json::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.block_interval_s == 0 {
            return Err(ConfigError::Invalid("block_interval_s must be positive".into()));
        }
        if self.validity_window_days <= 0 {
            return Err(ConfigError::Invalid("validity_window_days must be positive".into()));
        }
        if self.session_secs <= 0 {
            return Err(ConfigError::Invalid("session_secs must be positive".into()));
        }
        match self.mode {
            Mode::Producer => {
                if self.producer_key_path.is_none() || self.credential_key_path.is_none() {
                    return Err(ConfigError::Invalid(
                        "producer mode requires producer_key_path and credential_key_path".into(),
                    ));
                }
            }
            Mode::Verifier => {
                if self.peer_url.is_none() {
                    return Err(ConfigError::Invalid("verifier mode requires peer_url".into()));
                }
                if self.producer_pubkey.is_none() || self.credential_pubkey.is_none() {
                    return Err(ConfigError::Invalid(
                        "verifier mode requires producer_pubkey and credential_pubkey".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn chain_path(&self) -> PathBuf {
        self.data_dir.join("chain.jsonl")
    }

    pub fn accounts_path(&self) -> PathBuf {
        self.data_dir.join("accounts.jsonl")
    }

    pub fn validity_window_secs(&self) -> i64 {
        self.validity_window_days * 24 * 60 * 60
    }
}
