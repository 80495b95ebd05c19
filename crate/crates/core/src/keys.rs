//! Ed25519 key files: 32-byte seeds stored as a single line of lowercase hex.

use std::io;
use std::path::Path;

use ed25519_dalek::{SigningKey, VerifyingKey};
use rand::RngCore;

use crate::codec::parse_lower_hex;

#[derive(Debug, thiserror::Error)]
pub enum KeyError {
    #[error("key file io: {0}")]
    Io(#[from] io::Error),
    #[error("malformed key: {0}")]
    Malformed(String),
}

pub fn generate_signing_key() -> SigningKey {
    let mut seed = [0u8; 32];
    rand::rngs::OsRng.fill_bytes(&mut seed);
    SigningKey::from_bytes(&seed)
}

pub fn signing_key_from_hex(s: &str) -> Result<SigningKey, KeyError> {
    let seed = parse_lower_hex::<32>(s.trim()).map_err(|e| KeyError::Malformed(e.to_string()))?;
    Ok(SigningKey::from_bytes(&seed))
}

pub fn verifying_key_from_hex(s: &str) -> Result<VerifyingKey, KeyError> {
    let bytes = parse_lower_hex::<32>(s.trim()).map_err(|e| KeyError::Malformed(e.to_string()))?;
    VerifyingKey::from_bytes(&bytes).map_err(|e| KeyError::Malformed(e.to_string()))
}

pub fn verifying_key_hex(key: &VerifyingKey) -> String {
    hex::encode(key.as_bytes())
}

pub fn load_signing_key(path: &Path) -> Result<SigningKey, KeyError> {
    signing_key_from_hex(&std::fs::read_to_string(path)?)
}

/// Writes the seed with owner-only permissions.
pub fn save_signing_key(path: &Path, key: &SigningKey) -> Result<(), KeyError> {
    crate::fsutil::write_private(path, format!("{}\n", hex::encode(key.to_bytes())).as_bytes())?;
    Ok(())
}
