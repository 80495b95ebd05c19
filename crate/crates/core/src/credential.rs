//! Signed vaccination credentials and their QR text form.
//!
//! A credential is a snapshot of one passport record signed with the
//! authority's credential key. Verification needs only the credential text
//! and the authority public key.

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use ed25519_dalek::{Signature, Signer, SigningKey, VerifyingKey};
use serde::{Deserialize, Serialize};

use crate::codec::{encode_canonical, from_canonical_bytes, hex64, to_canonical_bytes, to_canonical_value, CanonicalValue, Digest32};
use crate::registry::{PassportRecord, VaccinationEntry};

pub const CREDENTIAL_VERSION: u32 = 1;
pub const QR_PREFIX: &str = "VAXLEDGER:1:";
pub const DEFAULT_VALIDITY_SECS: i64 = 365 * 24 * 60 * 60;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Credential {
    pub version: u32,
    pub subject_key: Digest32,
    pub full_name: String,
    pub entries: Vec<VaccinationEntry>,
    pub issued_at: i64,
    pub chain_head: Digest32,
    #[serde(with = "hex64")]
    pub signature: [u8; 64],
}

impl Credential {
    pub fn signing_bytes(&self) -> Vec<u8> {
        let mut value = to_canonical_value(self).expect("credentials are encodable");
        if let CanonicalValue::Map(m) = &mut value {
            m.remove("signature");
        }
        encode_canonical(&value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CredentialStatus {
    Valid,
    InvalidSignature,
    Expired,
    Malformed,
}

impl CredentialStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            CredentialStatus::Valid => "VALID",
            CredentialStatus::InvalidSignature => "INVALID_SIGNATURE",
            CredentialStatus::Expired => "EXPIRED",
            CredentialStatus::Malformed => "MALFORMED",
        }
    }
}

impl std::fmt::Display for CredentialStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CredentialError {
    #[error("record has no vaccination entries")]
    EmptyRecord,
    #[error("payload does not start with {QR_PREFIX}")]
    BadPrefix,
    #[error("payload is not unpadded base64url")]
    BadBase64,
    #[error("payload does not decode to a credential: {0}")]
    BadSchema(String),
}

pub fn issue_credential(
    record: &PassportRecord,
    chain_head: Digest32,
    key: &SigningKey,
    issued_at: i64,
) -> Result<Credential, CredentialError> {
    if record.entries.is_empty() {
        return Err(CredentialError::EmptyRecord);
    }
    let mut c = Credential {
        version: CREDENTIAL_VERSION,
        subject_key: record.subject_key,
        full_name: record.full_name.clone(),
        entries: record.entries.clone(),
        issued_at,
        chain_head,
        signature: [0u8; 64],
    };
    c.signature = key.sign(&c.signing_bytes()).to_bytes();
    Ok(c)
}

pub fn encode_qr_payload(c: &Credential) -> String {
    let bytes = to_canonical_bytes(c).expect("credentials are encodable");
    format!("{QR_PREFIX}{}", URL_SAFE_NO_PAD.encode(bytes))
}

/// Parses QR text into a credential. The signature is not checked here.
pub fn decode_qr_payload(text: &str) -> Result<Credential, CredentialError> {
    let body = text.strip_prefix(QR_PREFIX).ok_or(CredentialError::BadPrefix)?;
    let bytes = URL_SAFE_NO_PAD.decode(body).map_err(|_| CredentialError::BadBase64)?;
    from_canonical_bytes(&bytes).map_err(|e| CredentialError::BadSchema(e.to_string()))
}

pub fn verify_credential(c: &Credential, authority_key: &VerifyingKey, now: i64) -> CredentialStatus {
    verify_credential_with_window(c, authority_key, now, DEFAULT_VALIDITY_SECS)
}

/// Expiry is inclusive of the window: a credential exactly `window_secs` old
/// is still valid.
pub fn verify_credential_with_window(
    c: &Credential,
    authority_key: &VerifyingKey,
    now: i64,
    window_secs: i64,
) -> CredentialStatus {
    if c.version != CREDENTIAL_VERSION || c.entries.is_empty() || c.issued_at < 0 {
        return CredentialStatus::Malformed;
    }
    let sig = Signature::from_bytes(&c.signature);
    if authority_key.verify_strict(&c.signing_bytes(), &sig).is_err() {
        return CredentialStatus::InvalidSignature;
    }
    if now.saturating_sub(c.issued_at) > window_secs {
        return CredentialStatus::Expired;
    }
    CredentialStatus::Valid
}

/// Decode and verify in one step; any decode failure is `Malformed`.
pub fn verify_qr_payload(text: &str, authority_key: &VerifyingKey, now: i64, window_secs: i64) -> CredentialStatus {
    match decode_qr_payload(text.trim()) {
        Ok(c) => verify_credential_with_window(&c, authority_key, now, window_secs),
        Err(_) => CredentialStatus::Malformed,
    }
}
