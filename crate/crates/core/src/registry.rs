//! The passport registry state machine.
//!
//! Roles and vaccination records are the only on-chain state. State is a
//! plain value: [`apply_tx`] returns a new state and never touches its input,
//! and [`replay`] folds the same function over a chain in order, so any node
//! holding the blocks reconstructs bit-identical state.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::codec::{
    encode_canonical, from_canonical_value, hash_concat, hash_sha256, hex_bytes,
    to_canonical_value, verhoeff_validate, CanonicalValue, Digest32,
};
use crate::ledger::{merkle_root, Block};

pub const AADHAAR_LEN: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Role {
    Authority,
    Provider,
    Officer,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::Authority => "AUTHORITY",
            Role::Provider => "PROVIDER",
            Role::Officer => "OFFICER",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "AUTHORITY" => Ok(Role::Authority),
            "PROVIDER" => Ok(Role::Provider),
            "OFFICER" => Ok(Role::Officer),
            other => Err(format!("unknown role {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TxKind {
    Bootstrap,
    RegisterProvider,
    RegisterOfficer,
    IssueRecord,
}

impl TxKind {
    /// Role an actor must hold to submit this kind.
    pub fn required_role(&self) -> Role {
        match self {
            TxKind::Bootstrap | TxKind::RegisterProvider | TxKind::RegisterOfficer => Role::Authority,
            TxKind::IssueRecord => Role::Provider,
        }
    }
}

impl fmt::Display for TxKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TxKind::Bootstrap => "BOOTSTRAP",
            TxKind::RegisterProvider => "REGISTER_PROVIDER",
            TxKind::RegisterOfficer => "REGISTER_OFFICER",
            TxKind::IssueRecord => "ISSUE_RECORD",
        };
        f.write_str(s)
    }
}

pub type Payload = BTreeMap<String, CanonicalValue>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transaction {
    pub kind: TxKind,
    pub actor_id: String,
    pub nonce: u64,
    pub payload: Payload,
    pub submitted_at: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapPayload {
    pub authority_ids: Vec<String>,
    pub authority_pubkeys: Vec<String>,
    #[serde(with = "hex_bytes")]
    pub chain_salt: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegisterProviderPayload {
    pub provider_id: String,
    pub hospital_name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegisterOfficerPayload {
    pub officer_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IssueRecordPayload {
    pub subject_key: Digest32,
    pub full_name: String,
    pub vaccine_name: String,
    pub dose_number: u32,
    pub date: String,
}

fn payload_of<T: Serialize>(p: &T) -> Payload {
    match to_canonical_value(p) {
        Ok(CanonicalValue::Map(m)) => m,
        other => panic!("payload must encode as a map, got {other:?}"),
    }
}

impl Transaction {
    pub fn new<T: Serialize>(kind: TxKind, actor_id: &str, nonce: u64, payload: &T, submitted_at: i64) -> Self {
        Transaction {
            kind,
            actor_id: actor_id.to_owned(),
            nonce,
            payload: payload_of(payload),
            submitted_at,
        }
    }

    pub fn register_provider(actor_id: &str, nonce: u64, provider_id: &str, hospital_name: &str, at: i64) -> Self {
        let p = RegisterProviderPayload {
            provider_id: provider_id.to_owned(),
            hospital_name: hospital_name.to_owned(),
        };
        Self::new(TxKind::RegisterProvider, actor_id, nonce, &p, at)
    }

    pub fn register_officer(actor_id: &str, nonce: u64, officer_id: &str, at: i64) -> Self {
        let p = RegisterOfficerPayload {
            officer_id: officer_id.to_owned(),
        };
        Self::new(TxKind::RegisterOfficer, actor_id, nonce, &p, at)
    }

    pub fn issue_record(actor_id: &str, nonce: u64, payload: &IssueRecordPayload, at: i64) -> Self {
        Self::new(TxKind::IssueRecord, actor_id, nonce, payload, at)
    }

    /// Leaf hash used in the block's transaction Merkle tree.
    pub fn leaf_hash(&self) -> Digest32 {
        hash_sha256(&self.canonical_bytes())
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        crate::codec::to_canonical_bytes(self).expect("transactions are always encodable")
    }

    fn parse_payload<T: serde::de::DeserializeOwned>(&self) -> Result<T, TxError> {
        from_canonical_value(CanonicalValue::Map(self.payload.clone()))
            .map_err(|e| TxError::MalformedPayload(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VaccinationEntry {
    pub vaccine_name: String,
    pub dose_number: u32,
    pub date: String,
    pub hospital_name: String,
    pub provider_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PassportRecord {
    pub subject_key: Digest32,
    pub full_name: String,
    pub entries: Vec<VaccinationEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize)]
#[serde(tag = "error", content = "detail", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TxError {
    #[error("actor {actor} may not submit {kind}")]
    Unauthorized { actor: String, kind: String },
    #[error("bad nonce for {actor}: expected {expected}, got {got}")]
    BadNonce { actor: String, expected: u64, got: u64 },
    #[error("dose {dose_number} of {vaccine_name} already recorded")]
    DuplicateDose { vaccine_name: String, dose_number: u32 },
    #[error("full name does not match the existing record")]
    NameMismatch,
    #[error("{0} is already registered")]
    DuplicateRegistration(String),
    #[error("malformed payload: {0}")]
    MalformedPayload(String),
    #[error("bootstrap is only valid in the genesis block")]
    BootstrapOutsideGenesis,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RegistryError {
    #[error("aadhaar number must be 12 digits with a valid check digit")]
    InvalidAadhaar,
}

/// Salted hash that stands in for the raw Aadhaar number on the ledger.
pub fn subject_key(aadhaar: &str, chain_salt: &[u8]) -> Result<Digest32, RegistryError> {
    if aadhaar.len() != AADHAAR_LEN || !verhoeff_validate(aadhaar) {
        return Err(RegistryError::InvalidAadhaar);
    }
    Ok(hash_concat(&[chain_salt, aadhaar.as_bytes()]))
}

/// Accepts `YYYY-MM-DD` calendar dates.
pub fn is_iso_date(s: &str) -> bool {
    let b = s.as_bytes();
    if b.len() != 10 || b[4] != b'-' || b[7] != b'-' {
        return false;
    }
    let digits = |r: std::ops::Range<usize>| -> Option<u32> {
        let part = &s[r];
        part.bytes().all(|c| c.is_ascii_digit()).then(|| part.parse().ok()).flatten()
    };
    let (Some(y), Some(m), Some(d)) = (digits(0..4), digits(5..7), digits(8..10)) else {
        return false;
    };
    let leap = (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
    let days = match m {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        2 if leap => 29,
        2 => 28,
        _ => return false,
    };
    (1..=days).contains(&d)
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RegistryState {
    pub roles: BTreeMap<String, Role>,
    pub hospitals: BTreeMap<String, String>,
    /// Keyed by the hex form of the subject key.
    pub records: BTreeMap<String, PassportRecord>,
    pub nonces: BTreeMap<String, u64>,
    #[serde(with = "hex_bytes")]
    pub chain_salt: Vec<u8>,
}

impl RegistryState {
    pub fn is_bootstrapped(&self) -> bool {
        !self.roles.is_empty() || !self.chain_salt.is_empty() || !self.nonces.is_empty()
    }

    pub fn role_of(&self, actor_id: &str) -> Option<Role> {
        self.roles.get(actor_id).copied()
    }

    pub fn next_nonce(&self, actor_id: &str) -> u64 {
        self.nonces.get(actor_id).copied().unwrap_or(0) + 1
    }

    pub fn lookup(&self, key: &Digest32) -> Option<&PassportRecord> {
        self.records.get(&key.to_hex())
    }

    /// Applies `tx` in place. All checks run before the first write, so a
    /// failed transaction leaves the state untouched.
    pub fn apply_in_place(&mut self, tx: &Transaction) -> Result<(), TxError> {
        if tx.kind == TxKind::Bootstrap {
            if self.is_bootstrapped() {
                return Err(TxError::BootstrapOutsideGenesis);
            }
        } else {
            let expected = self.next_nonce(&tx.actor_id);
            if tx.nonce != expected {
                return Err(TxError::BadNonce {
                    actor: tx.actor_id.clone(),
                    expected,
                    got: tx.nonce,
                });
            }
            let allowed = match (tx.kind.required_role(), self.role_of(&tx.actor_id)) {
                (required, Some(held)) => required == held,
                (_, None) => false,
            };
            if !allowed {
                return Err(TxError::Unauthorized {
                    actor: tx.actor_id.clone(),
                    kind: tx.kind.to_string(),
                });
            }
        }

        match tx.kind {
            TxKind::Bootstrap => {
                if tx.nonce != 1 {
                    return Err(TxError::BadNonce {
                        actor: tx.actor_id.clone(),
                        expected: 1,
                        got: tx.nonce,
                    });
                }
                let p: BootstrapPayload = tx.parse_payload()?;
                if p.authority_ids.is_empty() || p.authority_pubkeys.is_empty() {
                    return Err(TxError::MalformedPayload("empty authority set".into()));
                }
                if p.chain_salt.is_empty() {
                    return Err(TxError::MalformedPayload("empty chain salt".into()));
                }
                let mut seen = std::collections::BTreeSet::new();
                for id in &p.authority_ids {
                    if id.is_empty() || !seen.insert(id) {
                        return Err(TxError::MalformedPayload(format!("bad authority id {id:?}")));
                    }
                }
                for id in p.authority_ids {
                    self.roles.insert(id, Role::Authority);
                }
                self.chain_salt = p.chain_salt;
            }
            TxKind::RegisterProvider => {
                let p: RegisterProviderPayload = tx.parse_payload()?;
                if p.provider_id.is_empty() || p.hospital_name.trim().is_empty() {
                    return Err(TxError::MalformedPayload("provider_id and hospital_name are required".into()));
                }
                if self.roles.contains_key(&p.provider_id) {
                    return Err(TxError::DuplicateRegistration(p.provider_id));
                }
                self.roles.insert(p.provider_id.clone(), Role::Provider);
                self.hospitals.insert(p.provider_id, p.hospital_name);
            }
            TxKind::RegisterOfficer => {
                let p: RegisterOfficerPayload = tx.parse_payload()?;
                if p.officer_id.is_empty() {
                    return Err(TxError::MalformedPayload("officer_id is required".into()));
                }
                if self.roles.contains_key(&p.officer_id) {
                    return Err(TxError::DuplicateRegistration(p.officer_id));
                }
                self.roles.insert(p.officer_id, Role::Officer);
            }
            TxKind::IssueRecord => {
                let p: IssueRecordPayload = tx.parse_payload()?;
                if p.full_name.trim().is_empty() || p.vaccine_name.trim().is_empty() {
                    return Err(TxError::MalformedPayload("full_name and vaccine_name are required".into()));
                }
                if p.dose_number == 0 {
                    return Err(TxError::MalformedPayload("dose_number must be positive".into()));
                }
                if !is_iso_date(&p.date) {
                    return Err(TxError::MalformedPayload(format!("date {:?} is not YYYY-MM-DD", p.date)));
                }
                let hospital_name = self
                    .hospitals
                    .get(&tx.actor_id)
                    .cloned()
                    .ok_or_else(|| TxError::MalformedPayload("provider has no hospital".into()))?;
                let key = p.subject_key.to_hex();
                if let Some(existing) = self.records.get(&key) {
                    if existing.full_name != p.full_name {
                        return Err(TxError::NameMismatch);
                    }
                    if existing
                        .entries
                        .iter()
                        .any(|e| e.vaccine_name == p.vaccine_name && e.dose_number == p.dose_number)
                    {
                        return Err(TxError::DuplicateDose {
                            vaccine_name: p.vaccine_name,
                            dose_number: p.dose_number,
                        });
                    }
                }
                let entry = VaccinationEntry {
                    vaccine_name: p.vaccine_name,
                    dose_number: p.dose_number,
                    date: p.date,
                    hospital_name,
                    provider_id: tx.actor_id.clone(),
                };
                let record = self.records.entry(key).or_insert_with(|| PassportRecord {
                    subject_key: p.subject_key,
                    full_name: p.full_name,
                    entries: Vec::new(),
                });
                let at = record
                    .entries
                    .partition_point(|e| (&e.vaccine_name, e.dose_number) < (&entry.vaccine_name, entry.dose_number));
                record.entries.insert(at, entry);
            }
        }
        self.nonces.insert(tx.actor_id.clone(), tx.nonce);
        Ok(())
    }

    /// Canonical leaf encodings, sorted, one per state map entry.
    pub fn state_leaves(&self) -> Vec<Vec<u8>> {
        fn leaf<V: Serialize>(section: &str, key: &str, value: &V) -> Vec<u8> {
            let v = to_canonical_value(value).expect("state values are encodable");
            encode_canonical(&CanonicalValue::List(vec![section.into(), key.into(), v]))
        }
        let mut leaves = Vec::new();
        if !self.chain_salt.is_empty() {
            leaves.push(leaf("config", "chain_salt", &hex::encode(&self.chain_salt)));
        }
        leaves.extend(self.roles.iter().map(|(k, v)| leaf("roles", k, v)));
        leaves.extend(self.hospitals.iter().map(|(k, v)| leaf("hospitals", k, v)));
        leaves.extend(self.records.iter().map(|(k, v)| leaf("records", k, v)));
        leaves.extend(self.nonces.iter().map(|(k, v)| leaf("nonces", k, v)));
        leaves.sort();
        leaves
    }

    pub fn state_root(&self) -> Digest32 {
        let hashes: Vec<Digest32> = self.state_leaves().iter().map(|l| hash_sha256(l)).collect();
        merkle_root(&hashes)
    }

    /// Applies a block's transactions in order; on failure returns the index
    /// of the offending transaction and leaves `self` partially applied.
    pub fn apply_block(&mut self, block: &Block) -> Result<(), (usize, TxError)> {
        for (i, tx) in block.transactions.iter().enumerate() {
            if tx.kind == TxKind::Bootstrap && block.header.height != 0 {
                return Err((i, TxError::BootstrapOutsideGenesis));
            }
            self.apply_in_place(tx).map_err(|e| (i, e))?;
        }
        Ok(())
    }
}

/// Value-semantics transition: returns the successor state.
pub fn apply_tx(state: &RegistryState, tx: &Transaction) -> Result<RegistryState, TxError> {
    let mut next = state.clone();
    next.apply_in_place(tx)?;
    Ok(next)
}

pub fn lookup_record<'a>(state: &'a RegistryState, key: &Digest32) -> Option<&'a PassportRecord> {
    state.lookup(key)
}

pub fn state_root(state: &RegistryState) -> Digest32 {
    state.state_root()
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("replay failed at height {height}, transaction {tx_index}: {inner}")]
pub struct ReplayError {
    pub height: u64,
    pub tx_index: usize,
    pub inner: TxError,
}

pub fn replay(blocks: &[Block]) -> Result<RegistryState, ReplayError> {
    let mut state = RegistryState::default();
    for block in blocks {
        state.apply_block(block).map_err(|(tx_index, inner)| ReplayError {
            height: block.header.height,
            tx_index,
            inner,
        })?;
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::verhoeff_check_digit;

    const SALT: &[u8] = b"0123456789abcdef";

    fn aadhaar(seed: u64) -> String {
        let base = format!("{:011}", 23_456_789_012u64 + seed);
        format!("{base}{}", verhoeff_check_digit(&base).unwrap())
    }

    fn bootstrapped() -> RegistryState {
        let tx = Transaction::new(
            TxKind::Bootstrap,
            "node",
            1,
            &BootstrapPayload {
                authority_ids: vec!["root".into()],
                authority_pubkeys: vec!["00".repeat(32)],
                chain_salt: SALT.to_vec(),
            },
            0,
        );
        apply_tx(&RegistryState::default(), &tx).unwrap()
    }

    fn issue(provider: &str, nonce: u64, key: Digest32, name: &str, vaccine: &str, dose: u32) -> Transaction {
        Transaction::issue_record(
            provider,
            nonce,
            &IssueRecordPayload {
                subject_key: key,
                full_name: name.into(),
                vaccine_name: vaccine.into(),
                dose_number: dose,
                date: "2021-06-01".into(),
            },
            10,
        )
    }

    fn with_provider() -> RegistryState {
        let s = bootstrapped();
        let s = apply_tx(&s, &Transaction::register_provider("root", 1, "prov", "St. Mary", 1)).unwrap();
        apply_tx(&s, &Transaction::register_officer("root", 2, "off", 2)).unwrap()
    }

    #[test]
    fn subject_key_rules() {
        let a = aadhaar(1);
        assert_eq!(subject_key(&a, SALT).unwrap(), subject_key(&a, SALT).unwrap());
        assert_ne!(subject_key(&a, SALT).unwrap(), subject_key(&a, b"other").unwrap());
        assert_eq!(subject_key("12345678901A", SALT), Err(RegistryError::InvalidAadhaar));
        assert_eq!(subject_key("2363", SALT), Err(RegistryError::InvalidAadhaar));
        let mut bad = a.clone().into_bytes();
        bad[11] = if bad[11] == b'9' { b'0' } else { bad[11] + 1 };
        assert_eq!(subject_key(std::str::from_utf8(&bad).unwrap(), SALT), Err(RegistryError::InvalidAadhaar));
    }

    #[test]
    fn officer_cannot_issue() {
        let s = with_provider();
        let key = subject_key(&aadhaar(1), SALT).unwrap();
        let err = apply_tx(&s, &issue("off", 1, key, "A", "X", 1)).unwrap_err();
        assert!(matches!(err, TxError::Unauthorized { .. }));
    }

    #[test]
    fn authority_cannot_issue() {
        let s = with_provider();
        let key = subject_key(&aadhaar(1), SALT).unwrap();
        let err = apply_tx(&s, &issue("root", 3, key, "A", "X", 1)).unwrap_err();
        assert!(matches!(err, TxError::Unauthorized { .. }));
    }

    #[test]
    fn provider_cannot_register() {
        let s = with_provider();
        let err = apply_tx(&s, &Transaction::register_officer("prov", 1, "x", 3)).unwrap_err();
        assert!(matches!(err, TxError::Unauthorized { .. }));
    }

    #[test]
    fn duplicate_dose() {
        let s = with_provider();
        let key = subject_key(&aadhaar(1), SALT).unwrap();
        let s = apply_tx(&s, &issue("prov", 1, key, "A", "X", 1)).unwrap();
        let err = apply_tx(&s, &issue("prov", 2, key, "A", "X", 1)).unwrap_err();
        assert_eq!(err, TxError::DuplicateDose { vaccine_name: "X".into(), dose_number: 1 });
    }

    #[test]
    fn name_mismatch() {
        let s = with_provider();
        let key = subject_key(&aadhaar(1), SALT).unwrap();
        let s = apply_tx(&s, &issue("prov", 1, key, "A", "X", 1)).unwrap();
        assert_eq!(apply_tx(&s, &issue("prov", 2, key, "B", "X", 2)).unwrap_err(), TxError::NameMismatch);
    }

    #[test]
    fn nonce_rules() {
        let s = with_provider();
        let err = apply_tx(&s, &Transaction::register_officer("root", 2, "o2", 3)).unwrap_err();
        assert_eq!(err, TxError::BadNonce { actor: "root".into(), expected: 3, got: 2 });
        let err = apply_tx(&s, &Transaction::register_officer("root", 5, "o2", 3)).unwrap_err();
        assert!(matches!(err, TxError::BadNonce { .. }));
    }

    #[test]
    fn duplicate_registration() {
        let s = with_provider();
        let err = apply_tx(&s, &Transaction::register_officer("root", 3, "prov", 3)).unwrap_err();
        assert_eq!(err, TxError::DuplicateRegistration("prov".into()));
    }

    #[test]
    fn second_bootstrap_rejected() {
        let s = bootstrapped();
        let tx = Transaction::new(
            TxKind::Bootstrap,
            "node2",
            1,
            &BootstrapPayload {
                authority_ids: vec!["evil".into()],
                authority_pubkeys: vec!["11".repeat(32)],
                chain_salt: b"x".to_vec(),
            },
            0,
        );
        assert_eq!(apply_tx(&s, &tx).unwrap_err(), TxError::BootstrapOutsideGenesis);
    }

    #[test]
    fn malformed_payloads() {
        let s = with_provider();
        let mut tx = Transaction::register_provider("root", 3, "p2", "H", 3);
        tx.payload.insert("extra".into(), 1.into());
        assert!(matches!(apply_tx(&s, &tx).unwrap_err(), TxError::MalformedPayload(_)));

        let key = subject_key(&aadhaar(1), SALT).unwrap();
        let mut tx = issue("prov", 1, key, "A", "X", 1);
        tx.payload.insert("date".into(), "2021-02-30".into());
        assert!(matches!(apply_tx(&s, &tx).unwrap_err(), TxError::MalformedPayload(_)));

        let tx = issue("prov", 1, key, "A", "X", 0);
        assert!(matches!(apply_tx(&s, &tx).unwrap_err(), TxError::MalformedPayload(_)));

        let mut tx = issue("prov", 1, key, "A", "X", 1);
        tx.payload.insert("subject_key".into(), "ABCD".into());
        assert!(matches!(apply_tx(&s, &tx).unwrap_err(), TxError::MalformedPayload(_)));
    }

    #[test]
    fn failed_apply_leaves_input_untouched() {
        let s = with_provider();
        let before = s.clone();
        let key = subject_key(&aadhaar(1), SALT).unwrap();
        let _ = apply_tx(&s, &issue("prov", 1, key, "A", "X", 1)).unwrap();
        assert_eq!(s, before);
        let mut m = s.clone();
        assert!(m.apply_in_place(&issue("off", 1, key, "A", "X", 1)).is_err());
        assert_eq!(m, before);
    }

    #[test]
    fn three_tx_scenario_full_record() {
        let s = bootstrapped();
        let s = apply_tx(&s, &Transaction::register_provider("root", 1, "P", "Apollo Clinic", 1)).unwrap();
        let key = subject_key(&aadhaar(7), SALT).unwrap();
        let s = apply_tx(&s, &issue("P", 1, key, "Asha Rao", "Covishield", 1)).unwrap();
        let expected = PassportRecord {
            subject_key: key,
            full_name: "Asha Rao".into(),
            entries: vec![VaccinationEntry {
                vaccine_name: "Covishield".into(),
                dose_number: 1,
                date: "2021-06-01".into(),
                hospital_name: "Apollo Clinic".into(),
                provider_id: "P".into(),
            }],
        };
        assert_eq!(lookup_record(&s, &key), Some(&expected));
        assert_eq!(lookup_record(&s, &subject_key(&aadhaar(8), SALT).unwrap()), None);
    }

    #[test]
    fn entries_sorted_by_vaccine_then_dose() {
        let s = with_provider();
        let key = subject_key(&aadhaar(3), SALT).unwrap();
        let s = apply_tx(&s, &issue("prov", 1, key, "A", "Zeta", 2)).unwrap();
        let s = apply_tx(&s, &issue("prov", 2, key, "A", "Alpha", 1)).unwrap();
        let s = apply_tx(&s, &issue("prov", 3, key, "A", "Zeta", 1)).unwrap();
        let got: Vec<_> = lookup_record(&s, &key)
            .unwrap()
            .entries
            .iter()
            .map(|e| (e.vaccine_name.clone(), e.dose_number))
            .collect();
        let mut expected = vec![("Zeta".to_string(), 2), ("Alpha".to_string(), 1), ("Zeta".to_string(), 1)];
        expected.sort();
        assert_eq!(got, expected);
    }

    #[test]
    fn state_root_distinguishes_states() {
        let empty = RegistryState::default();
        let mut one = RegistryState::default();
        one.roles.insert("a".into(), Role::Officer);
        assert_ne!(empty.state_root(), one.state_root());
        assert_eq!(empty.state_root(), hash_sha256(b""));
    }

    #[test]
    fn state_root_two_entry_golden() {
        // Oracle: python hashlib over the sorted leaf encodings
        //   ["hospitals","p","H"], ["roles","p","PROVIDER"]
        // then sha256(l0 || l1) for the two-leaf tree.
        let mut s = RegistryState::default();
        s.roles.insert("p".into(), Role::Provider);
        s.hospitals.insert("p".into(), "H".into());
        let leaves = s.state_leaves();
        assert_eq!(leaves[0], br#"["hospitals","p","H"]"#);
        assert_eq!(leaves[1], br#"["roles","p","PROVIDER"]"#);
        assert_eq!(s.state_root().to_hex(), "bb6ce779e3f7957bff345c174bbd42a2e60c111aabb01d2ee5d74b74a6653260");
    }

    #[test]
    fn iso_dates() {
        assert!(is_iso_date("2020-02-29"));
        assert!(!is_iso_date("2021-02-29"));
        assert!(!is_iso_date("2021-13-01"));
        assert!(!is_iso_date("2021-1-01"));
        assert!(!is_iso_date("+021-01-01"));
        assert!(is_iso_date("2000-02-29"));
        assert!(!is_iso_date("1900-02-29"));
    }
}
