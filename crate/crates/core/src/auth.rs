//! Email/password accounts and opaque session tokens.
//!
//! Accounts are stored off-chain in a JSON-lines file of canonical account
//! encodings; only role registrations reach the ledger. Passwords are hashed
//! with Argon2id and the parameters are kept per account.

use std::collections::{BTreeMap, HashMap};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use argon2::{Algorithm, Argon2, Params, Version};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use subtle::ConstantTimeEq;

use crate::codec::{from_canonical_bytes, hex_bytes, to_canonical_bytes};
use crate::fsutil::open_private_append;
use crate::registry::Role;

pub const MIN_PASSWORD_CHARS: usize = 10;
pub const DEFAULT_SESSION_SECS: i64 = 8 * 60 * 60;
const SALT_LEN: usize = 16;
const HASH_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KdfParams {
    pub algorithm: String,
    pub m_cost_kib: u32,
    pub t_cost: u32,
    pub p_cost: u32,
}

impl Default for KdfParams {
    fn default() -> Self {
        KdfParams {
            algorithm: "argon2id".into(),
            m_cost_kib: 19 * 1024,
            t_cost: 2,
            p_cost: 1,
        }
    }
}

impl KdfParams {
    /// Minimal cost, for tests only.
    pub fn fast_insecure() -> Self {
        KdfParams {
            algorithm: "argon2id".into(),
            m_cost_kib: 64,
            t_cost: 1,
            p_cost: 1,
        }
    }

    fn derive(&self, password: &str, salt: &[u8]) -> Result<[u8; HASH_LEN], AuthError> {
        if self.algorithm != "argon2id" {
            return Err(AuthError::Storage(format!("unsupported kdf {}", self.algorithm)));
        }
        let params = Params::new(self.m_cost_kib, self.t_cost, self.p_cost, Some(HASH_LEN))
            .map_err(|e| AuthError::Storage(format!("bad kdf params: {e}")))?;
        let mut out = [0u8; HASH_LEN];
        Argon2::new(Algorithm::Argon2id, Version::V0x13, params)
            .hash_password_into(password.as_bytes(), salt, &mut out)
            .map_err(|e| AuthError::Storage(format!("kdf failed: {e}")))?;
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Account {
    pub account_id: String,
    pub email: String,
    #[serde(with = "hex_bytes")]
    pub password_hash: Vec<u8>,
    #[serde(with = "hex_bytes")]
    pub salt: Vec<u8>,
    pub kdf_params: KdfParams,
    pub role: Role,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hospital_name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionToken {
    pub token_id: String,
    pub account_id: String,
    pub role: Role,
    pub issued_at: i64,
    pub expires_at: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AuthError {
    #[error("forbidden")]
    Forbidden,
    #[error("email already registered")]
    EmailTaken,
    #[error("password must be at least {MIN_PASSWORD_CHARS} characters")]
    WeakPassword,
    #[error("providers require a hospital name")]
    MissingHospital,
    #[error("malformed email address")]
    InvalidEmail,
    #[error("accounts can only be created for PROVIDER or OFFICER roles")]
    InvalidRole,
    #[error("invalid email or password")]
    InvalidCredentials,
    #[error("session expired")]
    TokenExpired,
    #[error("unknown session")]
    TokenUnknown,
    #[error("account storage: {0}")]
    Storage(String),
}

pub fn normalize_email(email: &str) -> Result<String, AuthError> {
    let email = email.trim().to_ascii_lowercase();
    let Some((local, domain)) = email.split_once('@') else {
        return Err(AuthError::InvalidEmail);
    };
    let ok = !local.is_empty()
        && email.len() <= 254
        && !domain.contains('@')
        && domain.contains('.')
        && !domain.starts_with('.')
        && !domain.ends_with('.')
        && !email.chars().any(|c| c.is_whitespace() || c.is_control());
    if ok {
        Ok(email)
    } else {
        Err(AuthError::InvalidEmail)
    }
}

pub fn new_account_id() -> String {
    let mut b = [0u8; 8];
    rand::rngs::OsRng.fill_bytes(&mut b);
    format!("acct-{}", hex::encode(b))
}

fn random_bytes<const N: usize>() -> [u8; N] {
    let mut b = [0u8; N];
    rand::rngs::OsRng.fill_bytes(&mut b);
    b
}

/// Account table, optionally backed by an append-only file.
#[derive(Debug, Default)]
pub struct AccountStore {
    by_email: BTreeMap<String, Account>,
    path: Option<PathBuf>,
}

impl AccountStore {
    pub fn in_memory() -> Self {
        AccountStore::default()
    }

    /// Loads every account line from `path` (if it exists) and appends new
    /// accounts there afterwards.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, AuthError> {
        let path = path.as_ref().to_path_buf();
        let mut store = AccountStore {
            by_email: BTreeMap::new(),
            path: Some(path.clone()),
        };
        let text = match std::fs::read(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(store),
            Err(e) => return Err(AuthError::Storage(e.to_string())),
        };
        for (n, line) in text.split(|&b| b == b'\n').enumerate() {
            if line.is_empty() {
                continue;
            }
            let account: Account = from_canonical_bytes(line)
                .map_err(|e| AuthError::Storage(format!("{}:{}: {e}", path.display(), n + 1)))?;
            store.by_email.insert(account.email.clone(), account);
        }
        Ok(store)
    }

    pub fn get_by_email(&self, email: &str) -> Option<&Account> {
        self.by_email.get(email)
    }

    pub fn get_by_id(&self, account_id: &str) -> Option<&Account> {
        self.by_email.values().find(|a| a.account_id == account_id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Account> {
        self.by_email.values()
    }

    pub fn len(&self) -> usize {
        self.by_email.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_email.is_empty()
    }

    pub fn insert(&mut self, account: Account) -> Result<(), AuthError> {
        if self.by_email.contains_key(&account.email) {
            return Err(AuthError::EmailTaken);
        }
        if let Some(path) = &self.path {
            let mut line = to_canonical_bytes(&account).map_err(|e| AuthError::Storage(e.to_string()))?;
            line.push(b'\n');
            let mut f = open_private_append(path).map_err(|e| AuthError::Storage(e.to_string()))?;
            f.write_all(&line)
                .and_then(|_| f.sync_data())
                .map_err(|e| AuthError::Storage(e.to_string()))?;
        }
        self.by_email.insert(account.email.clone(), account);
        Ok(())
    }
}

/// Builds a new account record with a fresh salt and password hash.
pub fn hash_new_account(
    account_id: &str,
    email: &str,
    password: &str,
    role: Role,
    hospital_name: Option<&str>,
    params: &KdfParams,
) -> Result<Account, AuthError> {
    let email = normalize_email(email)?;
    if password.chars().count() < MIN_PASSWORD_CHARS {
        return Err(AuthError::WeakPassword);
    }
    let hospital_name = match (role, hospital_name.map(str::trim)) {
        (Role::Provider, Some(h)) if !h.is_empty() => Some(h.to_owned()),
        (Role::Provider, _) => return Err(AuthError::MissingHospital),
        _ => None,
    };
    let salt = random_bytes::<SALT_LEN>();
    let hash = params.derive(password, &salt)?;
    Ok(Account {
        account_id: account_id.to_owned(),
        email,
        password_hash: hash.to_vec(),
        salt: salt.to_vec(),
        kdf_params: params.clone(),
        role,
        hospital_name,
    })
}

/// Accounts plus the live session table.
pub struct Authenticator {
    accounts: Mutex<AccountStore>,
    sessions: Mutex<HashMap<String, SessionToken>>,
    params: KdfParams,
    session_secs: i64,
}

impl Authenticator {
    pub fn new(accounts: AccountStore, params: KdfParams) -> Self {
        Authenticator {
            accounts: Mutex::new(accounts),
            sessions: Mutex::new(HashMap::new()),
            params,
            session_secs: DEFAULT_SESSION_SECS,
        }
    }

    pub fn with_session_secs(mut self, secs: i64) -> Self {
        assert!(secs > 0, "session lifetime must be positive");
        self.session_secs = secs;
        self
    }

    pub fn kdf_params(&self) -> &KdfParams {
        &self.params
    }

    /// Validates an account-creation request by `actor` and hashes the
    /// password, without storing anything.
    pub fn prepare_account(
        &self,
        actor: &SessionToken,
        email: &str,
        password: &str,
        role: Role,
        hospital_name: Option<&str>,
    ) -> Result<Account, AuthError> {
        if actor.role != Role::Authority {
            return Err(AuthError::Forbidden);
        }
        if role == Role::Authority {
            return Err(AuthError::InvalidRole);
        }
        let normalized = normalize_email(email)?;
        if self.accounts.lock().unwrap().get_by_email(&normalized).is_some() {
            return Err(AuthError::EmailTaken);
        }
        hash_new_account(&new_account_id(), &normalized, password, role, hospital_name, &self.params)
    }

    pub fn commit_account(&self, account: Account) -> Result<(), AuthError> {
        self.accounts.lock().unwrap().insert(account)
    }

    pub fn create_account(
        &self,
        actor: &SessionToken,
        email: &str,
        password: &str,
        role: Role,
        hospital_name: Option<&str>,
    ) -> Result<Account, AuthError> {
        let account = self.prepare_account(actor, email, password, role, hospital_name)?;
        self.commit_account(account.clone())?;
        Ok(account)
    }

    pub fn all_accounts(&self) -> Vec<Account> {
        self.accounts.lock().unwrap().iter().cloned().collect()
    }

    pub fn account(&self, account_id: &str) -> Option<Account> {
        self.accounts.lock().unwrap().get_by_id(account_id).cloned()
    }

    /// Unknown emails and wrong passwords fail identically, and both pay for
    /// one key derivation.
    pub fn login(&self, email: &str, password: &str, now: i64) -> Result<SessionToken, AuthError> {
        let account = normalize_email(email)
            .ok()
            .and_then(|e| self.accounts.lock().unwrap().get_by_email(&e).cloned());
        let Some(account) = account else {
            let _ = self.params.derive(password, &[0u8; SALT_LEN]);
            return Err(AuthError::InvalidCredentials);
        };
        let derived = account
            .kdf_params
            .derive(password, &account.salt)
            .map_err(|_| AuthError::InvalidCredentials)?;
        if !bool::from(derived.as_slice().ct_eq(&account.password_hash)) {
            return Err(AuthError::InvalidCredentials);
        }
        let token = SessionToken {
            token_id: hex::encode(random_bytes::<32>()),
            account_id: account.account_id,
            role: account.role,
            issued_at: now,
            expires_at: now + self.session_secs,
        };
        self.sessions
            .lock()
            .unwrap()
            .insert(token.token_id.clone(), token.clone());
        Ok(token)
    }

    /// Returns the live session for `token_id`. Tokens are invalid from
    /// `expires_at` onwards.
    pub fn session(&self, token_id: &str, now: i64) -> Result<SessionToken, AuthError> {
        let mut sessions = self.sessions.lock().unwrap();
        let token = sessions.get(token_id).cloned().ok_or(AuthError::TokenUnknown)?;
        if now >= token.expires_at {
            sessions.remove(token_id);
            return Err(AuthError::TokenExpired);
        }
        Ok(token)
    }

    /// AUTHORITY satisfies every role requirement.
    pub fn authorize(&self, token_id: &str, required: Role, now: i64) -> Result<String, AuthError> {
        let token = self.session(token_id, now)?;
        if token.role == required || token.role == Role::Authority {
            Ok(token.account_id)
        } else {
            Err(AuthError::Forbidden)
        }
    }

    /// Like [`Authenticator::authorize`] but accepts any of `roles`.
    pub fn authorize_any(&self, token_id: &str, roles: &[Role], now: i64) -> Result<SessionToken, AuthError> {
        let token = self.session(token_id, now)?;
        if token.role == Role::Authority || roles.contains(&token.role) {
            Ok(token)
        } else {
            Err(AuthError::Forbidden)
        }
    }

    pub fn logout(&self, token_id: &str) {
        self.sessions.lock().unwrap().remove(token_id);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const PW: &str = "correct horse battery";

    fn authority_setup() -> (Authenticator, SessionToken) {
        let mut store = AccountStore::in_memory();
        let root = hash_new_account("root", "root@health.gov", PW, Role::Authority, None, &KdfParams::fast_insecure()).unwrap();
        store.insert(root).unwrap();
        let auth = Authenticator::new(store, KdfParams::fast_insecure());
        let token = auth.login("root@health.gov", PW, 1_000).unwrap();
        (auth, token)
    }

    #[test]
    fn login_round_trip() {
        let (auth, token) = authority_setup();
        assert_eq!(token.role, Role::Authority);
        assert_eq!(token.expires_at - token.issued_at, DEFAULT_SESSION_SECS);
        assert_eq!(token.token_id.len(), 64);
        assert_eq!(auth.login("ROOT@health.gov ", PW, 1).unwrap().account_id, "root");
    }

    #[test]
    fn bad_logins_are_indistinguishable() {
        let (auth, _) = authority_setup();
        let wrong = auth.login("root@health.gov", "wrong password!", 1).unwrap_err();
        let unknown = auth.login("nobody@health.gov", PW, 1).unwrap_err();
        let garbage = auth.login("not-an-email", PW, 1).unwrap_err();
        assert_eq!(wrong, AuthError::InvalidCredentials);
        assert_eq!(wrong, unknown);
        assert_eq!(wrong, garbage);
        assert_eq!(wrong.to_string(), unknown.to_string());
    }

    #[test]
    fn single_char_perturbations_fail() {
        let (auth, _) = authority_setup();
        let chars: Vec<char> = PW.chars().collect();
        for i in 0..chars.len() {
            let mut c = chars.clone();
            c[i] = if c[i] == 'a' { 'b' } else { 'a' };
            let pw: String = c.into_iter().collect();
            assert_eq!(auth.login("root@health.gov", &pw, 1), Err(AuthError::InvalidCredentials));
        }
        assert!(auth.login("root@health.gov", &PW[..PW.len() - 1], 1).is_err());
        assert!(auth.login("root@health.gov", &format!("{PW}x"), 1).is_err());
    }

    #[test]
    fn create_account_rules() {
        let (auth, root) = authority_setup();
        let p = auth
            .create_account(&root, "doc@stmary.org", "longenough1", Role::Provider, Some("St. Mary"))
            .unwrap();
        assert_eq!(p.hospital_name.as_deref(), Some("St. Mary"));
        assert!(p.account_id.starts_with("acct-"));
        assert_eq!(
            auth.create_account(&root, "doc@stmary.org", "longenough1", Role::Officer, None),
            Err(AuthError::EmailTaken)
        );
        assert_eq!(
            auth.create_account(&root, "a@b.org", "short", Role::Officer, None),
            Err(AuthError::WeakPassword)
        );
        assert_eq!(
            auth.create_account(&root, "a@b.org", "longenough1", Role::Provider, None),
            Err(AuthError::MissingHospital)
        );
        assert_eq!(
            auth.create_account(&root, "a@b.org", "longenough1", Role::Provider, Some("  ")),
            Err(AuthError::MissingHospital)
        );
        assert_eq!(
            auth.create_account(&root, "a@b", "longenough1", Role::Officer, None),
            Err(AuthError::InvalidEmail)
        );
        assert_eq!(
            auth.create_account(&root, "a@b.org", "longenough1", Role::Authority, None),
            Err(AuthError::InvalidRole)
        );

        let officer = auth.create_account(&root, "off@border.gov", "longenough1", Role::Officer, None).unwrap();
        let off_token = auth.login(&officer.email, "longenough1", 5).unwrap();
        assert_eq!(
            auth.create_account(&off_token, "x@y.org", "longenough1", Role::Officer, None),
            Err(AuthError::Forbidden)
        );
    }

    #[test]
    fn authorize_rules() {
        let (auth, root) = authority_setup();
        auth.create_account(&root, "doc@h.org", "longenough1", Role::Provider, Some("H")).unwrap();
        let prov = auth.login("doc@h.org", "longenough1", 1_000).unwrap();
        assert_eq!(auth.authorize(&prov.token_id, Role::Officer, 1_000), Err(AuthError::Forbidden));
        assert_eq!(auth.authorize(&prov.token_id, Role::Provider, 1_000).unwrap(), prov.account_id);
        assert_eq!(auth.authorize(&root.token_id, Role::Provider, 1_000).unwrap(), "root");
        assert_eq!(auth.authorize("deadbeef", Role::Provider, 1_000), Err(AuthError::TokenUnknown));
    }

    #[test]
    fn expiry_is_inclusive() {
        let (auth, root) = authority_setup();
        let exp = root.expires_at;
        assert!(auth.authorize(&root.token_id, Role::Authority, exp - 1).is_ok());
        assert_eq!(auth.authorize(&root.token_id, Role::Authority, exp), Err(AuthError::TokenExpired));
        // Once expired the token is gone, even if the clock steps back.
        assert_eq!(auth.authorize(&root.token_id, Role::Authority, exp - 1), Err(AuthError::TokenUnknown));
    }

    #[test]
    fn store_persists_without_plaintext() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("accounts.jsonl");
        let secret = "hunter2-but-longer";
        {
            let mut store = AccountStore::open(&path).unwrap();
            let a = hash_new_account("a1", "x@y.org", secret, Role::Officer, None, &KdfParams::fast_insecure()).unwrap();
            store.insert(a).unwrap();
        }
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(!text.contains(secret));
        assert!(!text.contains(&hex::encode(secret)));
        let reopened = AccountStore::open(&path).unwrap();
        assert_eq!(reopened.len(), 1);
        assert_eq!(reopened.get_by_email("x@y.org").unwrap().account_id, "a1");
        #[cfg(unix)]
        {
            use std::os::unix::fs::PermissionsExt;
            let mode = std::fs::metadata(&path).unwrap().permissions().mode();
            assert_eq!(mode & 0o777, 0o600);
        }
    }
}
