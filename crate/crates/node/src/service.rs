//! The node engine: transaction pool, block production, replicated state and
//! the role-gated operations the HTTP layer exposes.
//!
//! Writes (pool admission, block production, peer ingestion) serialize on a
//! single writer lock. Reads go to an immutable snapshot of the last
//! committed state, swapped atomically after every committed block.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use ed25519_dalek::{SigningKey, VerifyingKey};
use serde::Serialize;
use tracing::{error, info, warn};
use vaxledger_core::auth::{AccountStore, AuthError, Authenticator, SessionToken};
use vaxledger_core::credential::{encode_qr_payload, issue_credential, verify_qr_payload, CredentialStatus};
use vaxledger_core::keys::{load_signing_key, verifying_key_from_hex};
use vaxledger_core::ledger::{append_block, Block, BlockHeader, ChainError, ChainStore, ChainValidator};
use vaxledger_core::registry::{subject_key, IssueRecordPayload, RegistryError, TxError};
use vaxledger_core::{Digest32, PassportRecord, RegistryState, Role, Transaction, TxKind};

use crate::config::{Mode, NodeConfig};
use crate::pool::TxPool;

pub const MAX_BLOCKS_PER_REQUEST: usize = 100;

#[derive(Debug, thiserror::Error)]
pub enum NodeError {
    #[error(transparent)]
    Auth(AuthError),
    #[error("transaction already pending")]
    PoolDuplicate,
    #[error("transaction would fail: {0}")]
    WouldFail(TxError),
    #[error("aadhaar number must be 12 digits with a valid check digit")]
    InvalidAadhaar,
    #[error("operation requires a producer node")]
    NotProducer,
    #[error("block production halted after a persistence failure")]
    Halted,
    #[error("failed to persist block: {0}")]
    PersistFailure(String),
    #[error("invalid block from peer at height {height}: {reason}")]
    InvalidBlockFromPeer { height: u64, reason: String },
    #[error("stored chain is invalid: {0}")]
    InvalidStoredChain(ChainError),
    #[error("chain is empty; initialize the data directory first")]
    EmptyChain,
    #[error("{0}")]
    Setup(String),
}

impl From<AuthError> for NodeError {
    fn from(e: AuthError) -> Self {
        NodeError::Auth(e)
    }
}

impl From<RegistryError> for NodeError {
    fn from(_: RegistryError) -> Self {
        NodeError::InvalidAadhaar
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Receipt {
    pub accepted: bool,
    pub position: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LookupResult {
    pub record: PassportRecord,
    pub verified_at_height: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Rejection {
    pub actor_id: String,
    pub nonce: u64,
    pub kind: TxKind,
    pub error: TxError,
    pub reason: String,
    pub at: i64,
}

#[derive(Debug, Clone)]
pub struct IssueRequest {
    pub aadhaar: String,
    pub full_name: String,
    pub vaccine_name: String,
    pub dose_number: u32,
    pub date: String,
}

/// Committed view served to readers.
#[derive(Debug, Clone, Default)]
pub struct Snapshot {
    pub state: RegistryState,
    pub head: Option<BlockHeader>,
    pub head_id: Option<Digest32>,
}

impl Snapshot {
    pub fn height(&self) -> Option<u64> {
        self.head.as_ref().map(|h| h.height)
    }
}

struct Writer {
    store: ChainStore,
    validator: ChainValidator,
    pool: TxPool,
    /// Committed state plus every pooled transaction.
    pending: RegistryState,
}

pub struct Node {
    config: NodeConfig,
    auth: Authenticator,
    producer_key: Option<SigningKey>,
    credential_key: Option<SigningKey>,
    credential_pub: VerifyingKey,
    writer: Mutex<Writer>,
    blocks: RwLock<Vec<Block>>,
    snapshot: RwLock<Arc<Snapshot>>,
    rejections: Mutex<Vec<Rejection>>,
    halted: AtomicBool,
}

pub fn unix_now() -> i64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs() as i64)
        .unwrap_or(0)
}

impl Node {
    pub fn open(config: NodeConfig) -> Result<Node, NodeError> {
        config.validate().map_err(|e| NodeError::Setup(e.to_string()))?;
        let setup = |e: &dyn std::fmt::Display| NodeError::Setup(e.to_string());

        let (producer_key, credential_key, producer_pub, credential_pub) = match config.mode {
            Mode::Producer => {
                let pk = load_signing_key(config.producer_key_path.as_ref().unwrap()).map_err(|e| setup(&e))?;
                let ck = load_signing_key(config.credential_key_path.as_ref().unwrap()).map_err(|e| setup(&e))?;
                let (pp, cp) = (pk.verifying_key(), ck.verifying_key());
                (Some(pk), Some(ck), pp, cp)
            }
            Mode::Verifier => {
                let pp = verifying_key_from_hex(config.producer_pubkey.as_deref().unwrap()).map_err(|e| setup(&e))?;
                let cp = verifying_key_from_hex(config.credential_pubkey.as_deref().unwrap()).map_err(|e| setup(&e))?;
                (None, None, pp, cp)
            }
        };

        std::fs::create_dir_all(&config.data_dir).map_err(|e| setup(&e))?;
        let (store, recovered) = ChainStore::open(config.chain_path()).map_err(|e| setup(&e))?;
        if recovered.truncated > 0 {
            warn!(bytes = recovered.truncated, "recovered from torn chain write");
        }
        if config.mode == Mode::Producer && recovered.blocks.is_empty() {
            return Err(NodeError::EmptyChain);
        }
        let mut validator = ChainValidator::new(producer_pub);
        for block in &recovered.blocks {
            validator.push(block).map_err(NodeError::InvalidStoredChain)?;
        }

        let accounts = match config.mode {
            Mode::Producer => AccountStore::open(config.accounts_path()).map_err(|e| setup(&e))?,
            Mode::Verifier => AccountStore::in_memory(),
        };
        let kdf = config.kdf.clone().unwrap_or_default();
        let auth = Authenticator::new(accounts, kdf).with_session_secs(config.session_secs);

        let pending = validator.state().clone();
        let snapshot = Snapshot {
            state: validator.state().clone(),
            head_id: validator.head().map(BlockHeader::block_id),
            head: validator.head().cloned(),
        };
        info!(
            mode = ?config.mode,
            height = ?snapshot.height(),
            "node opened"
        );
        let node = Node {
            config,
            auth,
            producer_key,
            credential_key,
            credential_pub,
            writer: Mutex::new(Writer {
                store,
                validator,
                pool: TxPool::new(),
                pending,
            }),
            blocks: RwLock::new(recovered.blocks),
            snapshot: RwLock::new(Arc::new(snapshot)),
            rejections: Mutex::new(Vec::new()),
            halted: AtomicBool::new(false),
        };
        if node.config.mode == Mode::Producer {
            node.reconcile_accounts(unix_now());
        }
        Ok(node)
    }

    /// Re-enqueues role registrations for accounts whose transaction never
    /// made it into a block (e.g. the process died with it in the pool).
    fn reconcile_accounts(&self, now: i64) {
        let mut w = self.writer.lock().unwrap();
        let accounts = self.auth.all_accounts();
        let Some(authority) = accounts
            .iter()
            .find(|a| a.role == Role::Authority && w.pending.role_of(&a.account_id) == Some(Role::Authority))
            .map(|a| a.account_id.clone())
        else {
            return;
        };
        for account in accounts.iter().filter(|a| a.role != Role::Authority) {
            if w.pending.role_of(&account.account_id).is_some() {
                continue;
            }
            let nonce = w.pending.next_nonce(&authority);
            let tx = registration_tx(&authority, nonce, account.role, &account.account_id, account.hospital_name.as_deref(), now);
            match w.pending.apply_in_place(&tx) {
                Ok(()) => {
                    info!(account_id = %account.account_id, "re-enqueued missing role registration");
                    w.pool.push(tx);
                }
                Err(e) => warn!(account_id = %account.account_id, error = %e, "cannot reconcile account"),
            }
        }
    }

    pub fn config(&self) -> &NodeConfig {
        &self.config
    }

    pub fn mode(&self) -> Mode {
        self.config.mode
    }

    pub fn auth(&self) -> &Authenticator {
        &self.auth
    }

    pub fn credential_pubkey(&self) -> VerifyingKey {
        self.credential_pub
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.snapshot.read().unwrap().clone()
    }

    pub fn head(&self) -> Option<BlockHeader> {
        self.snapshot().head.clone()
    }

    pub fn next_height(&self) -> u64 {
        self.snapshot().height().map_or(0, |h| h + 1)
    }

    pub fn pool_len(&self) -> usize {
        self.writer.lock().unwrap().pool.len()
    }

    pub fn is_halted(&self) -> bool {
        self.halted.load(Ordering::SeqCst)
    }

    pub fn blocks(&self, from: u64, limit: usize) -> Vec<Block> {
        let blocks = self.blocks.read().unwrap();
        let start = usize::try_from(from).unwrap_or(usize::MAX).min(blocks.len());
        let end = start.saturating_add(limit.min(MAX_BLOCKS_PER_REQUEST)).min(blocks.len());
        blocks[start..end].to_vec()
    }

    fn require_producer(&self) -> Result<(), NodeError> {
        match self.config.mode {
            Mode::Producer => Ok(()),
            Mode::Verifier => Err(NodeError::NotProducer),
        }
    }

    pub fn login(&self, email: &str, password: &str, now: i64) -> Result<SessionToken, NodeError> {
        Ok(self.auth.login(email, password, now)?)
    }

    /// Admits `tx` on behalf of the session's account.
    pub fn submit_tx(&self, tx: Transaction, token_id: &str, now: i64) -> Result<Receipt, NodeError> {
        let account_id = self.auth.authorize(token_id, tx.kind.required_role(), now)?;
        if account_id != tx.actor_id {
            return Err(NodeError::Auth(AuthError::Forbidden));
        }
        if tx.kind == TxKind::Bootstrap {
            return Err(NodeError::WouldFail(TxError::BootstrapOutsideGenesis));
        }
        let mut w = self.writer.lock().unwrap();
        self.enqueue_locked(&mut w, tx)
    }

    fn enqueue_locked(&self, w: &mut Writer, tx: Transaction) -> Result<Receipt, NodeError> {
        self.require_producer()?;
        if w.pool.contains(&tx) {
            return Err(NodeError::PoolDuplicate);
        }
        w.pending.apply_in_place(&tx).map_err(NodeError::WouldFail)?;
        let position = w.pool.push(tx).expect("pool key checked above");
        Ok(Receipt {
            accepted: true,
            position,
        })
    }

    /// Places `tx` in the pool without the admission dry-run. Block
    /// production still applies it and drops it if it fails.
    #[doc(hidden)]
    pub fn enqueue_unchecked(&self, tx: Transaction) {
        let mut w = self.writer.lock().unwrap();
        let _ = w.pending.apply_in_place(&tx);
        w.pool.push(tx);
    }

    /// Builds and submits an ISSUE_RECORD for the calling provider.
    pub fn issue_record(&self, token_id: &str, req: &IssueRequest, now: i64) -> Result<(Receipt, Digest32), NodeError> {
        self.require_producer()?;
        let actor = self.auth.authorize(token_id, Role::Provider, now)?;
        let mut w = self.writer.lock().unwrap();
        let key = subject_key(&req.aadhaar, &w.pending.chain_salt)?;
        let payload = IssueRecordPayload {
            subject_key: key,
            full_name: req.full_name.trim().to_owned(),
            vaccine_name: req.vaccine_name.trim().to_owned(),
            dose_number: req.dose_number,
            date: req.date.clone(),
        };
        let nonce = w.pending.next_nonce(&actor);
        let tx = Transaction::issue_record(&actor, nonce, &payload, now);
        let receipt = self.enqueue_locked(&mut w, tx)?;
        Ok((receipt, key))
    }

    /// Creates a PROVIDER or OFFICER account and enqueues its on-chain role
    /// registration. The account is stored only if the registration is
    /// admitted.
    pub fn create_account(
        &self,
        token_id: &str,
        email: &str,
        password: &str,
        role: Role,
        hospital_name: Option<&str>,
        now: i64,
    ) -> Result<(vaxledger_core::auth::Account, Receipt), NodeError> {
        self.require_producer()?;
        self.auth.authorize(token_id, Role::Authority, now)?;
        let session = self.auth.session(token_id, now)?;
        let account = self.auth.prepare_account(&session, email, password, role, hospital_name)?;

        let mut w = self.writer.lock().unwrap();
        let nonce = w.pending.next_nonce(&session.account_id);
        let tx = registration_tx(&session.account_id, nonce, role, &account.account_id, account.hospital_name.as_deref(), now);
        if w.pool.contains(&tx) {
            return Err(NodeError::PoolDuplicate);
        }
        let mut trial = w.pending.clone();
        trial.apply_in_place(&tx).map_err(NodeError::WouldFail)?;
        self.auth.commit_account(account.clone())?;
        w.pending = trial;
        let position = w.pool.push(tx).expect("pool key checked above");
        info!(account_id = %account.account_id, role = %role, "account created");
        Ok((
            account,
            Receipt {
                accepted: true,
                position,
            },
        ))
    }

    /// Drains the pool into a new block. Returns `None` when there is
    /// nothing to commit.
    pub fn produce_block(&self, now: i64) -> Result<Option<Block>, NodeError> {
        self.require_producer()?;
        if self.is_halted() {
            return Err(NodeError::Halted);
        }
        let key = self.producer_key.as_ref().expect("producer has a key");
        let mut w = self.writer.lock().unwrap();
        if w.pool.is_empty() {
            return Ok(None);
        }
        let drained = w.pool.drain();
        let mut next_state = w.validator.state().clone();
        let mut survivors = Vec::with_capacity(drained.len());
        for tx in drained {
            match next_state.apply_in_place(&tx) {
                Ok(()) => survivors.push(tx),
                Err(e) => {
                    warn!(actor = %tx.actor_id, nonce = tx.nonce, kind = %tx.kind, error = %e, "dropping transaction");
                    self.rejections.lock().unwrap().push(Rejection {
                        actor_id: tx.actor_id.clone(),
                        nonce: tx.nonce,
                        kind: tx.kind,
                        reason: e.to_string(),
                        error: e,
                        at: now,
                    });
                }
            }
        }
        if survivors.is_empty() {
            w.pending = next_state;
            return Ok(None);
        }

        let head = w.validator.head().expect("producer chain has genesis").clone();
        let timestamp = now.max(head.timestamp);
        let block = append_block(&head, survivors.clone(), next_state.state_root(), key, timestamp)
            .map_err(|e| NodeError::PersistFailure(e.to_string()))?;
        let mut validator = w.validator.clone();
        validator
            .push(&block)
            .map_err(|e| NodeError::PersistFailure(format!("self-check failed: {e}")))?;

        if let Err(e) = w.store.append(&block) {
            error!(error = %e, height = block.height(), "block persistence failed; halting production");
            self.halted.store(true, Ordering::SeqCst);
            w.pool.restore(survivors);
            return Err(NodeError::PersistFailure(e.to_string()));
        }
        // Admission holds the same lock, so nothing arrived since the drain.
        debug_assert!(w.pool.is_empty());
        w.pending = validator.state().clone();
        w.validator = validator;
        self.commit_locked(&w, &block);
        info!(height = block.height(), txs = block.transactions.len(), "block produced");
        Ok(Some(block))
    }

    fn commit_locked(&self, w: &Writer, block: &Block) {
        self.blocks.write().unwrap().push(block.clone());
        let snapshot = Snapshot {
            state: w.validator.state().clone(),
            head: Some(block.header.clone()),
            head_id: Some(block.block_id()),
        };
        *self.snapshot.write().unwrap() = Arc::new(snapshot);
    }

    /// Validates and persists blocks received from a peer, in order. Stops
    /// at the first invalid block without persisting it.
    pub fn ingest_blocks(&self, blocks: &[Block]) -> Result<usize, NodeError> {
        let mut w = self.writer.lock().unwrap();
        let mut count = 0;
        for block in blocks {
            let mut validator = w.validator.clone();
            if let Err(e) = validator.push(block) {
                error!(
                    security_event = true,
                    height = e.height(),
                    reason = e.reason(),
                    detail = %e,
                    "peer served an invalid block; refusing it"
                );
                return Err(NodeError::InvalidBlockFromPeer {
                    height: e.height(),
                    reason: e.reason().to_owned(),
                });
            }
            w.store
                .append(block)
                .map_err(|e| NodeError::PersistFailure(e.to_string()))?;
            w.pending = validator.state().clone();
            w.validator = validator;
            self.commit_locked(&w, block);
            count += 1;
        }
        Ok(count)
    }

    pub fn officer_lookup(&self, aadhaar: &str, token_id: &str, now: i64) -> Result<Option<LookupResult>, NodeError> {
        self.auth.authorize(token_id, Role::Officer, now)?;
        let snap = self.snapshot();
        let key = subject_key(aadhaar, &snap.state.chain_salt)?;
        Ok(snap.state.lookup(&key).map(|record| LookupResult {
            record: record.clone(),
            verified_at_height: snap.height().unwrap_or(0),
        }))
    }

    /// Signs a credential for the current on-chain record.
    pub fn credential(&self, aadhaar: &str, token_id: &str, now: i64) -> Result<Option<String>, NodeError> {
        self.auth.authorize_any(token_id, &[Role::Provider, Role::Officer], now)?;
        let key = self.credential_key.as_ref().ok_or(NodeError::NotProducer)?;
        let snap = self.snapshot();
        let subject = subject_key(aadhaar, &snap.state.chain_salt)?;
        let Some(record) = snap.state.lookup(&subject) else {
            return Ok(None);
        };
        let head_id = snap.head_id.unwrap_or(Digest32::ZERO);
        let credential = issue_credential(record, head_id, key, now).map_err(|e| NodeError::Setup(e.to_string()))?;
        Ok(Some(encode_qr_payload(&credential)))
    }

    pub fn verify_payload(&self, qr_payload: &str, now: i64) -> CredentialStatus {
        verify_qr_payload(qr_payload, &self.credential_pub, now, self.config.validity_window_secs())
    }

    pub fn rejections(&self, token_id: &str, now: i64) -> Result<Vec<Rejection>, NodeError> {
        self.auth.authorize(token_id, Role::Authority, now)?;
        Ok(self.rejections.lock().unwrap().clone())
    }
}

pub fn registration_tx(
    authority: &str,
    nonce: u64,
    role: Role,
    account_id: &str,
    hospital_name: Option<&str>,
    now: i64,
) -> Transaction {
    match role {
        Role::Provider => Transaction::register_provider(authority, nonce, account_id, hospital_name.unwrap_or_default(), now),
        _ => Transaction::register_officer(authority, nonce, account_id, now),
    }
}
