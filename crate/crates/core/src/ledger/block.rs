use ed25519_dalek::{Signature, Signer, SigningKey, VerifyingKey};
use serde::{Deserialize, Serialize};

use crate::codec::{encode_canonical, hash_sha256, hex64, to_canonical_bytes, to_canonical_value, CanonicalValue, Digest32};
use crate::ledger::merkle::merkle_root;
use crate::registry::{BootstrapPayload, RegistryState, Transaction, TxError, TxKind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockHeader {
    pub height: u64,
    pub prev_hash: Digest32,
    pub tx_root: Digest32,
    pub state_root: Digest32,
    pub timestamp: i64,
    pub producer_id: String,
    #[serde(with = "hex64")]
    pub signature: [u8; 64],
}

impl BlockHeader {
    /// Canonical encoding of every header field except `signature`.
    pub fn signing_bytes(&self) -> Vec<u8> {
        let mut value = to_canonical_value(self).expect("headers are encodable");
        if let CanonicalValue::Map(m) = &mut value {
            m.remove("signature");
        }
        encode_canonical(&value)
    }

    pub fn block_id(&self) -> Digest32 {
        hash_sha256(&to_canonical_bytes(self).expect("headers are encodable"))
    }

    fn sign(&mut self, key: &SigningKey) {
        self.signature = key.sign(&self.signing_bytes()).to_bytes();
    }

    pub fn verify_signature(&self, key: &VerifyingKey) -> bool {
        let sig = Signature::from_bytes(&self.signature);
        key.verify_strict(&self.signing_bytes(), &sig).is_ok()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Block {
    pub header: BlockHeader,
    pub transactions: Vec<Transaction>,
}

impl Block {
    pub fn block_id(&self) -> Digest32 {
        self.header.block_id()
    }

    pub fn height(&self) -> u64 {
        self.header.height
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        to_canonical_bytes(self).expect("blocks are encodable")
    }
}

pub fn tx_root(txs: &[Transaction]) -> Digest32 {
    let leaves: Vec<Digest32> = txs.iter().map(Transaction::leaf_hash).collect();
    merkle_root(&leaves)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BlockError {
    #[error("genesis requires at least one authority")]
    EmptyAuthoritySet,
    #[error("blocks must carry at least one transaction")]
    EmptyBlock,
    #[error("timestamp {got} precedes parent timestamp {parent}")]
    TimestampRegression { parent: i64, got: i64 },
    #[error("bootstrap rejected: {0}")]
    Bootstrap(TxError),
}

/// Builds the height-0 block. Its single BOOTSTRAP transaction publishes the
/// authority account ids, the authority public keys and the chain salt.
pub fn make_genesis(
    chain_salt: &[u8],
    authority_ids: &[String],
    authority_pubkeys: &[VerifyingKey],
    producer_id: &str,
    producer_key: &SigningKey,
    timestamp: i64,
) -> Result<Block, BlockError> {
    if authority_pubkeys.is_empty() || authority_ids.is_empty() {
        return Err(BlockError::EmptyAuthoritySet);
    }
    let payload = BootstrapPayload {
        authority_ids: authority_ids.to_vec(),
        authority_pubkeys: authority_pubkeys.iter().map(|k| hex::encode(k.as_bytes())).collect(),
        chain_salt: chain_salt.to_vec(),
    };
    let tx = Transaction::new(TxKind::Bootstrap, producer_id, 1, &payload, timestamp);
    let mut state = RegistryState::default();
    state.apply_in_place(&tx).map_err(BlockError::Bootstrap)?;
    let txs = vec![tx];
    let mut header = BlockHeader {
        height: 0,
        prev_hash: Digest32::ZERO,
        tx_root: tx_root(&txs),
        state_root: state.state_root(),
        timestamp,
        producer_id: producer_id.to_owned(),
        signature: [0u8; 64],
    };
    header.sign(producer_key);
    Ok(Block {
        header,
        transactions: txs,
    })
}

/// Builds the successor of `head`. `state_root` is the root after applying
/// `txs`; the ledger does not execute transactions itself.
pub fn append_block(
    head: &BlockHeader,
    txs: Vec<Transaction>,
    state_root: Digest32,
    producer_key: &SigningKey,
    timestamp: i64,
) -> Result<Block, BlockError> {
    if txs.is_empty() {
        return Err(BlockError::EmptyBlock);
    }
    if timestamp < head.timestamp {
        return Err(BlockError::TimestampRegression {
            parent: head.timestamp,
            got: timestamp,
        });
    }
    let mut header = BlockHeader {
        height: head.height + 1,
        prev_hash: head.block_id(),
        tx_root: tx_root(&txs),
        state_root,
        timestamp,
        producer_id: head.producer_id.clone(),
        signature: [0u8; 64],
    };
    header.sign(producer_key);
    Ok(Block {
        header,
        transactions: txs,
    })
}

/// First failure found while validating a chain. `height` is always the
/// position in the chain being checked.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ChainError {
    #[error("block at position {expected} claims height {found}")]
    BadHeight { expected: u64, found: u64 },
    #[error("broken hash link at height {0}")]
    BrokenHashLink(u64),
    #[error("bad producer signature at height {0}")]
    BadSignature(u64),
    #[error("transaction root mismatch at height {0}")]
    BadTxRoot(u64),
    #[error("state root mismatch at height {0}")]
    BadStateRoot(u64),
    #[error("timestamp regression at height {0}")]
    TimestampRegression(u64),
    #[error("transaction {tx_index} at height {height} failed: {inner}")]
    ReplayFailed { height: u64, tx_index: usize, inner: TxError },
    #[error("undecodable block at height {height}: {reason}")]
    Corrupt { height: u64, reason: String },
}

impl ChainError {
    pub fn height(&self) -> u64 {
        match self {
            ChainError::BadHeight { expected, .. } => *expected,
            ChainError::BrokenHashLink(h)
            | ChainError::BadSignature(h)
            | ChainError::BadTxRoot(h)
            | ChainError::BadStateRoot(h)
            | ChainError::TimestampRegression(h) => *h,
            ChainError::ReplayFailed { height, .. } | ChainError::Corrupt { height, .. } => *height,
        }
    }

    pub fn reason(&self) -> &'static str {
        match self {
            ChainError::BadHeight { .. } => "bad_height",
            ChainError::BrokenHashLink(_) => "broken_hash_link",
            ChainError::BadSignature(_) => "bad_signature",
            ChainError::BadTxRoot(_) => "bad_tx_root",
            ChainError::BadStateRoot(_) => "bad_state_root",
            ChainError::TimestampRegression(_) => "timestamp_regression",
            ChainError::ReplayFailed { .. } => "replay_failed",
            ChainError::Corrupt { .. } => "corrupt",
        }
    }
}

/// Incremental chain checker. Feeding blocks one at a time performs the same
/// checks as [`validate_chain`] and keeps the replayed state.
#[derive(Debug, Clone)]
pub struct ChainValidator {
    producer_key: VerifyingKey,
    state: RegistryState,
    head: Option<BlockHeader>,
}

impl ChainValidator {
    pub fn new(producer_key: VerifyingKey) -> Self {
        ChainValidator {
            producer_key,
            state: RegistryState::default(),
            head: None,
        }
    }

    pub fn state(&self) -> &RegistryState {
        &self.state
    }

    pub fn into_state(self) -> RegistryState {
        self.state
    }

    pub fn head(&self) -> Option<&BlockHeader> {
        self.head.as_ref()
    }

    pub fn next_height(&self) -> u64 {
        self.head.as_ref().map_or(0, |h| h.height + 1)
    }

    /// Checks `block` as the next block. On error the validator is unchanged.
    pub fn push(&mut self, block: &Block) -> Result<(), ChainError> {
        let expected = self.next_height();
        let header = &block.header;
        if header.height != expected {
            return Err(ChainError::BadHeight {
                expected,
                found: header.height,
            });
        }
        let expected_prev = self.head.as_ref().map_or(Digest32::ZERO, BlockHeader::block_id);
        if header.prev_hash != expected_prev {
            return Err(ChainError::BrokenHashLink(expected));
        }
        if !header.verify_signature(&self.producer_key) {
            return Err(ChainError::BadSignature(expected));
        }
        if let Some(prev) = &self.head {
            if header.timestamp < prev.timestamp {
                return Err(ChainError::TimestampRegression(expected));
            }
        }
        if header.tx_root != tx_root(&block.transactions) {
            return Err(ChainError::BadTxRoot(expected));
        }
        let mut next = self.state.clone();
        next.apply_block(block).map_err(|(tx_index, inner)| ChainError::ReplayFailed {
            height: expected,
            tx_index,
            inner,
        })?;
        if next.state_root() != header.state_root {
            return Err(ChainError::BadStateRoot(expected));
        }
        self.state = next;
        self.head = Some(header.clone());
        Ok(())
    }
}

/// Validates a full chain from genesis and returns the replayed state.
pub fn validate_chain(blocks: &[Block], producer_key: &VerifyingKey) -> Result<RegistryState, ChainError> {
    let mut v = ChainValidator::new(*producer_key);
    for block in blocks {
        v.push(block)?;
    }
    Ok(v.into_state())
}
