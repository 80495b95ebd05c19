//! Pull-based replication from a producer.

use std::sync::Arc;

use tracing::{debug, info};
use vaxledger_core::ledger::Block;

use crate::service::{Node, NodeError, MAX_BLOCKS_PER_REQUEST};

#[derive(Debug, thiserror::Error)]
pub enum SyncError {
    #[error("peer unreachable: {0}")]
    PeerUnreachable(String),
    #[error("invalid block from peer at height {height}: {reason}")]
    InvalidBlockFromPeer { height: u64, reason: String },
    #[error(transparent)]
    Local(NodeError),
}

pub fn blocks_url(peer_url: &str, from: u64, limit: usize) -> String {
    format!("{}/blocks?from={from}&limit={limit}", peer_url.trim_end_matches('/'))
}

/// Fetches and validates every block the peer has beyond the local head.
/// Returns the number of blocks persisted.
pub async fn sync_from_peer(node: &Arc<Node>, client: &reqwest::Client, peer_url: &str) -> Result<usize, SyncError> {
    let mut total = 0;
    loop {
        let from = node.next_height();
        let url = blocks_url(peer_url, from, MAX_BLOCKS_PER_REQUEST);
        let resp = client
            .get(&url)
            .send()
            .await
            .map_err(|e| SyncError::PeerUnreachable(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(SyncError::PeerUnreachable(format!("GET {url}: {}", resp.status())));
        }
        let bytes = resp
            .bytes()
            .await
            .map_err(|e| SyncError::PeerUnreachable(e.to_string()))?;
        let batch: Vec<Block> = match serde_json::from_slice(&bytes) {
            Ok(b) => b,
            Err(e) => {
                tracing::error!(security_event = true, height = from, error = %e, "peer served an undecodable block batch");
                return Err(SyncError::InvalidBlockFromPeer {
                    height: from,
                    reason: "undecodable".into(),
                });
            }
        };
        if batch.is_empty() {
            break;
        }
        let fetched = batch.len();
        let worker = node.clone();
        let ingested = tokio::task::spawn_blocking(move || worker.ingest_blocks(&batch))
            .await
            .map_err(|e| SyncError::Local(NodeError::Setup(e.to_string())))?;
        match ingested {
            Ok(n) => total += n,
            Err(NodeError::InvalidBlockFromPeer { height, reason }) => {
                return Err(SyncError::InvalidBlockFromPeer { height, reason });
            }
            Err(e) => return Err(SyncError::Local(e)),
        }
        debug!(from, fetched, "ingested batch");
        if fetched < MAX_BLOCKS_PER_REQUEST {
            break;
        }
    }
    if total > 0 {
        info!(blocks = total, height = ?node.snapshot().height(), "synced from peer");
    }
    Ok(total)
}
