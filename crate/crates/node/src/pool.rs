use std::collections::HashSet;

use vaxledger_core::Transaction;

/// FIFO of pending transactions, unique by `(actor_id, nonce)`.
#[derive(Debug, Default)]
pub struct TxPool {
    pending: Vec<Transaction>,
    keys: HashSet<(String, u64)>,
}

impl TxPool {
    pub fn new() -> Self {
        TxPool::default()
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    pub fn contains(&self, tx: &Transaction) -> bool {
        self.keys.contains(&(tx.actor_id.clone(), tx.nonce))
    }

    /// Appends `tx`, returning its position, or `None` if the key is taken.
    pub fn push(&mut self, tx: Transaction) -> Option<usize> {
        if !self.keys.insert((tx.actor_id.clone(), tx.nonce)) {
            return None;
        }
        self.pending.push(tx);
        Some(self.pending.len() - 1)
    }

    pub fn drain(&mut self) -> Vec<Transaction> {
        self.keys.clear();
        std::mem::take(&mut self.pending)
    }

    /// Puts drained transactions back at the front, ahead of anything that
    /// arrived since.
    pub fn restore(&mut self, txs: Vec<Transaction>) {
        let later = std::mem::take(&mut self.pending);
        self.keys.clear();
        for tx in txs.into_iter().chain(later) {
            self.push(tx);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transaction> {
        self.pending.iter()
    }
}
