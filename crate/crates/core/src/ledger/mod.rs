//! Hash-chained blocks with Merkle commitments to transactions and state.

mod block;
mod merkle;
mod store;

pub use block::{
    append_block, make_genesis, tx_root, validate_chain, Block, BlockError, BlockHeader, ChainError,
    ChainValidator,
};
pub use merkle::{merkle_prove, merkle_root, merkle_verify, MerkleError, MerkleProof, Side};
pub use store::{parse_chain_bytes, recover_chain_bytes, ChainStore, Recovered, StoreError};
