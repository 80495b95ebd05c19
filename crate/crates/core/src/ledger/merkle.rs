//! Binary SHA-256 Merkle trees.
//!
//! Parent nodes are `sha256(left || right)`. A level with an odd number of
//! nodes duplicates its last node. Every tree has at least one pairing round,
//! so a single leaf `h` has root `sha256(h || h)`. The empty tree's root is
//! `sha256("")`.

use serde::{Deserialize, Serialize};

use crate::codec::{hash_concat, hash_sha256, Digest32};

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum MerkleError {
    #[error("leaf index {index} out of range for {len} leaves")]
    IndexOutOfRange { index: usize, len: usize },
}

/// Which side of the running hash a sibling sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MerkleProof {
    pub leaf_index: u64,
    pub siblings: Vec<Digest32>,
    pub directions: Vec<Side>,
}

fn parent(left: &Digest32, right: &Digest32) -> Digest32 {
    hash_concat(&[left.as_bytes(), right.as_bytes()])
}

fn next_level(level: &[Digest32]) -> Vec<Digest32> {
    level
        .chunks(2)
        .map(|pair| match pair {
            [l, r] => parent(l, r),
            [only] => parent(only, only),
            _ => unreachable!(),
        })
        .collect()
}

pub fn merkle_root(leaves: &[Digest32]) -> Digest32 {
    if leaves.is_empty() {
        return hash_sha256(b"");
    }
    let mut level = next_level(leaves);
    while level.len() > 1 {
        level = next_level(&level);
    }
    level[0]
}

pub fn merkle_prove(leaves: &[Digest32], index: usize) -> Result<MerkleProof, MerkleError> {
    if index >= leaves.len() {
        return Err(MerkleError::IndexOutOfRange {
            index,
            len: leaves.len(),
        });
    }
    let mut siblings = Vec::new();
    let mut directions = Vec::new();
    let mut level = leaves.to_vec();
    let mut pos = index;
    loop {
        let (sibling, side) = if pos.is_multiple_of(2) {
            (*level.get(pos + 1).unwrap_or(&level[pos]), Side::Right)
        } else {
            (level[pos - 1], Side::Left)
        };
        siblings.push(sibling);
        directions.push(side);
        level = next_level(&level);
        pos /= 2;
        if level.len() == 1 {
            break;
        }
    }
    Ok(MerkleProof {
        leaf_index: index as u64,
        siblings,
        directions,
    })
}

/// Folds `leaf` up through the proof and compares against `root`. The
/// direction flags must also agree with the bits of `leaf_index`.
pub fn merkle_verify(leaf: &Digest32, proof: &MerkleProof, root: &Digest32) -> bool {
    if proof.siblings.len() != proof.directions.len() || proof.siblings.is_empty() {
        return false;
    }
    if proof.siblings.len() < 64 && proof.leaf_index >> proof.siblings.len() != 0 {
        return false;
    }
    let mut acc = *leaf;
    for (depth, (sibling, side)) in proof.siblings.iter().zip(&proof.directions).enumerate() {
        let bit_is_left_child = (proof.leaf_index >> depth) & 1 == 0;
        acc = match side {
            Side::Right if bit_is_left_child => parent(&acc, sibling),
            Side::Left if !bit_is_left_child => parent(sibling, &acc),
            _ => return false,
        };
    }
    acc == *root
}
