#![allow(dead_code)]

use ed25519_dalek::SigningKey;
use vaxledger_core::codec::{verhoeff_check_digit, Digest32};
use vaxledger_core::ledger::{append_block, make_genesis, Block};
use vaxledger_core::registry::{subject_key, IssueRecordPayload, RegistryState, Transaction};

pub const SALT: &[u8] = b"fixture-salt-16b";
pub const ROOT: &str = "root";
pub const PRODUCER: &str = "authority-node";

pub fn producer_key() -> SigningKey {
    SigningKey::from_bytes(&[42u8; 32])
}

pub fn aadhaar(n: u64) -> String {
    let base = format!("{:011}", 30_000_000_000u64 + n * 7919);
    format!("{base}{}", verhoeff_check_digit(&base).unwrap())
}

pub fn genesis() -> Block {
    let key = producer_key();
    make_genesis(SALT, &[ROOT.to_string()], &[key.verifying_key()], PRODUCER, &key, 1_600_000_000).unwrap()
}

/// Deterministic chain: block 1 registers providers and an officer, later
/// blocks issue `per_block` records each.
pub fn build_chain(blocks: usize, per_block: usize) -> Vec<Block> {
    let key = producer_key();
    let mut chain = vec![genesis()];
    let mut state = RegistryState::default();
    state.apply_block(&chain[0]).unwrap();
    let mut root_nonce = 0;
    let mut prov_nonce = [0u64; 2];
    let mut subject = 0u64;
    for h in 1..blocks {
        let ts = 1_600_000_000 + h as i64 * 5;
        let txs: Vec<Transaction> = if h == 1 {
            let mut v = Vec::new();
            for (i, hosp) in ["Apollo Clinic", "St. Mary"].iter().enumerate() {
                root_nonce += 1;
                v.push(Transaction::register_provider(ROOT, root_nonce, &format!("prov-{i}"), hosp, ts));
            }
            root_nonce += 1;
            v.push(Transaction::register_officer(ROOT, root_nonce, "officer-0", ts));
            v
        } else {
            (0..per_block)
                .map(|i| {
                    let p = i % 2;
                    prov_nonce[p] += 1;
                    subject += 1;
                    let payload = IssueRecordPayload {
                        subject_key: subject_key(&aadhaar(subject), SALT).unwrap(),
                        full_name: format!("Traveler {subject}"),
                        vaccine_name: if subject.is_multiple_of(3) { "Covaxin" } else { "Covishield" }.into(),
                        dose_number: 1,
                        date: "2021-07-15".into(),
                    };
                    Transaction::issue_record(&format!("prov-{p}"), prov_nonce[p], &payload, ts)
                })
                .collect()
        };
        let mut next = state.clone();
        for tx in &txs {
            next.apply_in_place(tx).unwrap();
        }
        let block = append_block(&chain.last().unwrap().header, txs, next.state_root(), &key, ts).unwrap();
        chain.push(block);
        state = next;
    }
    chain
}

pub fn chain_bytes(chain: &[Block]) -> Vec<u8> {
    let mut out = Vec::new();
    for b in chain {
        out.extend(b.canonical_bytes());
        out.push(b'\n');
    }
    out
}

/// Height of the line containing byte `offset` (the newline belongs to its line).
pub fn line_of(bytes: &[u8], offset: usize) -> u64 {
    bytes[..offset].iter().filter(|&&b| b == b'\n').count() as u64
}

pub fn zero() -> Digest32 {
    Digest32::ZERO
}
