#![allow(dead_code)]

use std::sync::Arc;

use tempfile::TempDir;
use tokio::sync::oneshot;
use vaxledger_core::auth::KdfParams;
use vaxledger_core::codec::verhoeff_check_digit;
use vaxledger_core::ledger::Block;
use vaxledger_node::init::{init_data_dir, InitOutput};
use vaxledger_node::service::{unix_now, IssueRequest};
use vaxledger_node::{Node, NodeConfig};
use vaxledger_core::Role;

pub const ROOT_EMAIL: &str = "root@health.example.org";
pub const ROOT_PASSWORD: &str = "root-passphrase-9731";
pub const PROVIDER_PASSWORD: &str = "provider-passphrase-4410";
pub const OFFICER_PASSWORD: &str = "officer-passphrase-2277";

pub fn aadhaar(n: u64) -> String {
    let base = format!("{:011}", 40_000_000_000u64 + n * 7919);
    format!("{base}{}", verhoeff_check_digit(&base).unwrap())
}

pub struct Producer {
    pub dir: TempDir,
    pub init: InitOutput,
    pub node: Arc<Node>,
}

pub fn test_config(init: &InitOutput) -> NodeConfig {
    let mut config = NodeConfig::load(&init.config_path).unwrap();
    config.block_interval_s = 3600;
    config.login_attempts_per_minute = 10_000;
    config
}

pub fn init_dir(dir: &TempDir) -> InitOutput {
    init_data_dir(
        &dir.path().join("producer"),
        "127.0.0.1:0",
        ROOT_EMAIL,
        ROOT_PASSWORD,
        KdfParams::fast_insecure(),
        unix_now(),
    )
    .unwrap()
}

pub fn producer() -> Producer {
    let dir = tempfile::tempdir().unwrap();
    let init = init_dir(&dir);
    let node = Arc::new(Node::open(test_config(&init)).unwrap());
    Producer { dir, init, node }
}

impl Producer {
    pub fn reopen(&mut self) {
        self.node = Arc::new(Node::open(test_config(&self.init)).unwrap());
    }

    pub fn token(&self, email: &str, password: &str) -> String {
        self.node.login(email, password, unix_now()).unwrap().token_id
    }

    pub fn root(&self) -> String {
        self.token(ROOT_EMAIL, ROOT_PASSWORD)
    }

    pub fn commit(&self) -> Option<Block> {
        self.node.produce_block(unix_now()).unwrap()
    }

    /// Creates and commits a provider; returns (account_id, token).
    pub fn provider(&self, email: &str, hospital: &str) -> (String, String) {
        let (account, _) = self
            .node
            .create_account(&self.root(), email, PROVIDER_PASSWORD, Role::Provider, Some(hospital), unix_now())
            .unwrap();
        self.commit();
        (account.account_id, self.token(email, PROVIDER_PASSWORD))
    }

    pub fn officer(&self, email: &str) -> (String, String) {
        let (account, _) = self
            .node
            .create_account(&self.root(), email, OFFICER_PASSWORD, Role::Officer, None, unix_now())
            .unwrap();
        self.commit();
        (account.account_id, self.token(email, OFFICER_PASSWORD))
    }

    pub fn issue(&self, token: &str, aadhaar: &str, name: &str, vaccine: &str, dose: u32, date: &str) {
        let req = IssueRequest {
            aadhaar: aadhaar.into(),
            full_name: name.into(),
            vaccine_name: vaccine.into(),
            dose_number: dose,
            date: date.into(),
        };
        self.node.issue_record(token, &req, unix_now()).unwrap();
    }

    /// Grows the chain to `blocks` blocks, `per_block` records each after
    /// the registration blocks.
    pub fn grow(&self, blocks: u64, per_block: u64) {
        let (_, token) = self.provider("grow-provider@clinic.example.org", "Grow Clinic");
        let mut n = 0;
        while self.node.next_height() < blocks {
            for _ in 0..per_block {
                n += 1;
                self.issue(&token, &aadhaar(n), &format!("Traveler {n}"), "Covishield", 1, "2021-06-01");
            }
            self.commit().unwrap();
        }
    }

    pub fn chain_bytes(&self) -> Vec<u8> {
        std::fs::read(self.init.data_dir.join("chain.jsonl")).unwrap()
    }
}

pub fn verifier_config(dir: &std::path::Path, peer_url: &str, init: &InitOutput) -> NodeConfig {
    let mut c = NodeConfig::verifier(dir, "127.0.0.1:0", peer_url, &init.producer_pubkey, &init.credential_pubkey);
    c.block_interval_s = 3600;
    c
}

pub struct Server {
    pub base: String,
    stop: Option<oneshot::Sender<()>>,
    handle: Option<tokio::task::JoinHandle<std::io::Result<()>>>,
}

impl Server {
    pub async fn stop(mut self) {
        if let Some(s) = self.stop.take() {
            let _ = s.send(());
        }
        if let Some(h) = self.handle.take() {
            h.await.unwrap().unwrap();
        }
    }
}

pub async fn spawn_server(node: Arc<Node>) -> Server {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let (tx, rx) = oneshot::channel();
    let handle = tokio::spawn(vaxledger_node::server::serve(node, listener, async {
        let _ = rx.await;
    }));
    Server {
        base,
        stop: Some(tx),
        handle: Some(handle),
    }
}

/// Serves a fixed, replaceable list of blocks the way a producer would.
pub mod fake_peer {
    use std::sync::{Arc, Mutex};

    use axum::extract::{Query, State};
    use axum::routing::get;
    use axum::Router;
    use serde::Deserialize;
    use vaxledger_core::ledger::Block;

    pub type Served = Arc<Mutex<Vec<Block>>>;

    #[derive(Deserialize)]
    struct Q {
        from: usize,
        limit: usize,
    }

    async fn blocks(State(s): State<Served>, Query(q): Query<Q>) -> axum::Json<Vec<Block>> {
        let v = s.lock().unwrap();
        let start = q.from.min(v.len());
        let end = (start + q.limit).min(v.len());
        axum::Json(v[start..end].to_vec())
    }

    pub async fn spawn(served: Served) -> String {
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        let app = Router::new().route("/blocks", get(blocks)).with_state(served);
        tokio::spawn(async move { axum::serve(listener, app).await });
        base
    }
}
