//! Operator command line.
//!
//! Exit codes: 0 success, 1 user error (bad input, refused request,
//! non-VALID credential), 2 system error (I/O, network, server fault).

use std::io::BufRead;
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};
use vaxledger_core::auth::KdfParams;
use vaxledger_core::credential::verify_qr_payload;
use vaxledger_core::keys::verifying_key_from_hex;

use crate::config::{NodeConfig, CONFIG_ENV};
use crate::init::init_data_dir;
use crate::service::{unix_now, Node};

#[derive(Debug, Parser)]
#[command(name = "vaxledger", version, about = "Permissioned vaccination ledger node and tools")]
pub struct Cli {
    /// Machine-readable JSON output.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create keys, genesis block and the first authority account.
    Init(InitArgs),
    /// Run a node.
    Serve {
        #[arg(long, env = CONFIG_ENV)]
        config: PathBuf,
    },
    /// Obtain a session token.
    Login {
        #[command(flatten)]
        node: NodeArg,
        #[arg(long)]
        email: String,
        #[arg(long, env = "VAXLEDGER_PASSWORD", hide_env_values = true)]
        password: Option<String>,
    },
    /// Create a PROVIDER account (authority token).
    RegisterProvider {
        #[command(flatten)]
        session: SessionArgs,
        #[arg(long)]
        email: String,
        #[arg(long, env = "VAXLEDGER_ACCOUNT_PASSWORD", hide_env_values = true)]
        password: Option<String>,
        #[arg(long)]
        hospital_name: String,
    },
    /// Create an OFFICER account (authority token).
    RegisterOfficer {
        #[command(flatten)]
        session: SessionArgs,
        #[arg(long)]
        email: String,
        #[arg(long, env = "VAXLEDGER_ACCOUNT_PASSWORD", hide_env_values = true)]
        password: Option<String>,
    },
    /// Submit a vaccination record (provider token).
    Issue {
        #[command(flatten)]
        session: SessionArgs,
        #[arg(long)]
        aadhaar: String,
        #[arg(long)]
        full_name: String,
        #[arg(long)]
        vaccine_name: String,
        #[arg(long)]
        dose_number: i64,
        #[arg(long)]
        date: String,
    },
    /// Look up a traveler's record (officer token).
    Lookup {
        #[command(flatten)]
        session: SessionArgs,
        #[arg(long)]
        aadhaar: String,
    },
    /// Fetch a signed credential as QR text.
    Credential {
        #[command(flatten)]
        session: SessionArgs,
        #[arg(long)]
        aadhaar: String,
    },
    /// Check a QR payload offline against the authority credential key.
    Verify {
        #[arg(long)]
        qr_payload: String,
        #[arg(long)]
        pubkey: String,
        #[arg(long, default_value_t = 365)]
        validity_days: i64,
    },
    /// Show a node's head, and compare it with a peer when given.
    SyncStatus {
        #[command(flatten)]
        node: NodeArg,
        #[arg(long)]
        peer: Option<String>,
    },
}

#[derive(Debug, Args)]
pub struct InitArgs {
    #[arg(long)]
    pub data_dir: PathBuf,
    #[arg(long)]
    pub authority_email: String,
    /// Prefer the environment variable; read from stdin when neither is set.
    #[arg(long, env = "VAXLEDGER_AUTHORITY_PASSWORD", hide_env_values = true)]
    pub authority_password: Option<String>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub listen: String,
    #[arg(long, hide = true)]
    pub fast_kdf: bool,
}

#[derive(Debug, Args)]
pub struct NodeArg {
    #[arg(long = "node", env = "VAXLEDGER_NODE", default_value = "http://127.0.0.1:8080")]
    pub url: String,
}

#[derive(Debug, Args)]
pub struct SessionArgs {
    #[command(flatten)]
    pub node: NodeArg,
    #[arg(long, env = "VAXLEDGER_TOKEN", hide_env_values = true)]
    pub token: String,
}

#[derive(Debug)]
pub enum Failure {
    User(String),
    System(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::User(_) => 1,
            Failure::System(_) => 2,
        }
    }
}

/// Result of a subcommand: ordered key/value fields, and the exit code.
struct Report {
    fields: Map<String, Value>,
    /// Printed alone in text mode when set.
    headline: Option<String>,
    code: i32,
}

impl Report {
    fn ok(fields: Value) -> Self {
        Report {
            fields: match fields {
                Value::Object(m) => m,
                other => Map::from_iter([("result".to_owned(), other)]),
            },
            headline: None,
            code: 0,
        }
    }

    fn print(&self, as_json: bool) {
        if as_json {
            println!("{}", Value::Object(self.fields.clone()));
        } else if let Some(h) = &self.headline {
            println!("{h}");
        } else {
            for (k, v) in &self.fields {
                match v {
                    Value::String(s) => println!("{k}={s}"),
                    other => println!("{k}={other}"),
                }
            }
        }
    }
}

pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    run(cli)
}

pub fn run(cli: Cli) -> i32 {
    let as_json = cli.json;
    match dispatch(cli.command) {
        Ok(report) => {
            report.print(as_json);
            report.code
        }
        Err(f) => {
            let (kind, msg) = match &f {
                Failure::User(m) => ("user", m),
                Failure::System(m) => ("system", m),
            };
            if as_json {
                eprintln!("{}", json!({ "error": kind, "message": msg }));
            } else {
                eprintln!("error: {msg}");
            }
            f.exit_code()
        }
    }
}

fn runtime() -> Result<tokio::runtime::Runtime, Failure> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Failure::System(e.to_string()))
}

fn secret(value: Option<String>, what: &str) -> Result<String, Failure> {
    if let Some(v) = value {
        return Ok(v);
    }
    let mut line = String::new();
    std::io::stdin()
        .lock()
        .read_line(&mut line)
        .map_err(|e| Failure::System(e.to_string()))?;
    let line = line.trim_end_matches(['\r', '\n']).to_owned();
    if line.is_empty() {
        return Err(Failure::User(format!("{what} not provided")));
    }
    Ok(line)
}

fn dispatch(command: Command) -> Result<Report, Failure> {
    match command {
        Command::Init(args) => cmd_init(args),
        Command::Serve { config } => cmd_serve(config),
        Command::Verify {
            qr_payload,
            pubkey,
            validity_days,
        } => cmd_verify(&qr_payload, &pubkey, validity_days),
        Command::Login { node, email, password } => {
            let password = secret(password, "password")?;
            let body = json!({ "email": email, "password": password });
            remote(|c| async move { c.post(&node.url, "/auth/login", None, &body).await })
        }
        Command::RegisterProvider {
            session,
            email,
            password,
            hospital_name,
        } => {
            let password = secret(password, "account password")?;
            let body = json!({ "email": email, "password": password, "role": "PROVIDER", "hospital_name": hospital_name });
            remote(|c| async move { c.post(&session.node.url, "/accounts", Some(&session.token), &body).await })
        }
        Command::RegisterOfficer { session, email, password } => {
            let password = secret(password, "account password")?;
            let body = json!({ "email": email, "password": password, "role": "OFFICER" });
            remote(|c| async move { c.post(&session.node.url, "/accounts", Some(&session.token), &body).await })
        }
        Command::Issue {
            session,
            aadhaar,
            full_name,
            vaccine_name,
            dose_number,
            date,
        } => {
            let body = json!({
                "aadhaar": aadhaar,
                "full_name": full_name,
                "vaccine_name": vaccine_name,
                "dose_number": dose_number,
                "date": date,
            });
            remote(|c| async move { c.post(&session.node.url, "/records", Some(&session.token), &body).await })
        }
        Command::Lookup { session, aadhaar } => remote(|c| async move {
            c.get(&session.node.url, &format!("/records/{aadhaar}"), Some(&session.token)).await
        }),
        Command::Credential { session, aadhaar } => remote(|c| async move {
            c.get(&session.node.url, &format!("/credential/{aadhaar}"), Some(&session.token)).await
        }),
        Command::SyncStatus { node, peer } => remote(|c| async move { sync_status(&c, &node.url, peer.as_deref()).await }),
    }
}

fn cmd_init(args: InitArgs) -> Result<Report, Failure> {
    let password = secret(args.authority_password, "authority password")?;
    let kdf = if args.fast_kdf {
        KdfParams::fast_insecure()
    } else {
        KdfParams::default()
    };
    let out = init_data_dir(&args.data_dir, &args.listen, &args.authority_email, &password, kdf, unix_now()).map_err(|e| {
        if e.is_user_error() {
            Failure::User(e.to_string())
        } else {
            Failure::System(e.to_string())
        }
    })?;
    Ok(Report::ok(serde_json::to_value(out).expect("init output serializes")))
}

fn cmd_verify(qr_payload: &str, pubkey: &str, validity_days: i64) -> Result<Report, Failure> {
    let key = verifying_key_from_hex(pubkey).map_err(|e| Failure::User(format!("bad --pubkey: {e}")))?;
    if validity_days <= 0 {
        return Err(Failure::User("--validity-days must be positive".into()));
    }
    let status = verify_qr_payload(qr_payload.trim(), &key, unix_now(), validity_days * 86_400);
    let mut report = Report::ok(json!({ "status": status }));
    report.headline = Some(status.as_str().to_owned());
    report.code = if status == vaxledger_core::credential::CredentialStatus::Valid { 0 } else { 1 };
    Ok(report)
}

fn cmd_serve(config_path: PathBuf) -> Result<Report, Failure> {
    let config = NodeConfig::load(&config_path).map_err(|e| Failure::System(e.to_string()))?;
    let _ = tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .try_init();
    let rt = runtime()?;
    rt.block_on(async move {
        let listen = config.listen_addr.clone();
        let node = tokio::task::spawn_blocking(move || Node::open(config))
            .await
            .map_err(|e| Failure::System(e.to_string()))?
            .map_err(|e| Failure::System(e.to_string()))?;
        let listener = tokio::net::TcpListener::bind(&listen)
            .await
            .map_err(|e| Failure::System(format!("cannot bind {listen}: {e}")))?;
        let addr = listener.local_addr().map_err(|e| Failure::System(e.to_string()))?;
        tracing::info!(%addr, "listening");
        crate::server::serve(Arc::new(node), listener, crate::server::shutdown_signal())
            .await
            .map_err(|e| Failure::System(e.to_string()))
    })?;
    Ok(Report::ok(json!({ "stopped": true })))
}

struct Client {
    http: reqwest::Client,
}

impl Client {
    async fn send(&self, req: reqwest::RequestBuilder) -> Result<Value, Failure> {
        let resp = req.send().await.map_err(|e| Failure::System(format!("request failed: {e}")))?;
        let status = resp.status();
        let text = resp.text().await.map_err(|e| Failure::System(e.to_string()))?;
        let body: Value = serde_json::from_str(&text).unwrap_or(Value::String(text.trim().to_owned()));
        if status.is_success() {
            return Ok(body);
        }
        let msg = match &body {
            Value::Object(m) => {
                let code = m.get("error").and_then(Value::as_str).unwrap_or("error");
                let detail = m.get("message").and_then(Value::as_str).unwrap_or("");
                format!("{status}: {code}: {detail}")
            }
            other => format!("{status}: {other}"),
        };
        if status.is_client_error() {
            Err(Failure::User(msg))
        } else {
            Err(Failure::System(msg))
        }
    }

    fn url(base: &str, path: &str) -> String {
        format!("{}{path}", base.trim_end_matches('/'))
    }

    async fn post(&self, base: &str, path: &str, token: Option<&str>, body: &Value) -> Result<Value, Failure> {
        let mut req = self.http.post(Self::url(base, path)).json(body);
        if let Some(t) = token {
            req = req.bearer_auth(t);
        }
        self.send(req).await
    }

    async fn get(&self, base: &str, path: &str, token: Option<&str>) -> Result<Value, Failure> {
        let mut req = self.http.get(Self::url(base, path));
        if let Some(t) = token {
            req = req.bearer_auth(t);
        }
        self.send(req).await
    }
}

fn remote<F, Fut>(f: F) -> Result<Report, Failure>
where
    F: FnOnce(Client) -> Fut,
    Fut: std::future::Future<Output = Result<Value, Failure>>,
{
    let http = reqwest::Client::builder()
        .timeout(std::time::Duration::from_secs(60))
        .build()
        .map_err(|e| Failure::System(e.to_string()))?;
    let rt = runtime()?;
    rt.block_on(f(Client { http })).map(Report::ok)
}

async fn head_of(c: &Client, base: &str) -> Result<Value, Failure> {
    let header = c.get(base, "/chain/head", None).await?;
    let parsed: vaxledger_core::ledger::BlockHeader =
        serde_json::from_value(header).map_err(|e| Failure::System(format!("bad header from {base}: {e}")))?;
    Ok(json!({
        "height": parsed.height,
        "block_id": parsed.block_id().to_hex(),
        "state_root": parsed.state_root.to_hex(),
    }))
}

async fn sync_status(c: &Client, node: &str, peer: Option<&str>) -> Result<Value, Failure> {
    let local = head_of(c, node).await?;
    let mut out = json!({
        "height": local["height"],
        "block_id": local["block_id"],
        "state_root": local["state_root"],
    });
    if let Some(peer) = peer {
        let remote = head_of(c, peer).await?;
        out["peer_height"] = remote["height"].clone();
        out["peer_block_id"] = remote["block_id"].clone();
        out["in_sync"] = (remote["block_id"] == local["block_id"]).into();
    }
    Ok(out)
}
