use std::io::Read;
use std::net::TcpListener;
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};
use std::time::{Duration, Instant};

use serde_json::Value;
use vaxledger_core::codec::verhoeff_check_digit;

const BIN: &str = env!("CARGO_BIN_EXE_vaxledger");
const ROOT_PW: &str = "root-passphrase-9731";

fn vax(args: &[&str]) -> Command {
    let mut c = Command::new(BIN);
    c.args(args);
    for var in ["VAXLEDGER_CONFIG", "VAXLEDGER_TOKEN", "VAXLEDGER_NODE", "VAXLEDGER_PASSWORD", "VAXLEDGER_ACCOUNT_PASSWORD"] {
        c.env_remove(var);
    }
    c
}

fn run(c: &mut Command) -> Output {
    c.output().unwrap()
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

fn aadhaar(n: u64) -> String {
    let base = format!("{:011}", 50_000_000_000u64 + n * 7919);
    format!("{base}{}", verhoeff_check_digit(&base).unwrap())
}

fn init(dir: &Path) -> Value {
    let o = run(vax(&["--json", "init", "--data-dir", dir.to_str().unwrap(), "--authority-email", "root@health.example.org", "--fast-kdf"])
        .env("VAXLEDGER_AUTHORITY_PASSWORD", ROOT_PW));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    stdout_json(&o)
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

/// Rewrites the generated config for a fixed port and a short interval.
fn configure(init: &Value, port: u16, interval: u64) -> String {
    let path = init["config_path"].as_str().unwrap().to_owned();
    let mut cfg: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    cfg["listen_addr"] = format!("127.0.0.1:{port}").into();
    cfg["block_interval_s"] = interval.into();
    std::fs::write(&path, cfg.to_string()).unwrap();
    path
}

struct Served(Child);

impl Drop for Served {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn serve(config: &str, port: u16) -> Served {
    let child = vax(&["serve", "--config", config])
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let served = Served(child);
    let deadline = Instant::now() + Duration::from_secs(20);
    while std::net::TcpStream::connect(("127.0.0.1", port)).is_err() {
        assert!(Instant::now() < deadline, "server did not start");
        std::thread::sleep(Duration::from_millis(50));
    }
    served
}

fn sigterm(child: &Child) {
    let ok = Command::new("kill").args(["-TERM", &child.id().to_string()]).status().unwrap();
    assert!(ok.success());
}

fn wait_exit(child: &mut Child, limit: Duration) -> std::process::ExitStatus {
    let deadline = Instant::now() + limit;
    loop {
        if let Some(s) = child.try_wait().unwrap() {
            return s;
        }
        assert!(Instant::now() < deadline, "process did not exit");
        std::thread::sleep(Duration::from_millis(50));
    }
}

#[test]
fn init_fresh_then_refuses_rerun() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("node");
    let out = init(&dir);
    let key = out["credential_pubkey"].as_str().unwrap();
    assert_eq!(key.len(), 64);
    assert!(key.bytes().all(|b| b.is_ascii_hexdigit()));
    let chain = std::fs::read_to_string(dir.join("chain.jsonl")).unwrap();
    assert_eq!(chain.lines().count(), 1);

    let again = run(vax(&["init", "--data-dir", dir.to_str().unwrap(), "--authority-email", "root@health.example.org", "--fast-kdf"])
        .env("VAXLEDGER_AUTHORITY_PASSWORD", ROOT_PW));
    assert_eq!(again.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&again.stderr).contains("not empty"));
}

#[test]
fn init_text_output_is_key_value_lines() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(vax(&["init", "--data-dir", tmp.path().join("n").to_str().unwrap(), "--authority-email", "root@health.example.org", "--fast-kdf"])
        .env("VAXLEDGER_AUTHORITY_PASSWORD", ROOT_PW));
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let line = text.lines().find(|l| l.starts_with("credential_pubkey=")).unwrap();
    assert_eq!(line.len(), "credential_pubkey=".len() + 64);
}

#[test]
fn serve_bad_config_exits_2() {
    let o = run(&mut vax(&["serve", "--config", "/nonexistent/vaxledger.json"]));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cannot read config"));
}

#[test]
fn serve_health_then_sigterm() {
    let tmp = tempfile::tempdir().unwrap();
    let out = init(&tmp.path().join("node"));
    let port = free_port();
    let cfg = configure(&out, port, 5);
    let mut served = serve(&cfg, port);
    let mut stream = std::net::TcpStream::connect(("127.0.0.1", port)).unwrap();
    std::io::Write::write_all(&mut stream, b"GET /healthz HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n").unwrap();
    let mut resp = String::new();
    stream.read_to_string(&mut resp).unwrap();
    assert!(resp.starts_with("HTTP/1.1 200"), "{resp}");

    sigterm(&served.0);
    let status = wait_exit(&mut served.0, Duration::from_secs(10));
    assert_eq!(status.code(), Some(0));
}

#[test]
fn bind_failure_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = init(&tmp.path().join("node"));
    let holder = TcpListener::bind("127.0.0.1:0").unwrap();
    let port = holder.local_addr().unwrap().port();
    let cfg = configure(&out, port, 5);
    let o = run(&mut vax(&["serve", "--config", &cfg]));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cannot bind"));
}

#[test]
fn full_flow_through_cli() {
    let tmp = tempfile::tempdir().unwrap();
    let out = init(&tmp.path().join("node"));
    let port = free_port();
    let cfg = configure(&out, port, 1);
    let _served = serve(&cfg, port);
    let node = format!("http://127.0.0.1:{port}");

    let login = |email: &str, pw: &str| -> String {
        let o = run(vax(&["--json", "login", "--node", &node, "--email", email]).env("VAXLEDGER_PASSWORD", pw));
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        stdout_json(&o)["token"].as_str().unwrap().to_owned()
    };
    let root = login("root@health.example.org", ROOT_PW);

    let o = run(vax(&["--json", "register-provider", "--node", &node, "--email", "p@clinic.example.org", "--hospital-name", "Apollo Clinic"])
        .env("VAXLEDGER_TOKEN", &root)
        .env("VAXLEDGER_ACCOUNT_PASSWORD", "provider-passphrase"));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = run(vax(&["register-officer", "--node", &node, "--email", "o@border.example.org"])
        .env("VAXLEDGER_TOKEN", &root)
        .env("VAXLEDGER_ACCOUNT_PASSWORD", "officer-passphrase"));
    assert!(o.status.success());
    let prov = login("p@clinic.example.org", "provider-passphrase");
    let officer = login("o@border.example.org", "officer-passphrase");

    // Retried in case the server is still settling.
    let deadline = Instant::now() + Duration::from_secs(15);
    let id = aadhaar(1);
    loop {
        let o = run(vax(&["issue", "--node", &node, "--aadhaar", &id, "--full-name", "Kiran Das", "--vaccine-name", "Covishield", "--dose-number", "1", "--date", "2021-08-09"])
            .env("VAXLEDGER_TOKEN", &prov));
        if o.status.success() {
            break;
        }
        assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(Instant::now() < deadline);
        std::thread::sleep(Duration::from_millis(200));
    }

    let record = loop {
        let o = run(vax(&["--json", "lookup", "--node", &node, "--aadhaar", &id]).env("VAXLEDGER_TOKEN", &officer));
        if o.status.success() {
            break stdout_json(&o);
        }
        assert!(Instant::now() < deadline);
        std::thread::sleep(Duration::from_millis(200));
    };
    assert_eq!(record["record"]["full_name"], "Kiran Das");

    // Role gate surfaces as a user error.
    let o = run(vax(&["lookup", "--node", &node, "--aadhaar", &id]).env("VAXLEDGER_TOKEN", &prov));
    assert_eq!(o.status.code(), Some(1));

    let o = run(vax(&["--json", "credential", "--node", &node, "--aadhaar", &id]).env("VAXLEDGER_TOKEN", &officer));
    assert!(o.status.success());
    let qr = stdout_json(&o)["qr_payload"].as_str().unwrap().to_owned();

    let pubkey = out["credential_pubkey"].as_str().unwrap();
    let o = run(&mut vax(&["verify", "--qr-payload", &qr, "--pubkey", pubkey]));
    assert_eq!((o.status.code(), String::from_utf8_lossy(&o.stdout).trim()), (Some(0), "VALID"));

    let mut cred = vaxledger_core::credential::decode_qr_payload(&qr).unwrap();
    cred.full_name = "Kiran Dass".into();
    let tampered = vaxledger_core::credential::encode_qr_payload(&cred);
    let o = run(&mut vax(&["verify", "--qr-payload", &tampered, "--pubkey", pubkey]));
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "INVALID_SIGNATURE");

    let o = run(&mut vax(&["--json", "verify", "--qr-payload", "garbage", "--pubkey", pubkey]));
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stdout_json(&o)["status"], "MALFORMED");

    let o = run(&mut vax(&["--json", "sync-status", "--node", &node, "--peer", &node]));
    assert!(o.status.success());
    let status = stdout_json(&o);
    assert_eq!(status["in_sync"], true);
    assert!(status["height"].as_u64().unwrap() >= 1);
}

#[test]
fn network_errors_are_system_errors() {
    let port = free_port();
    let o = run(vax(&["login", "--node", &format!("http://127.0.0.1:{port}"), "--email", "a@b.example"]).env("VAXLEDGER_PASSWORD", "x"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn verify_never_touches_the_network() {
    // Every proxy and node variable points at a listener that counts
    // connections; verify must leave it untouched.
    let trap = TcpListener::bind("127.0.0.1:0").unwrap();
    trap.set_nonblocking(true).unwrap();
    let url = format!("http://{}", trap.local_addr().unwrap());
    let o = run(vax(&["verify", "--qr-payload", "VAXLEDGER:1:eyJ2IjoxfQ", "--pubkey", &"ab".repeat(32)])
        .env("VAXLEDGER_NODE", &url)
        .env("HTTP_PROXY", &url)
        .env("HTTPS_PROXY", &url)
        .env("ALL_PROXY", &url));
    assert_eq!(o.status.code(), Some(1));
    assert!(matches!(trap.accept(), Err(e) if e.kind() == std::io::ErrorKind::WouldBlock));
}

#[test]
fn sigkill_during_load_recovers() {
    let tmp = tempfile::tempdir().unwrap();
    let out = init(&tmp.path().join("node"));
    let port = free_port();
    let cfg = configure(&out, port, 1);
    let node = format!("http://127.0.0.1:{port}");
    let mut served = serve(&cfg, port);
    let o = run(vax(&["--json", "login", "--node", &node, "--email", "root@health.example.org"]).env("VAXLEDGER_PASSWORD", ROOT_PW));
    let root = stdout_json(&o)["token"].as_str().unwrap().to_owned();
    for i in 0..6 {
        let o = run(vax(&["register-officer", "--node", &node, "--email", &format!("o{i}@border.example.org")])
            .env("VAXLEDGER_TOKEN", &root)
            .env("VAXLEDGER_ACCOUNT_PASSWORD", "officer-passphrase"));
        assert!(o.status.success());
        std::thread::sleep(Duration::from_millis(300));
    }
    served.0.kill().unwrap();
    served.0.wait().unwrap();

    // Every account reaches the chain after restart, whether or not its
    // registration was committed before the kill.
    let mut served = serve(&cfg, port);
    std::thread::sleep(Duration::from_millis(2500));
    sigterm(&served.0);
    assert_eq!(wait_exit(&mut served.0, Duration::from_secs(10)).code(), Some(0));

    let chain = std::fs::read(tmp.path().join("node/chain.jsonl")).unwrap();
    let blocks = vaxledger_core::ledger::parse_chain_bytes(&chain).unwrap();
    let key = vaxledger_core::keys::verifying_key_from_hex(out["producer_pubkey"].as_str().unwrap()).unwrap();
    let state = vaxledger_core::ledger::validate_chain(&blocks, &key).unwrap();
    let officers = state.roles.values().filter(|r| **r == vaxledger_core::Role::Officer).count();
    assert_eq!(officers, 6);
}
