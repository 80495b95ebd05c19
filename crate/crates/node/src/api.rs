//! HTTP/JSON surface of a node.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{ConnectInfo, Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};
use vaxledger_core::auth::AuthError;
use vaxledger_core::registry::{is_iso_date, TxError};
use vaxledger_core::Role;

use crate::ratelimit::RateLimiter;
use crate::service::{unix_now, IssueRequest, Node, NodeError, MAX_BLOCKS_PER_REQUEST};

pub struct AppState {
    pub node: Arc<Node>,
    login_limiter: RateLimiter,
}

pub fn router(node: Arc<Node>) -> Router {
    let limiter = RateLimiter::new(node.config().login_attempts_per_minute);
    let state = Arc::new(AppState {
        node,
        login_limiter: limiter,
    });
    Router::new()
        .route("/healthz", get(healthz))
        .route("/auth/login", post(login))
        .route("/auth/logout", post(logout))
        .route("/accounts", post(create_account))
        .route("/records", post(issue_record))
        .route("/records/{aadhaar}", get(lookup_record))
        .route("/credential/{aadhaar}", get(credential))
        .route("/verify", post(verify))
        .route("/chain/head", get(chain_head))
        .route("/blocks", get(blocks))
        .route("/rejections", get(rejections))
        .with_state(state)
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    reason: Option<&'static str>,
    field: Option<&'static str>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            reason: None,
            field: None,
        }
    }

    fn invalid(reason: &'static str, field: Option<&'static str>, message: impl Into<String>) -> Self {
        ApiError {
            reason: Some(reason),
            field,
            ..ApiError::new(StatusCode::BAD_REQUEST, "invalid_request", message)
        }
    }

    fn not_found() -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "not_found", "no record for this identifier")
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.code, "message": self.message });
        if let Some(reason) = self.reason {
            body["reason"] = reason.into();
        }
        if let Some(field) = self.field {
            body["field"] = field.into();
        }
        (self.status, Json(body)).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::invalid("bad_body", None, r.body_text())
    }
}

fn auth_error(e: AuthError) -> ApiError {
    use AuthError::*;
    match e {
        InvalidCredentials => ApiError::new(StatusCode::UNAUTHORIZED, "invalid_credentials", "invalid email or password"),
        TokenExpired => ApiError::new(StatusCode::UNAUTHORIZED, "token_expired", "session expired"),
        TokenUnknown => ApiError::new(StatusCode::UNAUTHORIZED, "unauthenticated", "missing or unknown session token"),
        Forbidden => ApiError::new(StatusCode::FORBIDDEN, "forbidden", "role not permitted for this operation"),
        EmailTaken => ApiError::new(StatusCode::CONFLICT, "email_taken", e.to_string()),
        WeakPassword => ApiError::invalid("weak_password", Some("password"), e.to_string()),
        MissingHospital => ApiError::invalid("missing_hospital", Some("hospital_name"), e.to_string()),
        InvalidEmail => ApiError::invalid("invalid_email", Some("email"), e.to_string()),
        InvalidRole => ApiError::invalid("invalid_role", Some("role"), e.to_string()),
        Storage(_) => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "storage", "account storage failure"),
    }
}

fn tx_error(e: TxError) -> ApiError {
    let message = e.to_string();
    match e {
        TxError::Unauthorized { .. } => ApiError::new(StatusCode::FORBIDDEN, "forbidden", message),
        TxError::DuplicateDose { .. } => ApiError::invalid("duplicate_dose", Some("dose_number"), message),
        TxError::NameMismatch => ApiError::invalid("name_mismatch", Some("full_name"), message),
        TxError::BadNonce { .. } => ApiError::invalid("bad_nonce", None, message),
        TxError::DuplicateRegistration(_) => ApiError::invalid("duplicate_registration", None, message),
        TxError::MalformedPayload(_) => ApiError::invalid("malformed_payload", None, message),
        TxError::BootstrapOutsideGenesis => ApiError::invalid("bootstrap_outside_genesis", None, message),
    }
}

impl From<NodeError> for ApiError {
    fn from(e: NodeError) -> Self {
        match e {
            NodeError::Auth(a) => auth_error(a),
            NodeError::WouldFail(t) => tx_error(t),
            NodeError::PoolDuplicate => ApiError::new(StatusCode::CONFLICT, "pool_duplicate", e.to_string()),
            NodeError::InvalidAadhaar => ApiError::invalid("invalid_aadhaar", Some("aadhaar"), e.to_string()),
            NodeError::NotProducer => ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "not_producer", e.to_string()),
            NodeError::Halted => ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "halted", e.to_string()),
            other => {
                tracing::error!(error = %other, "internal error");
                ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", "internal error")
            }
        }
    }
}

fn bearer(headers: &HeaderMap) -> &str {
    headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(str::trim)
        .unwrap_or("")
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|_| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", "internal error"))
}

async fn healthz() -> &'static str {
    "ok\n"
}

#[derive(Deserialize)]
struct LoginBody {
    email: String,
    password: String,
}

async fn login(
    State(app): State<Arc<AppState>>,
    ConnectInfo(peer): ConnectInfo<SocketAddr>,
    body: Result<Json<LoginBody>, JsonRejection>,
) -> Result<Json<Value>, ApiError> {
    let now = unix_now();
    if !app.login_limiter.check(peer.ip(), now) {
        return Err(ApiError::new(StatusCode::TOO_MANY_REQUESTS, "rate_limited", "too many login attempts"));
    }
    let Json(body) = body?;
    let node = app.node.clone();
    let session = blocking(move || node.login(&body.email, &body.password, now)).await??;
    Ok(Json(json!({
        "token": session.token_id,
        "role": session.role,
        "expires_at": session.expires_at,
    })))
}

async fn logout(State(app): State<Arc<AppState>>, headers: HeaderMap) -> StatusCode {
    app.node.auth().logout(bearer(&headers));
    StatusCode::NO_CONTENT
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AccountBody {
    email: String,
    password: String,
    role: String,
    #[serde(default)]
    hospital_name: Option<String>,
}

async fn create_account(
    State(app): State<Arc<AppState>>,
    headers: HeaderMap,
    body: Result<Json<AccountBody>, JsonRejection>,
) -> Result<(StatusCode, Json<Value>), ApiError> {
    let token = bearer(&headers).to_owned();
    let now = unix_now();
    // Role gate before body validation, so unauthorized callers learn nothing.
    app.node.auth().authorize(&token, Role::Authority, now).map_err(auth_error)?;
    let Json(body) = body?;
    let role: Role = body
        .role
        .parse()
        .map_err(|_| ApiError::invalid("invalid_role", Some("role"), "role must be PROVIDER or OFFICER"))?;
    let node = app.node.clone();
    let (account, receipt) = blocking(move || {
        node.create_account(&token, &body.email, &body.password, role, body.hospital_name.as_deref(), now)
    })
    .await??;
    let mut out = json!({
        "account_id": account.account_id,
        "email": account.email,
        "role": account.role,
        "accepted": receipt.accepted,
        "position": receipt.position,
    });
    if let Some(h) = account.hospital_name {
        out["hospital_name"] = h.into();
    }
    Ok((StatusCode::CREATED, Json(out)))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordBody {
    aadhaar: String,
    full_name: String,
    vaccine_name: String,
    dose_number: i64,
    date: String,
}

fn check_record_fields(b: &RecordBody) -> Result<u32, ApiError> {
    if b.full_name.trim().is_empty() {
        return Err(ApiError::invalid("required", Some("full_name"), "full name is required"));
    }
    if b.vaccine_name.trim().is_empty() {
        return Err(ApiError::invalid("required", Some("vaccine_name"), "vaccine name is required"));
    }
    let dose = u32::try_from(b.dose_number)
        .ok()
        .filter(|d| *d >= 1)
        .ok_or_else(|| ApiError::invalid("invalid_dose_number", Some("dose_number"), "dose number must be a positive integer"))?;
    if !is_iso_date(&b.date) {
        return Err(ApiError::invalid("invalid_date", Some("date"), "date must be YYYY-MM-DD"));
    }
    Ok(dose)
}

async fn issue_record(
    State(app): State<Arc<AppState>>,
    headers: HeaderMap,
    body: Result<Json<RecordBody>, JsonRejection>,
) -> Result<(StatusCode, Json<Value>), ApiError> {
    let token = bearer(&headers);
    let now = unix_now();
    app.node.auth().authorize(token, Role::Provider, now).map_err(auth_error)?;
    let Json(body) = body?;
    let dose_number = check_record_fields(&body)?;
    let req = IssueRequest {
        aadhaar: body.aadhaar,
        full_name: body.full_name,
        vaccine_name: body.vaccine_name,
        dose_number,
        date: body.date,
    };
    let (receipt, _) = app.node.issue_record(token, &req, now)?;
    Ok((
        StatusCode::ACCEPTED,
        Json(json!({ "accepted": receipt.accepted, "position": receipt.position })),
    ))
}

async fn lookup_record(
    State(app): State<Arc<AppState>>,
    headers: HeaderMap,
    Path(aadhaar): Path<String>,
) -> Result<Json<Value>, ApiError> {
    let found = app.node.officer_lookup(&aadhaar, bearer(&headers), unix_now())?;
    let result = found.ok_or_else(ApiError::not_found)?;
    Ok(Json(json!({
        "record": result.record,
        "verified_at_height": result.verified_at_height,
    })))
}

async fn credential(
    State(app): State<Arc<AppState>>,
    headers: HeaderMap,
    Path(aadhaar): Path<String>,
) -> Result<Json<Value>, ApiError> {
    let payload = app.node.credential(&aadhaar, bearer(&headers), unix_now())?;
    let qr_payload = payload.ok_or_else(ApiError::not_found)?;
    Ok(Json(json!({ "qr_payload": qr_payload })))
}

#[derive(Deserialize)]
struct VerifyBody {
    qr_payload: String,
}

async fn verify(
    State(app): State<Arc<AppState>>,
    body: Result<Json<VerifyBody>, JsonRejection>,
) -> Result<Json<Value>, ApiError> {
    let Json(body) = body?;
    let status = app.node.verify_payload(&body.qr_payload, unix_now());
    Ok(Json(json!({ "status": status })))
}

async fn chain_head(State(app): State<Arc<AppState>>) -> Result<Json<Value>, ApiError> {
    let head = app
        .node
        .head()
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "empty_chain", "no blocks yet"))?;
    Ok(Json(serde_json::to_value(head).expect("header serializes")))
}

#[derive(Deserialize)]
struct BlocksQuery {
    #[serde(default)]
    from: u64,
    #[serde(default)]
    limit: Option<usize>,
}

async fn blocks(
    State(app): State<Arc<AppState>>,
    query: Result<Query<BlocksQuery>, axum::extract::rejection::QueryRejection>,
) -> Result<Response, ApiError> {
    let Query(q) = query.map_err(|r| ApiError::invalid("bad_query", None, r.body_text()))?;
    let limit = q.limit.unwrap_or(MAX_BLOCKS_PER_REQUEST);
    if limit == 0 || limit > MAX_BLOCKS_PER_REQUEST {
        return Err(ApiError::invalid("bad_limit", Some("limit"), "limit must be between 1 and 100"));
    }
    let blocks = app.node.blocks(q.from, limit);
    let mut body = Vec::with_capacity(blocks.len() * 1024 + 2);
    body.push(b'[');
    for (i, block) in blocks.iter().enumerate() {
        if i > 0 {
            body.push(b',');
        }
        body.extend_from_slice(&block.canonical_bytes());
    }
    body.push(b']');
    Ok(([(header::CONTENT_TYPE, "application/json")], body).into_response())
}

async fn rejections(State(app): State<Arc<AppState>>, headers: HeaderMap) -> Result<Json<Value>, ApiError> {
    let log = app.node.rejections(bearer(&headers), unix_now())?;
    Ok(Json(json!({ "rejections": log })))
}
