//! Serving loop: HTTP plus the periodic producer or sync task.

use std::future::Future;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use tokio::net::TcpListener;
use tokio::sync::watch;
use tracing::{error, info, warn};

use crate::api::router;
use crate::config::Mode;
use crate::service::{unix_now, Node};
use crate::sync::{sync_from_peer, SyncError};

/// Runs until `shutdown` resolves. On shutdown the HTTP side drains first,
/// then a producer commits whatever is still pooled.
pub async fn serve(node: Arc<Node>, listener: TcpListener, shutdown: impl Future<Output = ()> + Send + 'static) -> std::io::Result<()> {
    let (stop_tx, stop_rx) = watch::channel(false);
    let background = tokio::spawn(background_loop(node.clone(), stop_rx));

    let app = router(node).into_make_service_with_connect_info::<SocketAddr>();
    let result = axum::serve(listener, app).with_graceful_shutdown(shutdown).await;

    let _ = stop_tx.send(true);
    if let Err(e) = background.await {
        error!(error = %e, "background task failed");
    }
    result
}

async fn background_loop(node: Arc<Node>, mut stop: watch::Receiver<bool>) {
    let period = Duration::from_secs(node.config().block_interval_s);
    let mut ticker = tokio::time::interval(period);
    ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    let client = reqwest::Client::builder()
        .timeout(Duration::from_secs(30))
        .build()
        .expect("http client builds");
    loop {
        tokio::select! {
            _ = ticker.tick() => {}
            _ = stop.changed() => break,
        }
        tick(&node, &client).await;
    }
    if node.mode() == Mode::Producer {
        produce(&node).await;
    }
    info!("background task stopped");
}

async fn tick(node: &Arc<Node>, client: &reqwest::Client) {
    match node.mode() {
        Mode::Producer => produce(node).await,
        Mode::Verifier => {
            let peer = node.config().peer_url.clone().unwrap_or_default();
            match sync_from_peer(node, client, &peer).await {
                Ok(_) => {}
                Err(SyncError::PeerUnreachable(e)) => warn!(error = %e, "peer unreachable"),
                Err(e) => error!(error = %e, "sync stopped"),
            }
        }
    }
}

async fn produce(node: &Arc<Node>) {
    if node.is_halted() {
        return;
    }
    let worker = node.clone();
    match tokio::task::spawn_blocking(move || worker.produce_block(unix_now())).await {
        Ok(Ok(_)) => {}
        Ok(Err(e)) => error!(error = %e, "block production failed"),
        Err(e) => error!(error = %e, "block production task panicked"),
    }
}

/// Resolves on SIGINT or SIGTERM.
pub async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = term => {}
    }
    info!("shutdown requested");
}
