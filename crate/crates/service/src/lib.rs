//! HTTP front end for interactive summarization sessions.
//!
//! Each session lives behind its own lock and writes every event it emits
//! to `<data-dir>/<id>.jsonl`; `<data-dir>/index.jsonl` lists the sessions.
//! Opening a data directory replays every log.

pub mod api;
pub mod error;
pub mod store;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

pub use api::{router, AppState, CreateRequest, SyntheticSource};
pub use error::{ApiError, ApiResult, ErrorBody};
pub use store::{LogLine, Store};

pub const DEFAULT_ADDR: &str = "127.0.0.1:8080";
pub const DEFAULT_DATA_DIR: &str = "prefsum-data";

/// Serve until ctrl-c.
pub async fn serve(addr: SocketAddr, data_dir: PathBuf) -> ApiResult<()> {
    let store = Arc::new(Store::open(data_dir)?);
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| ApiError::Storage(e.to_string()))?;
    tracing::info!(%addr, dir = %store.dir().display(), "listening");
    axum::serve(listener, router(store))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| ApiError::Storage(e.to_string()))
}
