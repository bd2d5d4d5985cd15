//! HTTP/JSON service for preference elicitation sessions.
//!
//! A session precomputes t-SNE maps over a perplexity grid, hands out random
//! pairs of maps, records pairwise judgments, and reports the Gaussian
//! process utility posterior against the penalized-KL selection.
//!
//! Endpoints:
//! - `POST /sessions`
//! - `GET /sessions/{id}/pair`
//! - `POST /sessions/{id}/preferences`
//! - `GET /sessions/{id}/report`
//! - `GET /sessions/{id}/maps/{grid_index}.svg`
//!
//! Errors are returned as `{"code": ..., "message": ...}`.

pub mod error;
pub mod http;
pub mod sampler;
pub mod store;

use std::sync::Arc;

pub use error::ServiceError;
pub use http::router;
pub use store::{DatasetSource, PairView, Session, SessionConfig, Store};

/// Serves until the future `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    store: Arc<Store>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(store)).with_graceful_shutdown(shutdown).await
}
