//! HTTP service and command line for the `claimtriage` engine.
//!
//! [`engine::Engine`] owns the corpus, the preset facet scores, sessions and
//! the event log. [`api::router`] exposes it over HTTP; [`cli`] wraps the
//! offline pipeline (ingest, split, train, score) plus `serve`, `rank`,
//! `analyze` and `sample`.

pub mod api;
pub mod cli;
pub mod config;
pub mod engine;
pub mod error;

use std::sync::Arc;

pub use config::ServiceConfig;
pub use engine::{Engine, EngineParts, InterfaceMode};
pub use error::{ApiError, ServiceError};

/// Serves `engine` on `bind` until Ctrl-C.
pub fn serve(engine: Arc<Engine>, bind: &str) -> Result<(), ServiceError> {
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(bind).await?;
        eprintln!("listening on {}", listener.local_addr()?);
        axum::serve(listener, api::router(engine))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
    })?;
    Ok(())
}
