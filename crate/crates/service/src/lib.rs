//! Annotation project store and the HTTP service in front of it.

pub mod api;
pub mod fsutil;
pub mod store;

use std::io;
use std::net::SocketAddr;
use std::sync::Arc;

pub use api::router;
pub use store::{NoteListing, NoteState, NoteStatus, NoteView, PreAnnotationSource, Project, SaveOutcome, StoreError};

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("address {0} is already in use")]
    AddressInUse(SocketAddr),
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: io::Error,
    },
    #[error("server failed: {0}")]
    Io(#[from] io::Error),
}

/// Bind `addr` and serve `project` until ctrl-c.
pub async fn serve(project: Project, addr: SocketAddr) -> Result<(), ServeError> {
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(|source| match source.kind() {
        io::ErrorKind::AddrInUse => ServeError::AddressInUse(addr),
        _ => ServeError::Bind { addr, source },
    })?;
    log::info!("serving {} on http://{}", project.root().display(), listener.local_addr()?);
    axum::serve(listener, router(Arc::new(project)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
