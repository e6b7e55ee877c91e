//! Scenario harness: config, mobility, the event-driven run loop and
//! metric extraction.

pub mod config;
pub mod metrics;
pub mod mobility;
mod engine;

pub use config::*;
pub use engine::*;
pub use metrics::*;
pub use mobility::*;

use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("io: {0}")]
    Io(String),
    #[error("parse: {0}")]
    Parse(String),
    #[error("invalid scenario:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
    #[error("orbit: {0}")]
    Orbit(#[from] crate::orbit::OrbitError),
    #[error("scheduling: {0}")]
    Scheduling(#[from] crate::scheduling::SchedulingError),
    #[error("protocol: {0}")]
    Protocol(#[from] crate::protocol::ProtocolError),
}

/// Writes the whole payload to a temp sibling and renames it into place,
/// so a crash or error never leaves a partially written output file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    let n = COUNTER.fetch_add(1, Ordering::Relaxed);
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let file_name = path
        .file_name()
        .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidInput, "path has no file name"))?;
    let tmp_name = format!(".{}.tmp.{}.{n}", file_name.to_string_lossy(), std::process::id());
    let tmp = match dir {
        Some(d) => d.join(&tmp_name),
        None => std::path::PathBuf::from(&tmp_name),
    };
    std::fs::write(&tmp, bytes)?;
    match std::fs::rename(&tmp, path) {
        Ok(()) => Ok(()),
        Err(e) => {
            let _ = std::fs::remove_file(&tmp);
            Err(e)
        }
    }
}
