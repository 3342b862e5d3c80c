//! Storage, ingestion, HTTP service and command line for `sir-core`.

pub mod bench;
pub mod cli;
pub mod clock;
pub mod error;
pub mod formats;
pub mod jobs;
pub mod persist;
pub mod report;
pub mod rulebook;
pub mod service;
pub mod sirv;
pub mod storedir;
pub mod stream;
pub mod wal;

pub use error::{Result, SirError};
