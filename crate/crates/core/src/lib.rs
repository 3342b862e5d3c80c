//! Similar-image retrieval over binarized embedding fingerprints.
//!
//! Embeddings are binarized with seeded random hyperplanes, split into
//! fixed-width subcodes and indexed as exact-match tokens. Queries use the
//! pigeonhole bound (codes within Hamming distance `r` share at least
//! `m - r` of their `m` subcodes) to generate candidates, then re-rank them
//! by exact Hamming distance.
//!
//! The crate is `no_std` and only needs an allocator. Anything touching the
//! filesystem, wall clocks or the network lives in the `sir` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod codec;
pub mod error;
pub mod index;
pub mod metrics;
pub mod query;
pub mod rng;
pub mod rules;
pub mod store;
pub mod synth;
pub mod text;
pub mod time;
pub mod variants;

pub use codec::{BinaryCode, CodecConfig, EmbeddingVector, ProjectionPlan};
pub use error::{Error, Result};
pub use index::{RankedHit, SearchParams, SubcodeIndex};
pub use query::{Clock, Query, QueryTarget, ResultPage};
pub use rules::{Rule, SimulationReport, SweepReport};
pub use store::{IngestRecord, RollingStore, StoreConfig};
pub use text::{TextPredicate, TokenizedTitle};
pub use time::Timestamp;
