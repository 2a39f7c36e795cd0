//! Core of a format-preserving chunk store for large geospatial files.
//!
//! Imported files are split into immutable chunks ([`splitter`]), persisted
//! in a pluggable [`store`], indexed by bounding box, attributes and full
//! text ([`indexer`]), searched with a small [`query`] language and merged
//! back into valid documents ([`merger`]).

pub mod error;
pub mod indexer;
pub mod merger;
pub mod model;
pub mod query;
pub mod splitter;
pub mod store;
pub mod text;

pub use error::{Error, Result};
