//! Server and command-line client of a format-preserving geospatial chunk
//! store. The storage, indexing and query machinery lives in
//! `geostore-core`.

pub mod cli;
pub mod config;
pub mod server;
