//! Offline pipeline and routing gateway for dual-mode language models.
//!
//! Pure logic lives in [`synapseroute_core`]; this crate adds I/O: backend
//! and embedding clients, the labeling pipeline, training, the HTTP gateway
//! and the `synapseroute` command-line tool.

pub mod backend;
pub mod cli;
pub mod config;
pub mod embed;
pub mod gateway;
pub mod ingest;
pub mod jsonl;
pub mod labeler;
pub mod training;

pub use synapseroute_core as core;
