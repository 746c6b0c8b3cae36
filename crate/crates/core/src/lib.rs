//! Graph-to-token toolkit.
//!
//! Compresses an attributed graph into a short sequence of soft tokens via
//! hierarchical pooling operators (Top-k, SAGPool, DiffPool, MinCutPool,
//! virtual-node cross-attention) on top of dense node-embedding backbones,
//! plus the surrounding machinery: a prize-collecting Steiner tree retriever,
//! a feature/structure redundancy diagnostic over multi-seed prediction logs,
//! and a deterministic training harness contrasting a frozen readout against
//! a low-rank-adapted one.
//!
//! Everything is plain `f64` dense linear algebra with hand-written backward
//! passes, each validated against the central-difference oracle in
//! [`numerics`].

pub mod encoders;
pub mod fande;
pub mod graph;
pub mod harness;
pub mod numerics;
pub mod pooling;
pub mod retriever;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Shapes or sizes do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    /// An input value violates a precondition (NaN, bad range, bad config).
    #[error("invalid input: {0}")]
    Invalid(String),
    /// A document could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),
    /// A prediction log is missing (model, seed, example) records.
    #[error("coverage error: {0}")]
    Coverage(String),
    /// A computation produced NaN or infinity.
    #[error("non-finite value: {0}")]
    NonFinite(String),
}

pub type Result<T> = std::result::Result<T, Error>;
