//! Reasoning-path bank distillation supervision.
//!
//! This crate holds the allocation-only algorithmic core: the domain types,
//! a deterministic embedding provider, cosine DBSCAN, the path bank, the
//! teacher prompt/reply protocol with a deterministic mock, the supervision
//! pipeline loop and the generalization-bound calculators.
//!
//! Anything that touches the network, the filesystem, threads or a clock
//! lives in the `pathbank` companion crate behind the traits defined here
//! ([`embed::Embedder`] and [`teacher::ChatBackend`]).

#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod bank;
pub mod bounds;
pub mod cluster;
pub mod embed;
pub mod pipeline;
pub mod teacher;
pub mod types;

pub use bank::{Bank, FallbackLevel, NoveltyOutcome, ReclusterOutcome, RoutingResult};
pub use cluster::{DbscanParams, IntentCluster, Label};
pub use embed::{cosine, embed_path, DeterministicEmbedder, EmbedError, Embedder};
pub use types::{
    validate_supervision_tuple, Question, Rationale, ReasoningPath, Route, SupervisionTuple, Vector, Violation,
};
