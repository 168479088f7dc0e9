//! Mines version-compatibility knowledge about deep-learning stack components
//! from Q&A posts and serves it as a queryable graph.
//!
//! Pipeline: [`corpus`] loads and filters posts, [`recognizer`] finds
//! versioned components, [`inference`] labels pairs, [`graph`] aggregates
//! the verdicts. [`query`], [`checker`] and [`service`] read the result.

pub mod checker;
pub mod corpus;
pub mod dictionary;
pub mod error;
pub mod graph;
pub mod inference;
pub mod matching;
pub mod pipeline;
pub mod query;
pub mod recognizer;
pub mod service;
pub mod version;

pub use dictionary::{ComponentEntry, Dictionary, Layer};
pub use error::{Error, Result};
pub use graph::{
    aggregate, confidence_score, load_graph, save_graph, Confidence, KnowledgeGraph, Relation,
};
pub use inference::{Label, Verdict};
pub use recognizer::{Recognizer, VersionedComponent};
pub use version::{normalize_version, Version};

/// Version of every JSON document the service and the CLI machine output emit.
pub const SCHEMA_VERSION: u32 = 1;
