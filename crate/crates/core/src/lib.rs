//! Feedback-driven updating of outdated Java unit tests.

pub mod java;
pub mod model;
pub mod report;
pub mod tokens;
pub mod llm;
pub mod build;
pub mod retrieval;
pub mod agents;
pub mod coordinator;
pub mod corpus;
pub mod eval;
pub mod cli;
