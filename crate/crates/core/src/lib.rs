//! Core library for the drugtrace pipeline: classify social-media posts as
//! drug-related by fusing an image-embedding classifier with a text
//! classifier, extract account-level behavior features, and flag likely
//! dealer accounts.
//!
//! The pipeline runs in three stages:
//!
//! 1. Post classification — a multitask MLP over precomputed image
//!    embeddings ([`multitask`]) and a tf-idf naive Bayes text classifier
//!    ([`text`]), combined by decision-level fusion ([`fusion`]).
//! 2. Account profiling — behavior features per account: drug-post
//!    percentage, hour-of-day bins, follower relations, transaction
//!    evidence ([`features`]).
//! 3. Dealer detection — L1-regularized logistic regression with
//!    coefficient-threshold feature selection ([`dealer`]).
//!
//! [`corpus`] holds the data model, JSONL ingestion, fold splitting, and a
//! seeded synthetic-corpus generator. [`eval`] provides metrics and the
//! cross-validation drivers. [`bundle`] is the versioned serialization of
//! every fitted component.

pub mod bundle;
pub mod corpus;
pub mod dealer;
pub mod error;
pub mod eval;
pub mod features;
pub mod fusion;
pub mod multitask;
pub mod report;
pub mod synth;
pub mod text;

pub use error::{Error, Result};
