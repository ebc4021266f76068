//! Outcome-oriented predictive process monitoring.
//!
//! The crate trains binary outcome classifiers on the prefixes of completed
//! business-process cases and scores running cases. A method is a pair of a
//! trace *bucketing* strategy (single, prefix length, state, cluster, KNN)
//! and a sequence *encoding* (last state, aggregation, index), combined with
//! a classifier (logistic regression, decision tree, random forest).
//!
//! Offline: [`pipeline::train_offline`]. Online: [`pipeline::predict_online`].
//! Evaluation by prefix length lives in [`evaluation`].

pub mod error;
pub mod event_log;
pub mod labeling;
pub mod prefixing;
pub mod encoding;
pub mod bucketing;
pub mod classifiers;
pub mod pipeline;
pub mod evaluation;
pub mod synthetic;
pub mod bench;

pub use error::{Error, Result};
