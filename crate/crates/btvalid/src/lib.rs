//! Backtranslation validation toolkit.
//!
//! Round-trips corpora of short texts through a pivot language and measures
//! how well translation preserves three analytics: lexicon sentiment
//! accuracy, topic-cluster assignment, and embedding-space distance. Each
//! metric comes with a statistical baseline (bootstrap intervals for
//! sentiment, permutation nulls for topics, peer-distance baselines for
//! embeddings) so drift can be judged against chance.

pub mod corpus;
pub mod embed;
pub mod report;
pub mod sentiment;
pub mod stats;
pub mod tokenize;
pub mod topics;
pub mod translate;
