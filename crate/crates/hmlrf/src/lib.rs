//! Hierarchical multi-label random forests (HML-RF) for discovering semantic
//! structure in sparsely tagged visual data.
//!
//! The crate covers the full pipeline: tag-hierarchy estimation from flat tag
//! sets, cross-layer tag-correlation mining, forest training with a layered
//! multi-label Gini gain, leaf-co-occupancy affinity graphs with spectral
//! clustering, three missing-tag completion algorithms, and the evaluation
//! metrics used to score both clustering and completion.

pub mod affinity;
pub mod completion;
pub mod data;
pub mod error;
pub mod forest;
pub mod hierarchy;
pub mod kmeans;
pub mod linalg;
pub mod metrics;
pub mod spectral;
pub mod synthetic;
pub mod tag_stats;

pub use error::{Error, Result};
