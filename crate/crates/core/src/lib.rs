//! Memory-disk hybrid inverted-file index for approximate nearest neighbor
//! search.
//!
//! The index keeps one representative vector per posting list in memory and
//! the full-precision posting lists on disk. Construction balances posting
//! lengths with hierarchical balanced clustering, replicates boundary
//! vectors into nearby lists (closure assignment with RNG-rule filtering),
//! and search prunes candidate lists per query before touching disk.
//!
//! Modules follow the pipeline: [`vectors`] (data + distances), [`knn`]
//! (exact top-k engines), [`clustering`] (partition build), [`navigator`]
//! (in-memory index over representatives), [`posting_store`] (on-disk
//! lists), [`index`] (build orchestration), [`searcher`] (query pipeline),
//! [`eval`] (metrics and sweeps), [`distributed`] (multi-machine dispatch
//! simulation).

pub mod clustering;
pub mod distributed;
pub mod error;
pub mod eval;
pub mod index;
pub mod knn;
pub mod navigator;
pub mod posting_store;
pub mod searcher;
pub mod vectors;

pub use error::{Error, Result};
pub use knn::Neighbor;
pub use vectors::{distance, Dataset, ElemType, Metric, VectorData, VectorView};
