//! Filtered approximate nearest neighbor search.
//!
//! The crate groups the filtered-search strategies by where the label
//! predicate is evaluated relative to vector search:
//!
//! * filter-then-search: pre-filter brute force, ACORN-γ, ACORN-1, UNG
//! * search-then-filter: post-filter HNSW, post-filter IVF-PQ
//! * hybrid search: Filtered-Vamana, Stitched-Vamana, NHQ, CAPS
//!
//! All strategies share the bitmap filter layer in [`filter`], are checked
//! against the exact scan in [`oracle`], and are measured by the harness in
//! [`harness`].

pub mod container;
pub mod error;
pub mod filter;
pub mod fixtures;
pub mod graph;
pub mod harness;
pub mod model;
pub mod oracle;
pub mod quant;
pub mod strategy;
pub mod tuner;
pub mod workload;

pub use error::{FannsError, Result};
pub use filter::{FilterBitmap, InvertedLabelIndex};
pub use model::{
    distance, recall_at_k, satisfies, selectivity, Dataset, DatasetRecord, DistanceMetric,
    Embedding, FilterConstraint, FilteredQuery, GroundTruth, LabelSet, Neighbor, Vectors,
};
pub use oracle::{exact_filtered_knn, OracleResult};
pub use strategy::{Algorithm, FannsIndex, Params, SearchOutput};
pub use workload::Workload;
