//! Sub-instruction similarity, clustering and per-cluster performance.

mod bleu;
mod cluster;
mod summary;

use thiserror::Error;

pub use bleu::{modified_precision, smoothed_bleu4};
pub use cluster::{complete_linkage_cluster, similarity_matrix, ClusterAssignment, SimilarityMatrix};
pub use summary::{
    chunking_quality, cluster_summary, subinstruction_results, ClusterSummary, Segmentation,
    SubInstructionResult,
};

use crate::dataset::DatasetError;
use crate::metrics::MetricError;
use crate::navgraph::GraphError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("cannot form {k} clusters from {n} items")]
    ClusterCount { k: usize, n: usize },
    #[error("no result record for sub-instruction {index} ({text:?})")]
    MissingResult { index: usize, text: String },
    #[error("{results} result records for {items} clustered items")]
    LengthMismatch { results: usize, items: usize },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}
