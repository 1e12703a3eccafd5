//! Sub-instruction aware instruction-following navigation.
//!
//! The crate covers the whole pipeline around a navigation agent that reads
//! one sub-instruction at a time:
//!
//! * [`conllu`] reads dependency-annotated instructions,
//! * [`chunker`] splits them into ordered sub-instructions,
//! * [`navgraph`] models the viewpoint graph and its geodesics,
//! * [`dataset`] pairs sub-instructions with sub-paths and derives shift supervision,
//! * [`metrics`] scores trajectories (PL, NE, OSR, SR, SPL, nDTW) and shift predictions,
//! * [`neural`] is the reference agent kernel with hand-written gradients,
//! * [`agent`] rolls the agent out on episodes and trains it on toy worlds,
//! * [`analysis`] clusters sub-instructions and summarizes per-cluster performance.
//!
//! Numeric kernels are generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below pin the double-precision instantiations used by the CLI and the
//! gradient checks.

pub mod agent;
pub mod analysis;
pub mod chunker;
pub mod conllu;
pub mod dataset;
pub mod metrics;
pub mod navgraph;
pub mod neural;
pub mod rng;
pub mod scalar;

pub use scalar::Scalar;

/// Dense tensor in double precision.
pub type Tensor64 = neural::Tensor<f64>;
/// Dense tensor in single precision.
pub type Tensor32 = neural::Tensor<f32>;
/// Agent parameters in double precision.
pub type Params64 = neural::ModelParams<f64>;
/// Agent parameters in single precision.
pub type Params32 = neural::ModelParams<f32>;
/// Parameter gradients in double precision.
pub type Grads64 = neural::ModelParams<f64>;
/// Similarity matrix over sub-instructions in double precision.
pub type SimilarityMatrix64 = analysis::SimilarityMatrix<f64>;
/// Similarity matrix over sub-instructions in single precision.
pub type SimilarityMatrix32 = analysis::SimilarityMatrix<f32>;
