//! Privacy-preserving diversified service recommendation.
//!
//! Platforms that hold disjoint user populations hash their per-service QoS
//! vectors with random-hyperplane LSH and exchange only the resulting bit
//! signatures. Repeated indexing rounds produce a service-similarity graph,
//! which drives QoS prediction and a greedy accuracy/diversity top-K selection
//! with a 2-approximation guarantee.
//!
//! Module map:
//!
//! - [`lsh`]: hyperplane families, signatures and the analytical collision laws.
//! - [`federation`]: platform datasets, the signature wire format, privacy audit.
//! - [`graph`]: similarity-graph construction and expansion queries.
//! - [`recommend`]: prediction, the objective, greedy and brute-force solvers.
//! - [`eval`]: dataset ingestion, splitting, metrics, pipeline and sweeps.

pub mod error;
pub mod eval;
pub mod federation;
pub mod graph;
pub mod lsh;
pub mod recommend;
pub mod rng;

pub use error::{PdsrError, Result};
