//! Name-mention disambiguation: similarity graphs over mention embeddings,
//! community detection, a supervised antecedent classifier with Hungarian
//! conflict resolution, and coreference scoring.
//!
//! The algorithms are generic over the scalar type; the aliases below fix
//! it to `f64`.

pub mod antecedent;
pub mod assignment;
pub mod clustering;
pub mod communities;
pub mod corpus;
pub mod embeddings;
pub mod error;
pub mod graph;
pub mod inference;
pub mod metrics;
pub mod pipeline;
pub mod scalar;

pub use clustering::Clustering;
pub use corpus::Corpus;
pub use error::{Error, Result};

pub type EmbeddingMatrix = embeddings::Embeddings<f64>;
pub type MentionGraph = graph::Graph<f64>;
pub type AntecedentModel = antecedent::Mlp<f64>;
pub type CostMatrix = assignment::CostMatrix<f64>;
pub type MetricReport = metrics::MetricReport<f64>;
