//! Non-vector retrieval mechanisms: a similarity graph walked by
//! personalised PageRank, and Okapi BM25 keyword search.

pub mod bm25;
pub mod graph;

pub use bm25::{bm25_build, bm25_query, tokenize, Bm25Index, PassThrough, Reranker};
pub use graph::{build_graph, graph_retrieve, personalized_pagerank, SimilarityGraph};

use crate::error::{Error, Result};

/// Fraction of queries whose two rankings share the same first id.
pub fn retrieval_agreement<T: PartialEq>(rankings_a: &[Vec<T>], rankings_b: &[Vec<T>]) -> Result<f64> {
    if rankings_a.len() != rankings_b.len() {
        return Err(Error::LengthMismatch { left: rankings_a.len(), right: rankings_b.len() });
    }
    if rankings_a.is_empty() {
        return Err(Error::InsufficientData("agreement needs at least one query".into()));
    }
    let same = rankings_a
        .iter()
        .zip(rankings_b)
        .filter(|(a, b)| matches!((a.first(), b.first()), (Some(x), Some(y)) if x == y))
        .count();
    Ok(same as f64 / rankings_a.len() as f64)
}
