//! Collapsed-tree retrieval: every node of the tree in one flat table,
//! ranked by cosine similarity to the query.

mod persist;

pub use persist::{load_index, read_index, save_index, write_index, PersistError, FORMAT_VERSION, MAGIC};

use std::cmp::Ordering;

use thiserror::Error;

use crate::config::RetrieverParams;
use crate::gateway::mock::HIT_HEADER_PREFIX;
use crate::gateway::{Embedding, EmbeddingBackend, GatewayError};
use crate::tree::{NodeId, NodeKind, Tree, TreeNode};

#[derive(Debug, Error)]
pub enum RetrieveError {
    #[error("index is empty")]
    EmptyIndex,
    #[error("query embedding has dimension {got}, index has {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("embedding the query failed: {0}")]
    Embed(#[from] GatewayError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndexEntry {
    pub id: NodeId,
    pub kind: NodeKind,
    pub level: usize,
    pub token_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalIndex {
    tree: Tree,
    dim: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub id: NodeId,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RetrievedInfo {
    /// Best first; ties broken by ascending node id.
    pub hits: Vec<Hit>,
    pub assembled_text: String,
    pub total_tokens: usize,
}

impl RetrievedInfo {
    pub fn ids(&self) -> Vec<NodeId> {
        self.hits.iter().map(|h| h.id).collect()
    }
}

/// Ranking order: higher score first, then lower id. Scores compare by
/// value, so `0.0` and `-0.0` tie.
pub fn rank_order(a: &Hit, b: &Hit) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then(a.id.cmp(&b.id))
}

fn hit_header(node: &TreeNode) -> String {
    format!(
        "{HIT_HEADER_PREFIX}{} | level {} | {}]",
        node.id,
        node.level,
        node.kind.as_str()
    )
}

impl RetrievalIndex {
    /// Wraps a tree. Panics if embedding dimensions disagree, which a tree
    /// built by one embedding backend never does.
    pub fn from_tree(tree: Tree) -> Self {
        let dim = tree.nodes.first().map(|n| n.embedding.dim()).unwrap_or(0);
        assert!(
            tree.nodes.iter().all(|n| n.embedding.dim() == dim),
            "tree mixes embedding dimensions"
        );
        Self { tree, dim }
    }

    pub fn tree(&self) -> &Tree {
        &self.tree
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.tree.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tree.nodes.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = IndexEntry> + '_ {
        self.tree.nodes.iter().map(|n| IndexEntry {
            id: n.id,
            kind: n.kind,
            level: n.level,
            token_count: n.token_count,
        })
    }

    /// Every node scored against `query`, in rank order.
    pub fn rank(&self, query: &Embedding) -> Result<Vec<Hit>, RetrieveError> {
        if self.is_empty() {
            return Err(RetrieveError::EmptyIndex);
        }
        if query.dim() != self.dim {
            return Err(RetrieveError::DimensionMismatch {
                expected: self.dim,
                got: query.dim(),
            });
        }
        let mut hits: Vec<Hit> = self
            .tree
            .nodes
            .iter()
            .map(|n| Hit {
                id: n.id,
                score: n.embedding.cosine(query),
            })
            .collect();
        hits.sort_by(rank_order);
        Ok(hits)
    }

    /// Takes ranked hits until `retrieval_top_k` is reached or the next
    /// node would push the total past `retrieval_token_budget`.
    pub fn search(&self, query: &Embedding, params: &RetrieverParams) -> Result<RetrievedInfo, RetrieveError> {
        let mut out = RetrievedInfo::default();
        let mut blocks = Vec::new();
        for hit in self.rank(query)? {
            if out.hits.len() >= params.retrieval_top_k {
                break;
            }
            let node = &self.tree.nodes[hit.id];
            if out.total_tokens + node.token_count > params.retrieval_token_budget {
                break;
            }
            out.total_tokens += node.token_count;
            blocks.push(format!("{}\n{}", hit_header(node), node.text));
            out.hits.push(hit);
        }
        out.assembled_text = blocks.join("\n\n");
        Ok(out)
    }
}

/// Embeds `query_text` and searches the collapsed table.
pub fn collapsed_retrieve(
    index: &RetrievalIndex,
    query_text: &str,
    params: &RetrieverParams,
    embedder: &dyn EmbeddingBackend,
) -> Result<RetrievedInfo, RetrieveError> {
    if index.is_empty() {
        return Err(RetrieveError::EmptyIndex);
    }
    let q = embedder.embed_one(query_text)?;
    index.search(&q, params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signed_zero_scores_tie_by_id() {
        let mut hits = [
            Hit { id: 3, score: -0.0 },
            Hit { id: 7, score: 0.0 },
            Hit { id: 1, score: 0.5 },
        ];
        hits.sort_by(rank_order);
        assert_eq!(hits.iter().map(|h| h.id).collect::<Vec<_>>(), [1, 3, 7]);
        hits.swap(1, 2);
        hits.sort_by(rank_order);
        assert_eq!(hits.iter().map(|h| h.id).collect::<Vec<_>>(), [1, 3, 7]);
    }
}
