//! Recursive embed, cluster and summarize cycle producing the summary tree.
//!
//! Level 0 holds the raw chunks. Level 1 holds one summary per chunk plus a
//! sibling surprise node whenever the chunk had surprising facts. From level
//! 1 upward, each layer's summary nodes are clustered and every cluster is
//! summarized into a node one level up. Surprise nodes are indexed but never
//! clustered.

use rayon::prelude::*;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::chunker::{chunk_text, count_tokens};
use crate::cluster::{cluster_layer, ClusterError};
use crate::config::RunConfig;
use crate::gateway::{Backends, Embedding, GatewayError};
use crate::gmm::GmmError;
use crate::summarizer::{DualSummary, SummarizeError, Summarizer};

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    LeafText,
    Summary,
    Surprise,
}

impl NodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::LeafText => "leaf",
            NodeKind::Summary => "summary",
            NodeKind::Surprise => "surprise",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "leaf" => Some(NodeKind::LeafText),
            "summary" => Some(NodeKind::Summary),
            "surprise" => Some(NodeKind::Surprise),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub id: NodeId,
    pub level: usize,
    pub kind: NodeKind,
    pub text: String,
    pub embedding: Embedding,
    pub token_count: usize,
    /// Nodes one level down that this summary covers. Empty for leaves and
    /// surprise nodes.
    pub children: Vec<NodeId>,
    /// For a surprise node, the summary node produced alongside it.
    pub sibling: Option<NodeId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildMeta {
    pub config: RunConfig,
    pub seed: u64,
    /// Hex SHA-256 of the source text.
    pub corpus_digest: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    /// Indexed by node id.
    pub nodes: Vec<TreeNode>,
    pub meta: BuildMeta,
}

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("input text is empty")]
    EmptyInput,
    #[error("summarizing level {level} failed: {source}")]
    Summarize {
        level: usize,
        #[source]
        source: SummarizeError,
    },
    #[error("embedding level {level} failed: {source}")]
    Embed {
        level: usize,
        #[source]
        source: GatewayError,
    },
    #[error("clustering level {level} failed: {source}")]
    Cluster {
        level: usize,
        #[source]
        source: GmmError,
    },
}

impl BuildError {
    /// True when a model backend (not the input) caused the failure.
    pub fn is_backend(&self) -> bool {
        match self {
            BuildError::Embed { .. } => true,
            BuildError::Summarize { source, .. } => matches!(source, SummarizeError::Gateway(_)),
            _ => false,
        }
    }
}

pub fn corpus_digest(raw: &str) -> String {
    hex::encode(Sha256::digest(raw.as_bytes()))
}

impl Tree {
    pub fn node(&self, id: NodeId) -> Option<&TreeNode> {
        self.nodes.get(id)
    }

    pub fn root_level(&self) -> usize {
        self.nodes.iter().map(|n| n.level).max().unwrap_or(0)
    }

    /// Node ids per level, including surprise nodes.
    pub fn layers(&self) -> Vec<Vec<NodeId>> {
        let mut layers = vec![Vec::new(); self.root_level() + 1];
        for n in &self.nodes {
            layers[n.level].push(n.id);
        }
        layers
    }

    /// Leaf or summary nodes per level (surprise nodes excluded).
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.root_level() + 1];
        for n in self.nodes.iter().filter(|n| n.kind != NodeKind::Surprise) {
            sizes[n.level] += 1;
        }
        sizes
    }

    /// Surprise nodes per level.
    pub fn surprise_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.root_level() + 1];
        for n in self.nodes.iter().filter(|n| n.kind == NodeKind::Surprise) {
            sizes[n.level] += 1;
        }
        sizes
    }

    pub fn surprise_count(&self) -> usize {
        self.surprise_sizes().iter().sum()
    }

    pub fn summaries_at(&self, level: usize) -> Vec<&TreeNode> {
        self.nodes
            .iter()
            .filter(|n| n.level == level && n.kind == NodeKind::Summary)
            .collect()
    }
}

struct Pending {
    level: usize,
    children: Vec<NodeId>,
    summary: DualSummary,
}

struct Builder<'a> {
    backends: &'a Backends,
    nodes: Vec<TreeNode>,
}

impl Builder<'_> {
    fn embed(&self, level: usize, texts: &[String]) -> Result<Vec<Embedding>, BuildError> {
        self.backends
            .embed
            .embed(texts)
            .map_err(|source| BuildError::Embed { level, source })
    }

    fn push(&mut self, level: usize, kind: NodeKind, text: String, embedding: Embedding) -> NodeId {
        let id = self.nodes.len();
        self.nodes.push(TreeNode {
            id,
            level,
            kind,
            token_count: count_tokens(&text),
            text,
            embedding,
            children: Vec::new(),
            sibling: None,
        });
        id
    }

    /// Adds summary (and surprise) nodes in `pending` order; returns the new
    /// summary ids.
    fn add_summaries(&mut self, pending: Vec<Pending>) -> Result<Vec<NodeId>, BuildError> {
        let Some(level) = pending.first().map(|p| p.level) else {
            return Ok(Vec::new());
        };
        let mut texts = Vec::new();
        for p in &pending {
            texts.push(p.summary.summary.clone());
            if !p.summary.surprise.is_empty() {
                texts.push(p.summary.surprise.clone());
            }
        }
        let mut embeddings = self.embed(level, &texts)?.into_iter();
        let mut ids = Vec::with_capacity(pending.len());
        for p in pending {
            let e = embeddings.next().expect("one embedding per text");
            let sid = self.push(p.level, NodeKind::Summary, p.summary.summary, e);
            self.nodes[sid].children = p.children;
            if !p.summary.surprise.is_empty() {
                let e = embeddings.next().expect("one embedding per text");
                let xid = self.push(p.level, NodeKind::Surprise, p.summary.surprise, e);
                self.nodes[xid].sibling = Some(sid);
            }
            ids.push(sid);
        }
        Ok(ids)
    }
}

fn summarize_all(
    summarizer: &Summarizer<'_>,
    level: usize,
    inputs: Vec<(Vec<NodeId>, String)>,
) -> Result<Vec<Pending>, BuildError> {
    inputs
        .into_par_iter()
        .map(|(children, text)| {
            summarizer
                .summarize_chunk(&text)
                .map(|summary| Pending {
                    level,
                    children,
                    summary,
                })
                .map_err(|source| BuildError::Summarize { level, source })
        })
        .collect()
}

/// Builds the full tree over `raw`.
pub fn build_tree(raw: &str, config: &RunConfig, backends: &Backends) -> Result<Tree, BuildError> {
    let chunks = chunk_text(raw, config.retriever.chunk_max_tokens);
    if chunks.is_empty() {
        return Err(BuildError::EmptyInput);
    }
    let summarizer = Summarizer::new(backends.chat.as_ref(), config);
    let mut b = Builder {
        backends,
        nodes: Vec::new(),
    };

    let texts: Vec<String> = chunks.iter().map(|c| c.text.clone()).collect();
    let leaf_embeddings = b.embed(0, &texts)?;
    for (chunk, e) in chunks.into_iter().zip(leaf_embeddings) {
        b.push(0, NodeKind::LeafText, chunk.text, e);
    }

    let inputs: Vec<(Vec<NodeId>, String)> = b
        .nodes
        .iter()
        .map(|n| (vec![n.id], n.text.clone()))
        .collect();
    let pending = summarize_all(&summarizer, 1, inputs)?;
    let mut current = b.add_summaries(pending)?;
    let mut level = 1;

    while current.len() > 1 {
        let layer: Vec<&TreeNode> = current.iter().map(|&id| &b.nodes[id]).collect();
        let groups: Vec<Vec<NodeId>> = match cluster_layer(&layer, &config.retriever) {
            Ok(assignment) => assignment.clusters,
            // Too small to cluster: close the tree with one root summary.
            Err(ClusterError::TooFewNodes { .. }) => vec![current.clone()],
            Err(ClusterError::Gmm(source)) => return Err(BuildError::Cluster { level, source }),
        };
        if groups.len() >= current.len() {
            break;
        }
        let inputs: Vec<(Vec<NodeId>, String)> = groups
            .into_iter()
            .map(|mut members| {
                members.sort_unstable();
                let text = members
                    .iter()
                    .map(|&id| b.nodes[id].text.as_str())
                    .collect::<Vec<_>>()
                    .join("\n\n");
                (members, text)
            })
            .collect();
        level += 1;
        let pending = summarize_all(&summarizer, level, inputs)?;
        current = b.add_summaries(pending)?;
    }

    Ok(Tree {
        nodes: b.nodes,
        meta: BuildMeta {
            config: config.clone(),
            seed: config.retriever.rng_seed,
            corpus_digest: corpus_digest(raw),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::mock::{ExtractiveChat, HashedBagEmbedder, ScriptedChat};

    fn mock_backends() -> Backends {
        Backends::new(
            ExtractiveChat::new(["secret ingredient"]),
            HashedBagEmbedder::default(),
        )
    }

    #[test]
    fn smallest_tree() {
        let c = RunConfig::default();
        let t = build_tree("A short note. Nothing more.", &c, &mock_backends()).unwrap();
        assert_eq!(t.layer_sizes(), vec![1, 1]);
        assert!(t.surprise_count() <= 1);
        assert_eq!(t.nodes[1].children, vec![0]);
        assert_eq!(t.meta.corpus_digest, corpus_digest("A short note. Nothing more."));
    }

    #[test]
    fn empty_input_is_rejected() {
        let c = RunConfig::default();
        assert!(matches!(
            build_tree("   ", &c, &mock_backends()),
            Err(BuildError::EmptyInput)
        ));
    }

    #[test]
    fn needle_becomes_sibling_surprise() {
        let c = RunConfig::default();
        let needle = "Figs are one of the secret ingredients needed to build the perfect pizza.";
        let raw = format!("The river ran east. {needle} The hills were green.");
        let t = build_tree(&raw, &c, &mock_backends()).unwrap();
        let s = t
            .nodes
            .iter()
            .find(|n| n.kind == NodeKind::Surprise)
            .expect("surprise node");
        assert_eq!(s.text, needle);
        let sib = &t.nodes[s.sibling.unwrap()];
        assert_eq!(sib.kind, NodeKind::Summary);
        assert_eq!(sib.level, s.level);
        assert_eq!(sib.children, vec![0]);
        assert!(s.children.is_empty());
    }

    #[test]
    fn backend_failure_aborts_build() {
        let c = RunConfig::default();
        let b = Backends::new(ScriptedChat::new(Vec::<String>::new()), HashedBagEmbedder::default());
        let err = build_tree("Some text here.", &c, &b).unwrap_err();
        assert!(err.is_backend());
        assert!(matches!(err, BuildError::Summarize { level: 1, .. }));
    }
}
