//! Soft clustering of one tree layer over its summary embeddings.

use thiserror::Error;

use crate::config::RetrieverParams;
use crate::gmm::{project_principal, select_model, GmmError};
use crate::tree::{NodeId, NodeKind, TreeNode};

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    /// The layer is too small to cluster; tree growth stops here.
    #[error("layer has {n} summary nodes, below the minimum of {min}")]
    TooFewNodes { n: usize, min: usize },
    #[error(transparent)]
    Gmm(#[from] GmmError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    /// The clustered (summary) nodes, in input order.
    pub node_ids: Vec<NodeId>,
    /// Per node: (cluster, responsibility) pairs at or above the threshold.
    pub memberships: Vec<Vec<(usize, f64)>>,
    /// Members of each cluster, ordered by position in `node_ids`. Clusters
    /// are numbered by their first member.
    pub clusters: Vec<Vec<NodeId>>,
}

/// Thresholded membership from a responsibility matrix. A node whose every
/// responsibility is below `threshold` joins its argmax cluster. Empty
/// clusters are dropped and the rest renumbered by first member.
pub fn assign_soft(
    node_ids: &[NodeId],
    responsibilities: &[Vec<f64>],
    threshold: f64,
) -> ClusterAssignment {
    let k = responsibilities.first().map(Vec::len).unwrap_or(0);
    let raw: Vec<Vec<(usize, f64)>> = responsibilities
        .iter()
        .map(|row| {
            let mut m: Vec<(usize, f64)> = row
                .iter()
                .copied()
                .enumerate()
                .filter(|(_, r)| *r >= threshold)
                .collect();
            if m.is_empty() {
                let best = row
                    .iter()
                    .copied()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |acc, (j, r)| if r > acc.1 { (j, r) } else { acc });
                m.push(best);
            }
            m
        })
        .collect();

    // Renumber clusters in order of first appearance.
    let mut relabel = vec![usize::MAX; k];
    let mut next = 0;
    for m in &raw {
        for (j, _) in m {
            if relabel[*j] == usize::MAX {
                relabel[*j] = next;
                next += 1;
            }
        }
    }
    let memberships: Vec<Vec<(usize, f64)>> = raw
        .into_iter()
        .map(|m| {
            let mut m: Vec<(usize, f64)> = m.into_iter().map(|(j, r)| (relabel[j], r)).collect();
            m.sort_by_key(|(j, _)| *j);
            m
        })
        .collect();
    let mut clusters = vec![Vec::new(); next];
    for (id, m) in node_ids.iter().zip(&memberships) {
        for (j, _) in m {
            clusters[*j].push(*id);
        }
    }
    ClusterAssignment {
        node_ids: node_ids.to_vec(),
        memberships,
        clusters,
    }
}

/// Embeddings are projected to this many principal components before
/// fitting; in the raw embedding space the BIC penalty on a few hundred
/// dimensions swamps any likelihood gain and every layer picks k = 1.
pub const REDUCED_DIM: usize = 10;

fn reduced_dim(n: usize) -> usize {
    REDUCED_DIM.min(n / 4).max(1)
}

/// Fits a BIC-selected GMM over the summary embeddings of `nodes` (surprise
/// and leaf nodes are ignored) and soft-assigns each summary node.
pub fn cluster_layer(
    nodes: &[&TreeNode],
    params: &RetrieverParams,
) -> Result<ClusterAssignment, ClusterError> {
    let summaries: Vec<&TreeNode> = nodes
        .iter()
        .copied()
        .filter(|n| n.kind == NodeKind::Summary)
        .collect();
    let n = summaries.len();
    if n < params.min_layer_size.max(2) {
        return Err(ClusterError::TooFewNodes {
            n,
            min: params.min_layer_size.max(2),
        });
    }
    let points: Vec<Vec<f64>> = summaries
        .iter()
        .map(|s| s.embedding.as_slice().to_vec())
        .collect();
    let points = project_principal(&points, reduced_dim(n), params.rng_seed)?;
    let k_max = params.bic_k_max.min(n - 1);
    let model = select_model(&points, k_max, params.rng_seed)?;
    let resp = model.responsibilities(&points)?;
    let ids: Vec<NodeId> = summaries.iter().map(|s| s.id).collect();
    Ok(assign_soft(&ids, &resp, params.soft_assign_threshold))
}
