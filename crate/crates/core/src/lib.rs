//! Inner-loop memory-augmented tree retrieval.
//!
//! Builds a multi-level summary tree over a long document, retrieves over
//! every node of the tree at once by cosine similarity, and answers through
//! a short-term-memory loop that re-retrieves until the answer settles.

pub mod bench;
pub mod chunker;
pub mod cli;
pub mod cluster;
pub mod config;
pub mod gateway;
pub mod gmm;
pub mod index;
pub mod inner_loop;
pub mod prompts;
pub mod summarizer;
pub mod tree;

pub use config::{load_config, RunConfig};
pub use gateway::Backends;
pub use index::{collapsed_retrieve, load_index, save_index, RetrievalIndex};
pub use inner_loop::{run_inner_loop, run_query, LoopTrace, QueryMode};
pub use tree::{build_tree, Tree};
