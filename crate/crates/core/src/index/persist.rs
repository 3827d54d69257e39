//! Single-file index container.
//!
//! ```text
//! ILMTR-INDEX
//! version: 1
//! dim: <embedding dimension>
//! nodes: <node count>
//! corpus: <hex sha256 of the source text>
//! seed: <rng seed>
//! digest: <hex sha256 of everything after the blank line>
//!
//! config <n>\n<n bytes of TOML>\n
//! node <id> <level> <kind> <children|-> <sibling|-> <n>\n<n bytes of text>\n<base64 f64 LE>\n
//! ...
//! end\n
//! ```

use std::io::Write;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::RetrievalIndex;
use crate::config::RunConfig;
use crate::gateway::Embedding;
use crate::tree::{BuildMeta, NodeKind, Tree, TreeNode};

pub const MAGIC: &str = "ILMTR-INDEX";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not an index file (bad magic line)")]
    BadMagic,
    #[error("index format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: String, expected: u32 },
    #[error("index digest mismatch: header says {expected}, content hashes to {found}")]
    DigestMismatch { expected: String, found: String },
    #[error("index file is truncated")]
    Truncated,
    #[error("index file is corrupt: {0}")]
    Corrupt(String),
}

fn corrupt(msg: impl Into<String>) -> PersistError {
    PersistError::Corrupt(msg.into())
}

fn ids_field(ids: &[usize]) -> String {
    if ids.is_empty() {
        "-".to_string()
    } else {
        ids.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
    }
}

fn encode_vector(v: &[f64]) -> String {
    let bytes: Vec<u8> = v.iter().flat_map(|x| x.to_le_bytes()).collect();
    B64.encode(bytes)
}

fn body_bytes(index: &RetrievalIndex) -> Vec<u8> {
    let tree = index.tree();
    let mut body = Vec::new();
    let config = tree.meta.config.to_toml_string();
    body.extend_from_slice(format!("config {}\n", config.len()).as_bytes());
    body.extend_from_slice(config.as_bytes());
    body.push(b'\n');
    for n in &tree.nodes {
        let sibling = n.sibling.map(|s| s.to_string()).unwrap_or_else(|| "-".into());
        let line = format!(
            "node {} {} {} {} {} {}\n",
            n.id,
            n.level,
            n.kind.as_str(),
            ids_field(&n.children),
            sibling,
            n.text.len()
        );
        body.extend_from_slice(line.as_bytes());
        body.extend_from_slice(n.text.as_bytes());
        body.push(b'\n');
        body.extend_from_slice(encode_vector(n.embedding.as_slice()).as_bytes());
        body.push(b'\n');
    }
    body.extend_from_slice(b"end\n");
    body
}

/// Serializes an index to bytes.
pub fn write_index(index: &RetrievalIndex) -> Vec<u8> {
    let body = body_bytes(index);
    let tree = index.tree();
    let header = format!(
        "{MAGIC}\nversion: {FORMAT_VERSION}\ndim: {}\nnodes: {}\ncorpus: {}\nseed: {}\ndigest: {}\n\n",
        index.dim(),
        tree.nodes.len(),
        tree.meta.corpus_digest,
        tree.meta.seed,
        hex::encode(Sha256::digest(&body)),
    );
    let mut out = header.into_bytes();
    out.extend_from_slice(&body);
    out
}

pub fn save_index(index: &RetrievalIndex, path: &Path) -> Result<(), PersistError> {
    let bytes = write_index(index);
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    f.sync_all()?;
    Ok(())
}

pub fn load_index(path: &Path) -> Result<RetrievalIndex, PersistError> {
    read_index(&std::fs::read(path)?)
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn line(&mut self) -> Result<&'a str, PersistError> {
        let rest = &self.data[self.pos..];
        let end = rest
            .iter()
            .position(|b| *b == b'\n')
            .ok_or(PersistError::Truncated)?;
        self.pos += end + 1;
        std::str::from_utf8(&rest[..end]).map_err(|_| corrupt("non-UTF-8 line"))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], PersistError> {
        if self.data.len() - self.pos < n {
            return Err(PersistError::Truncated);
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn newline(&mut self) -> Result<(), PersistError> {
        match self.take(1)? {
            b"\n" => Ok(()),
            _ => Err(corrupt("expected newline")),
        }
    }
}

fn header_field<'a>(c: &mut Cursor<'a>, key: &str) -> Result<&'a str, PersistError> {
    let line = c.line()?;
    line.strip_prefix(key)
        .and_then(|r| r.strip_prefix(": "))
        .ok_or_else(|| corrupt(format!("expected header field `{key}`")))
}

fn parse_num<T: std::str::FromStr>(s: &str, what: &str) -> Result<T, PersistError> {
    s.parse().map_err(|_| corrupt(format!("bad {what}: {s:?}")))
}

fn parse_ids(s: &str) -> Result<Vec<usize>, PersistError> {
    if s == "-" {
        return Ok(Vec::new());
    }
    s.split(',').map(|x| parse_num(x, "node id")).collect()
}

/// Parses bytes written by [`write_index`].
pub fn read_index(data: &[u8]) -> Result<RetrievalIndex, PersistError> {
    let mut c = Cursor { data, pos: 0 };
    let magic = c.line().map_err(|e| match e {
        PersistError::Truncated if data.len() < MAGIC.len() => PersistError::BadMagic,
        e => e,
    })?;
    if magic != MAGIC {
        return Err(PersistError::BadMagic);
    }
    let version = header_field(&mut c, "version")?;
    if version != FORMAT_VERSION.to_string() {
        return Err(PersistError::VersionMismatch {
            found: version.to_string(),
            expected: FORMAT_VERSION,
        });
    }
    let dim: usize = parse_num(header_field(&mut c, "dim")?, "dim")?;
    let count: usize = parse_num(header_field(&mut c, "nodes")?, "node count")?;
    let corpus = header_field(&mut c, "corpus")?.to_string();
    let seed: u64 = parse_num(header_field(&mut c, "seed")?, "seed")?;
    let digest = header_field(&mut c, "digest")?.to_string();
    if !c.line()?.is_empty() {
        return Err(corrupt("missing blank line after header"));
    }
    let body_start = c.pos;

    let config_line = c.line()?;
    let config_len: usize = parse_num(
        config_line
            .strip_prefix("config ")
            .ok_or_else(|| corrupt("expected config block"))?,
        "config length",
    )?;
    let config_bytes = c.take(config_len)?;
    c.newline()?;

    let mut raw_nodes = Vec::with_capacity(count.min(1 << 20));
    loop {
        let line = c.line()?;
        if line == "end" {
            break;
        }
        let fields: Vec<&str> = line.split(' ').collect();
        if fields.len() != 7 || fields[0] != "node" {
            return Err(corrupt(format!("bad node line {line:?}")));
        }
        let text_len: usize = parse_num(fields[6], "text length")?;
        let text = c.take(text_len)?;
        c.newline()?;
        let vector = c.line()?;
        raw_nodes.push((fields, text, vector));
    }
    if c.pos != data.len() {
        return Err(corrupt("trailing bytes after end marker"));
    }

    let found = hex::encode(Sha256::digest(&data[body_start..]));
    if found != digest {
        return Err(PersistError::DigestMismatch {
            expected: digest,
            found,
        });
    }

    let config_text =
        std::str::from_utf8(config_bytes).map_err(|_| corrupt("config is not UTF-8"))?;
    let config =
        RunConfig::from_toml_str(config_text).map_err(|e| corrupt(format!("config: {e}")))?;

    if raw_nodes.len() != count {
        return Err(corrupt(format!(
            "header lists {count} nodes, body has {}",
            raw_nodes.len()
        )));
    }
    let mut nodes = Vec::with_capacity(count);
    for (expected_id, (fields, text, vector)) in raw_nodes.into_iter().enumerate() {
        let id: usize = parse_num(fields[1], "node id")?;
        if id != expected_id {
            return Err(corrupt(format!("node {id} out of order")));
        }
        let kind = NodeKind::parse(fields[3]).ok_or_else(|| corrupt("bad node kind"))?;
        let sibling = match fields[5] {
            "-" => None,
            s => Some(parse_num(s, "sibling id")?),
        };
        let bytes = B64
            .decode(vector)
            .map_err(|_| corrupt(format!("bad embedding for node {id}")))?;
        if bytes.len() != dim * 8 {
            return Err(corrupt(format!("embedding of node {id} has wrong length")));
        }
        let v: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
            .collect();
        let text = String::from_utf8(text.to_vec()).map_err(|_| corrupt("node text is not UTF-8"))?;
        nodes.push(TreeNode {
            id,
            level: parse_num(fields[2], "level")?,
            kind,
            token_count: crate::chunker::count_tokens(&text),
            text,
            embedding: Embedding::from_unit(v),
            children: parse_ids(fields[4])?,
            sibling,
        });
    }
    for n in &nodes {
        if n.children.iter().chain(n.sibling.iter()).any(|&x| x >= count) {
            return Err(corrupt(format!("node {} links to a missing node", n.id)));
        }
    }
    Ok(RetrievalIndex::from_tree(Tree {
        nodes,
        meta: BuildMeta {
            config,
            seed,
            corpus_digest: corpus,
        },
    }))
}
