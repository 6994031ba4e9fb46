//! Pre-trained word-vector tables, query/vertex embedding and the
//! out-of-vocabulary overlap feature.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::keygraph::KeywordGraph;

/// A token -> dense-vector table with a fixed dimension. Lookups are
/// case-folded to lowercase.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    dimension: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dimension: usize) -> Self {
        EmbeddingTable {
            dimension,
            vectors: HashMap::new(),
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn insert(&mut self, token: &str, vector: Vec<f64>) -> bool {
        assert_eq!(vector.len(), self.dimension);
        self.vectors.insert(token.to_lowercase(), vector).is_some()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vectors.get(&token.to_lowercase()).map(|v| v.as_slice())
    }

    pub fn contains(&self, token: &str) -> bool {
        self.vectors.contains_key(&token.to_lowercase())
    }
}

/// Load a text-format vector table: one `token v1 .. vd` line per entry.
///
/// Returns the table plus the number of duplicate tokens whose earlier
/// entries were overwritten.
pub fn load_embeddings(path: &Path, expected_dim: usize) -> Result<(EmbeddingTable, usize)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut table = EmbeddingTable::new(expected_dim);
    let mut duplicates = 0usize;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let token = parts
            .next()
            .ok_or_else(|| Error::parse(path, line_no, "missing token"))?;
        let values: Vec<f64> = parts
            .map(|p| {
                p.parse::<f64>()
                    .map_err(|_| Error::parse(path, line_no, format!("bad number {p:?}")))
            })
            .collect::<Result<_>>()?;
        if values.len() != expected_dim {
            return Err(Error::EmbeddingDimension {
                path: path.to_path_buf(),
                line: line_no,
                expected: expected_dim,
                found: values.len(),
            });
        }
        if table.insert(token, values) {
            duplicates += 1;
        }
    }
    Ok((table, duplicates))
}

/// Write a table in the same text format (sorted by token for determinism).
pub fn write_embeddings(path: &Path, table: &EmbeddingTable) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut tokens: Vec<&String> = table.vectors.keys().collect();
    tokens.sort();
    for token in tokens {
        write!(w, "{token}").map_err(|e| Error::io(path, e))?;
        for v in &table.vectors[token] {
            write!(w, " {v}").map_err(|e| Error::io(path, e))?;
        }
        writeln!(w).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// An embedded (query, document graph) pair ready for the model.
///
/// `q_emb` is `d_q x d_e` row-major with `d_q = max_query_len`; padded and
/// out-of-vocabulary rows are all-zero. `g_emb` embeds graph vertex `i` in
/// row `i`. `x_oov` counts distinct out-of-vocabulary tokens shared by the
/// query and the vertex list.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedPair {
    pub q_emb: Vec<f64>,
    pub mask: Vec<bool>,
    pub g_emb: Vec<f64>,
    pub x_oov: usize,
    pub d_q: usize,
    pub d_g: usize,
    pub d_e: usize,
}

/// Embed a query token list and a keyword graph against a vector table.
pub fn embed_pair(
    query_tokens: &[String],
    graph: &KeywordGraph,
    table: &EmbeddingTable,
    max_query_len: usize,
) -> EmbeddedPair {
    assert!(max_query_len > 0, "max_query_len must be positive");
    let d_e = table.dimension();
    let d_q = max_query_len;
    let d_g = graph.vertex_count();

    let mut q_emb = vec![0.0; d_q * d_e];
    let mut mask = vec![false; d_q];
    for (row, token) in query_tokens.iter().take(d_q).enumerate() {
        mask[row] = true;
        if let Some(vec) = table.get(token) {
            q_emb[row * d_e..(row + 1) * d_e].copy_from_slice(vec);
        }
    }

    let mut g_emb = vec![0.0; d_g * d_e];
    for (row, vertex) in graph.vertices().iter().enumerate() {
        if let Some(vec) = table.get(vertex) {
            g_emb[row * d_e..(row + 1) * d_e].copy_from_slice(vec);
        }
    }

    let vertex_set: HashSet<&str> = graph.vertices().iter().map(|s| s.as_str()).collect();
    let x_oov = query_tokens
        .iter()
        .map(|t| t.to_lowercase())
        .collect::<HashSet<_>>()
        .iter()
        .filter(|t| !table.contains(t) && vertex_set.contains(t.as_str()))
        .count();

    EmbeddedPair {
        q_emb,
        mask,
        g_emb,
        x_oov,
        d_q,
        d_g,
        d_e,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keygraph::KeywordGraph;

    fn temp_file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn graph_of(vertices: &[&str]) -> KeywordGraph {
        let n = vertices.len();
        KeywordGraph::from_parts(
            vertices.iter().map(|v| v.to_string()).collect(),
            vec![0.0; n * n],
        )
    }

    #[test]
    fn load_small_table() {
        let f = temp_file("heart 0.1 0.2 0.3 0.4\nbrain -1 0 0.5 2\n");
        let (table, dups) = load_embeddings(f.path(), 4).unwrap();
        assert_eq!(table.len(), 2);
        assert_eq!(dups, 0);
        assert_eq!(table.get("heart").unwrap(), &[0.1, 0.2, 0.3, 0.4]);
        assert_eq!(table.get("HEART").unwrap(), &[0.1, 0.2, 0.3, 0.4]);
    }

    #[test]
    fn load_rejects_dimension_mismatch() {
        let f = temp_file("heart 0.1 0.2 0.3 0.4\nbrain 1 2 3\n");
        let err = load_embeddings(f.path(), 4).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains(":2:"), "error names line 2: {msg}");
    }

    #[test]
    fn load_keeps_last_duplicate_and_counts_it() {
        let f = temp_file("a 1 1\nb 2 2\na 3 3\n");
        let (table, dups) = load_embeddings(f.path(), 2).unwrap();
        assert_eq!(dups, 1);
        assert_eq!(table.get("a").unwrap(), &[3.0, 3.0]);
    }

    #[test]
    fn embeddings_roundtrip_through_file() {
        let mut table = EmbeddingTable::new(3);
        table.insert("x", vec![0.25, -1.5, 3.0]);
        table.insert("y", vec![1.0 / 3.0, 0.0, -0.1]);
        let f = tempfile::NamedTempFile::new().unwrap();
        write_embeddings(f.path(), &table).unwrap();
        let (back, _) = load_embeddings(f.path(), 3).unwrap();
        assert_eq!(back.get("y").unwrap(), table.get("y").unwrap());
    }

    #[test]
    fn oov_feature_counts_shared_unknown_tokens() {
        let mut table = EmbeddingTable::new(2);
        table.insert("heart", vec![1.0, 0.0]);
        let graph = graph_of(&["xyzfoo", "heart"]);
        let pair = embed_pair(
            &["xyzfoo".to_string(), "heart".to_string()],
            &graph,
            &table,
            4,
        );
        assert_eq!(pair.x_oov, 1);
    }

    #[test]
    fn oov_feature_zero_when_all_in_vocab() {
        let mut table = EmbeddingTable::new(2);
        table.insert("heart", vec![1.0, 0.0]);
        table.insert("rate", vec![0.0, 1.0]);
        let graph = graph_of(&["heart"]);
        let pair = embed_pair(&["heart".to_string(), "rate".to_string()], &graph, &table, 4);
        assert_eq!(pair.x_oov, 0);
    }

    #[test]
    fn oov_feature_counts_distinct_tokens_once() {
        let table = EmbeddingTable::new(2);
        let graph = graph_of(&["xyzfoo"]);
        let pair = embed_pair(
            &["xyzfoo".to_string(), "xyzfoo".to_string()],
            &graph,
            &table,
            4,
        );
        assert_eq!(pair.x_oov, 1);
    }

    #[test]
    fn query_truncated_and_padded_with_leading_mask() {
        let mut table = EmbeddingTable::new(2);
        table.insert("a", vec![1.0, 2.0]);
        let graph = graph_of(&["a"]);

        let tokens: Vec<String> = ["a", "b", "a"].iter().map(|s| s.to_string()).collect();
        let pair = embed_pair(&tokens, &graph, &table, 2);
        assert_eq!(pair.mask, vec![true, true]);
        assert_eq!(pair.q_emb, vec![1.0, 2.0, 0.0, 0.0]); // "b" is OOV -> zeros

        let pair = embed_pair(&tokens[..1], &graph, &table, 3);
        assert_eq!(pair.mask, vec![true, false, false]);
        assert_eq!(&pair.q_emb[2..], &[0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn every_row_is_table_vector_or_zero() {
        let mut table = EmbeddingTable::new(2);
        table.insert("a", vec![0.5, -0.5]);
        table.insert("c", vec![2.0, 3.0]);
        let graph = graph_of(&["c", "unknown"]);
        let tokens: Vec<String> = ["a", "b"].iter().map(|s| s.to_string()).collect();
        let pair = embed_pair(&tokens, &graph, &table, 4);
        assert_eq!(&pair.g_emb[0..2], &[2.0, 3.0]);
        assert_eq!(&pair.g_emb[2..4], &[0.0, 0.0]);
        assert_eq!(&pair.q_emb[0..2], &[0.5, -0.5]);
        assert_eq!(&pair.q_emb[2..4], &[0.0, 0.0]);
    }
}
