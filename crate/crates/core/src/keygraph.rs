//! Weighted undirected keyword graphs.
//!
//! Vertices are a document's keywords; an edge connects two keywords whose
//! mean token distance in the document falls below a threshold, weighted by
//! the inverse of that mean distance.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textpipe::TokenizedDoc;

/// A keyword graph: ordered vertex list plus a dense symmetric adjacency
/// matrix with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct KeywordGraph {
    vertices: Vec<String>,
    adjacency: Vec<f64>,
}

/// Summary counts for a keyword graph.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GraphStats {
    pub vertex_count: usize,
    pub edge_count: usize,
    pub weight_min: f64,
    pub weight_max: f64,
    pub mean_degree: f64,
}

impl KeywordGraph {
    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn vertices(&self) -> &[String] {
        &self.vertices
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.adjacency[i * self.vertices.len() + j]
    }

    /// Row-major dense adjacency, length `vertex_count^2`.
    pub fn adjacency(&self) -> &[f64] {
        &self.adjacency
    }

    /// Construct directly from a vertex list and a dense symmetric adjacency.
    pub fn from_parts(vertices: Vec<String>, adjacency: Vec<f64>) -> Self {
        assert_eq!(adjacency.len(), vertices.len() * vertices.len());
        KeywordGraph { vertices, adjacency }
    }
}

/// Build the keyword graph of a document.
///
/// For a keyword pair, the rarer keyword (ties: the one earlier in the vertex
/// list) contributes one distance per occurrence, namely the absolute token
/// distance to its nearest occurrence of the other keyword. With `m` such
/// occurrences summing to `S`, the pair gets an edge iff the mean `S/m` is
/// below `threshold`, with weight `m/S`.
pub fn build_graph(
    doc: &TokenizedDoc,
    keywords: &[String],
    threshold: usize,
) -> Result<KeywordGraph> {
    assert!(threshold > 0, "distance threshold must be positive");

    let mut vertices: Vec<String> = Vec::new();
    for kw in keywords {
        if !vertices.contains(kw) {
            vertices.push(kw.clone());
        }
    }

    // Occurrence positions per vertex, in document order.
    let mut occurrences: Vec<Vec<usize>> = Vec::with_capacity(vertices.len());
    for kw in &vertices {
        let pos: Vec<usize> = doc
            .tokens
            .iter()
            .zip(&doc.positions)
            .filter(|(tok, _)| *tok == kw)
            .map(|(_, &p)| p)
            .collect();
        if pos.is_empty() {
            return Err(Error::KeywordNotInDocument(kw.clone()));
        }
        occurrences.push(pos);
    }

    let d_g = vertices.len();
    let mut adjacency = vec![0.0; d_g * d_g];
    for i in 0..d_g {
        for j in (i + 1)..d_g {
            // The less frequent keyword plays the anchor role; on equal
            // counts the earlier vertex does, which makes the result
            // canonical and symmetric.
            let (anchor, target) = if occurrences[i].len() <= occurrences[j].len() {
                (&occurrences[i], &occurrences[j])
            } else {
                (&occurrences[j], &occurrences[i])
            };
            let m = anchor.len();
            let sum: u64 = anchor
                .iter()
                .map(|&p| {
                    target
                        .iter()
                        .map(|&q| p.abs_diff(q) as u64)
                        .min()
                        .expect("target occurrences nonempty")
                })
                .sum();
            // Mean distance below threshold, compared in exact integer
            // arithmetic: sum/m < threshold  <=>  sum < threshold*m.
            if sum < (threshold as u64) * (m as u64) {
                let w = m as f64 / sum as f64;
                adjacency[i * d_g + j] = w;
                adjacency[j * d_g + i] = w;
            }
        }
    }

    Ok(KeywordGraph { vertices, adjacency })
}

/// Edge counts and weight range of a graph.
pub fn adjacency_stats(graph: &KeywordGraph) -> GraphStats {
    let d_g = graph.vertex_count();
    let mut edge_count = 0usize;
    let mut weight_min = f64::INFINITY;
    let mut weight_max = f64::NEG_INFINITY;
    for i in 0..d_g {
        for j in (i + 1)..d_g {
            let w = graph.weight(i, j);
            if w > 0.0 {
                edge_count += 1;
                weight_min = weight_min.min(w);
                weight_max = weight_max.max(w);
            }
        }
    }
    if edge_count == 0 {
        weight_min = 0.0;
        weight_max = 0.0;
    }
    let mean_degree = if d_g == 0 {
        0.0
    } else {
        2.0 * edge_count as f64 / d_g as f64
    };
    GraphStats {
        vertex_count: d_g,
        edge_count,
        weight_min,
        weight_max,
        mean_degree,
    }
}

#[derive(Serialize, Deserialize)]
struct GraphCache {
    vertices: Vec<String>,
    edges: Vec<(usize, usize, f64)>,
}

impl KeywordGraph {
    /// Serialize as the graph cache record: vertices plus upper-triangle
    /// edges `[i, j, w]` with `i < j`.
    pub fn to_cache_json(&self) -> String {
        let d_g = self.vertex_count();
        let mut edges = Vec::new();
        for i in 0..d_g {
            for j in (i + 1)..d_g {
                let w = self.weight(i, j);
                if w > 0.0 {
                    edges.push((i, j, w));
                }
            }
        }
        serde_json::to_string(&GraphCache {
            vertices: self.vertices.clone(),
            edges,
        })
        .expect("graph cache serializes")
    }

    pub fn from_cache_json(json: &str) -> Result<Self> {
        let cache: GraphCache =
            serde_json::from_str(json).map_err(|e| Error::BadGraphCache(e.to_string()))?;
        let d_g = cache.vertices.len();
        let mut adjacency = vec![0.0; d_g * d_g];
        for (i, j, w) in cache.edges {
            if i >= j || j >= d_g {
                return Err(Error::BadGraphCache(format!(
                    "edge ({i}, {j}) out of range for {d_g} vertices"
                )));
            }
            if w <= 0.0 || !w.is_finite() {
                return Err(Error::BadGraphCache(format!(
                    "edge ({i}, {j}) has non-positive weight {w}"
                )));
            }
            adjacency[i * d_g + j] = w;
            adjacency[j * d_g + i] = w;
        }
        Ok(KeywordGraph {
            vertices: cache.vertices,
            adjacency,
        })
    }

    pub fn write_cache(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_cache_json()).map_err(|e| Error::io(path, e))
    }

    pub fn read_cache(path: &Path) -> Result<Self> {
        let json = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_cache_json(&json)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textpipe::tokenize;
    use proptest::prelude::*;

    /// A document with the given keywords placed at the given positions and
    /// filler tokens everywhere else.
    fn doc_with(placements: &[(&str, &[usize])]) -> TokenizedDoc {
        let len = placements
            .iter()
            .flat_map(|(_, ps)| ps.iter())
            .max()
            .map_or(0, |m| m + 1);
        let mut tokens = vec!["filler".to_string(); len];
        for (kw, positions) in placements {
            for &p in *positions {
                tokens[p] = kw.to_string();
            }
        }
        TokenizedDoc {
            positions: (0..tokens.len()).collect(),
            tokens,
        }
    }

    #[test]
    fn hand_example_mean_distance_six() {
        // v at [3, 50], u at [10, 45]: nearest distances 7 and 5,
        // mean 6, weight 2/12 = 1/6.
        let doc = doc_with(&[("v", &[3, 50]), ("u", &[10, 45])]);
        let g = build_graph(&doc, &["v".into(), "u".into()], 20).unwrap();
        assert_eq!(g.weight(0, 1), 1.0 / 6.0);
        assert_eq!(g.weight(1, 0), 1.0 / 6.0);
        assert_eq!(g.weight(0, 0), 0.0);
    }

    #[test]
    fn distance_at_threshold_gives_no_edge() {
        let doc = doc_with(&[("v", &[0]), ("u", &[30])]);
        let g = build_graph(&doc, &["v".into(), "u".into()], 20).unwrap();
        assert_eq!(g.weight(0, 1), 0.0);

        // Just inside the threshold there is an edge.
        let doc = doc_with(&[("v", &[0]), ("u", &[19])]);
        let g = build_graph(&doc, &["v".into(), "u".into()], 20).unwrap();
        assert_eq!(g.weight(0, 1), 1.0 / 19.0);

        // Exactly at the threshold there is none.
        let doc = doc_with(&[("v", &[0]), ("u", &[20])]);
        let g = build_graph(&doc, &["v".into(), "u".into()], 20).unwrap();
        assert_eq!(g.weight(0, 1), 0.0);
    }

    #[test]
    fn single_keyword_graph_has_no_edges() {
        let doc = doc_with(&[("v", &[0, 4])]);
        let g = build_graph(&doc, &["v".into()], 20).unwrap();
        assert_eq!(g.vertex_count(), 1);
        assert_eq!(adjacency_stats(&g).edge_count, 0);
    }

    #[test]
    fn missing_keyword_is_an_error() {
        let doc = doc_with(&[("v", &[0])]);
        let err = build_graph(&doc, &["v".into(), "ghost".into()], 20).unwrap_err();
        assert!(err.to_string().contains("ghost"));
    }

    #[test]
    fn adjacency_stats_on_two_vertex_graph() {
        let doc = doc_with(&[("v", &[3, 50]), ("u", &[10, 45])]);
        let g = build_graph(&doc, &["v".into(), "u".into()], 20).unwrap();
        let stats = adjacency_stats(&g);
        assert_eq!(stats.vertex_count, 2);
        assert_eq!(stats.edge_count, 1);
        assert_eq!(stats.weight_min, 1.0 / 6.0);
        assert_eq!(stats.weight_max, 1.0 / 6.0);
        assert_eq!(stats.mean_degree, 1.0);
    }

    #[test]
    fn adjacency_stats_empty_graph() {
        let g = KeywordGraph::from_parts(vec![], vec![]);
        let stats = adjacency_stats(&g);
        assert_eq!(stats.vertex_count, 0);
        assert_eq!(stats.edge_count, 0);
        assert_eq!(stats.weight_min, 0.0);
        assert_eq!(stats.mean_degree, 0.0);
    }

    #[test]
    fn triangle_mean_degree_is_two() {
        let doc = doc_with(&[("a", &[0]), ("b", &[1]), ("c", &[2])]);
        let g = build_graph(&doc, &["a".into(), "b".into(), "c".into()], 20).unwrap();
        let stats = adjacency_stats(&g);
        assert_eq!(stats.edge_count, 3);
        assert_eq!(stats.mean_degree, 2.0);
        assert_eq!(stats.weight_max, 1.0); // adjacent tokens, distance 1
    }

    #[test]
    fn closer_occurrences_never_decrease_weight() {
        for gap in 2..19 {
            let far = doc_with(&[("v", &[0]), ("u", &[gap + 1])]);
            let near = doc_with(&[("v", &[0]), ("u", &[gap])]);
            let w_far = build_graph(&far, &["v".into(), "u".into()], 20)
                .unwrap()
                .weight(0, 1);
            let w_near = build_graph(&near, &["v".into(), "u".into()], 20)
                .unwrap()
                .weight(0, 1);
            assert!(w_near >= w_far);
        }
    }

    #[test]
    fn cache_roundtrip_is_bit_exact() {
        let doc = doc_with(&[("v", &[3, 50, 61]), ("u", &[10, 45]), ("w", &[12])]);
        let g = build_graph(&doc, &["v".into(), "u".into(), "w".into()], 20).unwrap();
        let json = g.to_cache_json();
        let back = KeywordGraph::from_cache_json(&json).unwrap();
        assert_eq!(back.vertices(), g.vertices());
        for i in 0..g.vertex_count() {
            for j in 0..g.vertex_count() {
                assert_eq!(back.weight(i, j).to_bits(), g.weight(i, j).to_bits());
            }
        }
    }

    #[test]
    fn cache_rejects_malformed_edges() {
        let json = r#"{"vertices": ["a", "b"], "edges": [[1, 0, 0.5]]}"#;
        assert!(KeywordGraph::from_cache_json(json).is_err());
        let json = r#"{"vertices": ["a", "b"], "edges": [[0, 5, 0.5]]}"#;
        assert!(KeywordGraph::from_cache_json(json).is_err());
    }

    proptest! {
        /// Random docs: adjacency is symmetric with a zero diagonal, and every
        /// nonzero weight lies in (1/threshold, 1].
        #[test]
        fn graph_invariants(seed in 0u64..500) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let vocab = ["ax", "bx", "cx", "dx", "ex"];
            let len = rng.random_range(2..60);
            let text: Vec<&str> = (0..len)
                .map(|_| vocab[rng.random_range(0..vocab.len())])
                .collect();
            let doc = tokenize(&text.join(" "));
            let keywords: Vec<String> = vocab
                .iter()
                .filter(|v| doc.tokens.iter().any(|t| t == *v))
                .map(|v| v.to_string())
                .collect();
            let g = build_graph(&doc, &keywords, 20).unwrap();
            let d_g = g.vertex_count();
            for i in 0..d_g {
                prop_assert_eq!(g.weight(i, i), 0.0);
                for j in 0..d_g {
                    prop_assert_eq!(g.weight(i, j).to_bits(), g.weight(j, i).to_bits());
                    let w = g.weight(i, j);
                    if w > 0.0 {
                        prop_assert!(w > 1.0 / 20.0 && w <= 1.0);
                    }
                }
            }
        }
    }
}
