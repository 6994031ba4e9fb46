//! Python bindings for the mgan relevance-matching pipeline: tokenization,
//! keyword extraction, keyword-graph construction, the propagation operator,
//! metrics, checkpoint-backed scoring and the full CLI.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use mgan_core::corpus::LabeledPair;
use mgan_core::embed::{load_embeddings, EmbeddingTable};
use mgan_core::eval;
use mgan_core::keygraph::{self, KeywordGraph};
use mgan_core::mgan::{self, ModelConfig, ModelParams};
use mgan_core::pipeline::{read_idf, Preprocessor};
use mgan_core::textpipe::{self, default_stopwords};

fn value_err(e: mgan_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Lowercase and split on runs of non-alphanumeric characters.
#[pyfunction]
fn tokenize(text: &str) -> Vec<String> {
    textpipe::tokenize(text).tokens
}

/// Extract each document's keywords by tf-idf over the given corpus.
#[pyfunction]
#[pyo3(signature = (documents, fraction = 0.2))]
fn extract_keywords(documents: Vec<String>, fraction: f64) -> PyResult<Vec<Vec<String>>> {
    let docs: Vec<_> = documents.iter().map(|d| textpipe::tokenize(d)).collect();
    let idf = textpipe::build_idf(&docs).map_err(value_err)?;
    let stopwords = default_stopwords();
    Ok(docs
        .iter()
        .map(|doc| textpipe::tfidf_keywords(doc, &idf, fraction, &stopwords, &[]))
        .collect())
}

/// A document's keyword graph.
#[pyclass]
struct Graph {
    inner: KeywordGraph,
}

#[pymethods]
impl Graph {
    /// Vertex labels in order.
    fn vertices(&self) -> Vec<String> {
        self.inner.vertices().to_vec()
    }

    /// Upper-triangle edges as (i, j, weight) with i < j.
    fn edges(&self) -> Vec<(usize, usize, f64)> {
        let n = self.inner.vertex_count();
        let mut out = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let w = self.inner.weight(i, j);
                if w > 0.0 {
                    out.push((i, j, w));
                }
            }
        }
        out
    }

    /// Dense adjacency matrix as nested lists.
    fn adjacency(&self) -> Vec<Vec<f64>> {
        let n = self.inner.vertex_count();
        (0..n)
            .map(|i| (0..n).map(|j| self.inner.weight(i, j)).collect())
            .collect()
    }

    fn stats(&self) -> HashMap<String, f64> {
        let s = keygraph::adjacency_stats(&self.inner);
        HashMap::from([
            ("vertex_count".to_string(), s.vertex_count as f64),
            ("edge_count".to_string(), s.edge_count as f64),
            ("weight_min".to_string(), s.weight_min),
            ("weight_max".to_string(), s.weight_max),
            ("mean_degree".to_string(), s.mean_degree),
        ])
    }

    fn __len__(&self) -> usize {
        self.inner.vertex_count()
    }
}

/// Build the keyword graph of a document from an explicit keyword list.
#[pyfunction]
#[pyo3(signature = (document, keywords, threshold = 20))]
fn build_graph(document: &str, keywords: Vec<String>, threshold: usize) -> PyResult<Graph> {
    let doc = textpipe::tokenize(document);
    let inner = keygraph::build_graph(&doc, &keywords, threshold).map_err(value_err)?;
    Ok(Graph { inner })
}

/// The row-stochastic propagation operator (A + lambda*I) normalized by
/// lambda plus the row degree.
#[pyfunction]
fn propagation_matrix(adjacency: Vec<Vec<f64>>, lambda: f64) -> PyResult<Vec<Vec<f64>>> {
    let d_g = adjacency.len();
    let mut flat = Vec::with_capacity(d_g * d_g);
    for row in &adjacency {
        if row.len() != d_g {
            return Err(PyValueError::new_err("adjacency must be square"));
        }
        flat.extend_from_slice(row);
    }
    let p = mgan::propagation_matrix(&flat, d_g, lambda).map_err(value_err)?;
    Ok((0..d_g)
        .map(|i| p[i * d_g..(i + 1) * d_g].to_vec())
        .collect())
}

/// Accuracy, F1 and confusion counts at a decision threshold.
#[pyfunction]
#[pyo3(signature = (predictions, labels, threshold = 0.5))]
fn metrics(predictions: Vec<f64>, labels: Vec<u8>, threshold: f64) -> PyResult<HashMap<String, f64>> {
    let m = eval::metrics(&predictions, &labels, threshold).map_err(value_err)?;
    Ok(HashMap::from([
        ("accuracy".to_string(), m.accuracy),
        ("f1".to_string(), m.f1),
        ("tp".to_string(), m.tp as f64),
        ("fp".to_string(), m.fp as f64),
        ("tn".to_string(), m.tn as f64),
        ("fn".to_string(), m.fn_ as f64),
        ("n".to_string(), m.n as f64),
    ]))
}

/// TF-IDF cosine similarity of a query and a document over a corpus of
/// documents that defines the idf statistics.
#[pyfunction]
fn tfidf_cosine(query: &str, document: &str, corpus: Vec<String>) -> PyResult<f64> {
    let docs: Vec<_> = corpus.iter().map(|d| textpipe::tokenize(d)).collect();
    let idf = textpipe::build_idf(&docs).map_err(value_err)?;
    let pair = LabeledPair::new(query, document, 0);
    Ok(eval::tfidf_cosine_baseline(&pair, &idf))
}

/// A trained model plus the preprocessing state needed to score raw text.
#[pyclass]
struct Matcher {
    config: ModelConfig,
    params: ModelParams,
    table: EmbeddingTable,
    prep: Preprocessor,
}

#[pymethods]
impl Matcher {
    /// Load a checkpoint together with its embedding table and idf file.
    #[staticmethod]
    #[pyo3(signature = (checkpoint, embeddings, idf, keyword_fraction = 0.2, distance_threshold = 20))]
    fn load(
        checkpoint: PathBuf,
        embeddings: PathBuf,
        idf: PathBuf,
        keyword_fraction: f64,
        distance_threshold: usize,
    ) -> PyResult<Self> {
        let (config, params) = mgan::load_checkpoint(&checkpoint).map_err(value_err)?;
        let (table, _) =
            load_embeddings(&embeddings, config.embed_dim).map_err(value_err)?;
        let idf = read_idf(&idf).map_err(value_err)?;
        let prep = Preprocessor::from_idf(
            idf,
            default_stopwords(),
            keyword_fraction,
            distance_threshold,
        );
        Ok(Matcher {
            config,
            params,
            table,
            prep,
        })
    }

    /// Relevance probability of one query-document pair.
    fn predict(&self, query: &str, document: &str) -> PyResult<f64> {
        let pairs = vec![LabeledPair::new(query, document, 0)];
        let samples = self
            .prep
            .prepare(&pairs, &self.table, self.config.max_query_len, None)
            .map_err(value_err)?;
        let out = mgan::predict(&samples[0].pair, &samples[0].graph, &self.params, &self.config)
            .map_err(value_err)?;
        Ok(out.probability)
    }

    /// The model's hyperparameters.
    fn config(&self) -> HashMap<String, f64> {
        HashMap::from([
            ("lambda".to_string(), self.config.lambda),
            ("pool_size".to_string(), self.config.pool_size as f64),
            ("num_layers".to_string(), self.config.num_layers as f64),
            ("embed_dim".to_string(), self.config.embed_dim as f64),
            ("hidden_size".to_string(), self.config.hidden_size as f64),
            ("max_query_len".to_string(), self.config.max_query_len as f64),
        ])
    }
}

/// Run the `mgan` command line (argv without the leading program name).
/// Returns the exit status.
#[pyfunction]
fn run_cli(args: Vec<String>) -> i32 {
    let mut argv = vec!["mgan".to_string()];
    argv.extend(args);
    mgan_core::cli::run(argv)
}

/// Check that a stopword file path loads (mirrors the CLI flag).
#[pyfunction]
fn load_stopword_file(path: PathBuf) -> PyResult<Vec<String>> {
    let set = textpipe::load_stopwords(Path::new(&path)).map_err(value_err)?;
    let mut words: Vec<String> = set.into_iter().collect();
    words.sort();
    Ok(words)
}

#[pymodule]
fn mgan_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(extract_keywords, m)?)?;
    m.add_function(wrap_pyfunction!(build_graph, m)?)?;
    m.add_function(wrap_pyfunction!(propagation_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(metrics, m)?)?;
    m.add_function(wrap_pyfunction!(tfidf_cosine, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    m.add_function(wrap_pyfunction!(load_stopword_file, m)?)?;
    m.add_class::<Graph>()?;
    m.add_class::<Matcher>()?;
    Ok(())
}
