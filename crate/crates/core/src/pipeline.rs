//! Shared preprocessing: fit corpus statistics once, then turn labeled pairs
//! into model-ready samples with per-document graph caching.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::LabeledPair;
use crate::embed::{embed_pair, EmbeddingTable};
use crate::error::{Error, Result};
use crate::keygraph::{build_graph, KeywordGraph};
use crate::textpipe::{build_idf, tfidf_keywords, tokenize, IdfTable, TokenizedDoc};
use crate::trainer::TrainSample;

/// Corpus-level statistics plus the graph-construction settings.
pub struct Preprocessor {
    pub idf: IdfTable,
    pub stopwords: HashSet<String>,
    pub keyword_fraction: f64,
    pub distance_threshold: usize,
}

impl Preprocessor {
    /// Fit document frequencies over the unique documents of a pair list.
    pub fn fit(
        pairs: &[LabeledPair],
        stopwords: HashSet<String>,
        keyword_fraction: f64,
        distance_threshold: usize,
    ) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut docs = Vec::new();
        for pair in pairs {
            if seen.insert(pair.document.as_str()) {
                docs.push(tokenize(&pair.document));
            }
        }
        let idf = build_idf(&docs)?;
        Ok(Preprocessor {
            idf,
            stopwords,
            keyword_fraction,
            distance_threshold,
        })
    }

    pub fn from_idf(
        idf: IdfTable,
        stopwords: HashSet<String>,
        keyword_fraction: f64,
        distance_threshold: usize,
    ) -> Self {
        Preprocessor {
            idf,
            stopwords,
            keyword_fraction,
            distance_threshold,
        }
    }

    pub fn keywords(&self, doc: &TokenizedDoc) -> Vec<String> {
        tfidf_keywords(doc, &self.idf, self.keyword_fraction, &self.stopwords, &[])
    }

    /// Build (or load from `cache_dir`) the keyword graph of a document.
    pub fn graph(&self, document: &str, cache_dir: Option<&Path>) -> Result<KeywordGraph> {
        let doc = tokenize(document);
        let keywords = self.keywords(&doc);
        if let Some(dir) = cache_dir {
            let path = dir.join(format!(
                "{}.json",
                graph_cache_key(document, &keywords, self.distance_threshold)
            ));
            if path.exists() {
                return KeywordGraph::read_cache(&path);
            }
            let graph = build_graph(&doc, &keywords, self.distance_threshold)?;
            graph.write_cache(&path)?;
            return Ok(graph);
        }
        build_graph(&doc, &keywords, self.distance_threshold)
    }

    /// Embed pairs against a vector table, sharing one graph per unique
    /// document.
    pub fn prepare(
        &self,
        pairs: &[LabeledPair],
        table: &EmbeddingTable,
        max_query_len: usize,
        cache_dir: Option<&Path>,
    ) -> Result<Vec<TrainSample>> {
        let mut graphs: HashMap<&str, Arc<KeywordGraph>> = HashMap::new();
        let mut samples = Vec::with_capacity(pairs.len());
        for pair in pairs {
            let graph = match graphs.get(pair.document.as_str()) {
                Some(g) => Arc::clone(g),
                None => {
                    let g = Arc::new(self.graph(&pair.document, cache_dir)?);
                    graphs.insert(pair.document.as_str(), Arc::clone(&g));
                    g
                }
            };
            if graph.vertex_count() == 0 {
                return Err(Error::EmptyGraph);
            }
            let query_tokens = tokenize(&pair.query).tokens;
            let embedded = embed_pair(&query_tokens, &graph, table, max_query_len);
            samples.push(TrainSample {
                pair: embedded,
                graph,
                label: pair.label,
            });
        }
        Ok(samples)
    }
}

/// Content hash keying a cached graph: document text, keyword list and
/// distance threshold.
pub fn graph_cache_key(document: &str, keywords: &[String], threshold: usize) -> String {
    let mut hasher = Sha256::new();
    hasher.update(document.as_bytes());
    hasher.update([0xff]);
    for kw in keywords {
        hasher.update(kw.as_bytes());
        hasher.update([0xfe]);
    }
    hasher.update((threshold as u64).to_le_bytes());
    hex::encode(hasher.finalize())
}

#[derive(Serialize, Deserialize)]
struct IdfFile {
    corpus_size: usize,
    document_frequencies: BTreeMap<String, usize>,
}

/// Persist an idf table as JSON with sorted keys.
pub fn write_idf(path: &Path, idf: &IdfTable) -> Result<()> {
    let file = IdfFile {
        corpus_size: idf.corpus_size,
        document_frequencies: idf
            .frequencies()
            .iter()
            .map(|(k, v)| (k.clone(), *v))
            .collect(),
    };
    let json = serde_json::to_string(&file).expect("idf serializes");
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn read_idf(path: &Path) -> Result<IdfTable> {
    let json = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: IdfFile =
        serde_json::from_str(&json).map_err(|e| Error::parse(path, 1, e.to_string()))?;
    Ok(IdfTable::from_frequencies(
        file.document_frequencies.into_iter().collect(),
        file.corpus_size,
    ))
}
