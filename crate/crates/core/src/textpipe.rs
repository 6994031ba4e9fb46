//! Tokenization, document-frequency statistics and TF-IDF keyword extraction.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// A tokenized document: lowercase tokens plus their 0-based positions in the
/// token sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedDoc {
    pub tokens: Vec<String>,
    pub positions: Vec<usize>,
}

impl TokenizedDoc {
    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }
}

/// Lowercase and split on maximal runs of non-alphanumeric characters.
/// Empty tokens are dropped; positions index into the resulting sequence.
pub fn tokenize(text: &str) -> TokenizedDoc {
    let tokens: Vec<String> = text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect();
    let positions = (0..tokens.len()).collect();
    TokenizedDoc { tokens, positions }
}

/// Smoothed inverse-document-frequency table over a tokenized corpus.
///
/// `idf(t) = ln((1 + N) / (1 + df(t))) + 1`, so unseen terms get the maximum
/// value and ubiquitous terms bottom out at 1 rather than 0.
#[derive(Debug, Clone)]
pub struct IdfTable {
    pub corpus_size: usize,
    df: HashMap<String, usize>,
}

impl IdfTable {
    pub fn idf(&self, token: &str) -> f64 {
        let df = self.df.get(token).copied().unwrap_or(0);
        ((1.0 + self.corpus_size as f64) / (1.0 + df as f64)).ln() + 1.0
    }

    pub fn document_frequency(&self, token: &str) -> usize {
        self.df.get(token).copied().unwrap_or(0)
    }

    pub fn vocabulary(&self) -> impl Iterator<Item = &str> {
        self.df.keys().map(|s| s.as_str())
    }

    pub fn from_frequencies(df: HashMap<String, usize>, corpus_size: usize) -> Self {
        IdfTable { corpus_size, df }
    }

    pub fn frequencies(&self) -> &HashMap<String, usize> {
        &self.df
    }
}

/// Count document frequencies over a nonempty corpus.
pub fn build_idf(corpus: &[TokenizedDoc]) -> Result<IdfTable> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut df: HashMap<String, usize> = HashMap::new();
    for doc in corpus {
        let unique: HashSet<&String> = doc.tokens.iter().collect();
        for token in unique {
            *df.entry(token.clone()).or_insert(0) += 1;
        }
    }
    Ok(IdfTable {
        corpus_size: corpus.len(),
        df,
    })
}

/// The bundled English stopword list.
pub fn default_stopwords() -> HashSet<String> {
    include_str!("../data/stopwords.txt")
        .lines()
        .map(|l| l.trim().to_string())
        .filter(|l| !l.is_empty())
        .collect()
}

/// Load a one-token-per-line stopword file.
pub fn load_stopwords(path: &Path) -> Result<HashSet<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(|l| l.trim().to_lowercase())
        .filter(|l| !l.is_empty())
        .collect())
}

/// Extract the document's keywords by tf·idf score.
///
/// Scores each unique non-stopword token by raw count times idf and keeps the
/// top `ceil(fraction * U)` of the `U` unique candidates (at least 2 whenever
/// the document has 2 or more candidates, since a single vertex makes a
/// degenerate graph). Ties rank the token with the earlier first occurrence
/// first. `extra_keywords` is a hook for caller-supplied terms (e.g. named
/// entities); entries that occur in the document are unioned in after the
/// ranked list.
pub fn tfidf_keywords(
    doc: &TokenizedDoc,
    idf: &IdfTable,
    fraction: f64,
    stopwords: &HashSet<String>,
    extra_keywords: &[String],
) -> Vec<String> {
    assert!(
        fraction > 0.0 && fraction <= 1.0,
        "keyword fraction must lie in (0, 1], got {fraction}"
    );

    // Candidate tokens with raw counts and first-occurrence index.
    let mut count: HashMap<&str, usize> = HashMap::new();
    let mut first_seen: HashMap<&str, usize> = HashMap::new();
    for (pos, token) in doc.tokens.iter().enumerate() {
        if stopwords.contains(token) {
            continue;
        }
        *count.entry(token).or_insert(0) += 1;
        first_seen.entry(token).or_insert(pos);
    }

    let unique = count.len();
    let mut keywords = Vec::new();
    if unique > 0 {
        let target = (fraction * unique as f64).ceil() as usize;
        let take = target.max(2).min(unique);

        let mut scored: Vec<(&str, f64, usize)> = count
            .iter()
            .map(|(&tok, &tf)| (tok, tf as f64 * idf.idf(tok), first_seen[tok]))
            .collect();
        scored.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .expect("tf-idf scores are finite")
                .then(a.2.cmp(&b.2))
        });
        keywords.extend(scored.iter().take(take).map(|(tok, _, _)| tok.to_string()));
    }

    // Union in caller-supplied keywords that actually occur in the document.
    let present: HashSet<&String> = doc.tokens.iter().collect();
    for extra in extra_keywords {
        if present.contains(extra) && !keywords.contains(extra) {
            keywords.push(extra.clone());
        }
    }
    keywords
}
