//! Synthetic relevance-matching corpora with a planted topic-keyword
//! co-occurrence signal.
//!
//! Each document is a hub-and-rim body of one topic followed by an isolated
//! pollution tail from a second topic. The body repeats a tight core of hub
//! words between rim words, so every rim attaches weakly to the heavy hub
//! clique while rims barely touch each other; the pollution words sit beyond
//! the distance threshold of everything. Gap material mixes stopwords with a
//! small ubiquitous filler vocabulary, sized so the top-20% tf-idf cut
//! admits exactly the hub, rim and pollution words.
//!
//! Positive queries mix three rim words with one same-topic word the
//! document does not contain; trap negatives mix the three pollution words
//! with one absent word of the pollution topic; clean negatives use a third
//! topic. Positives and traps thus have identical lexical profiles (three
//! matched tf-1 tokens of comparable idf out of four), so bag-of-words
//! cosine cannot beat three quarters, whichever threshold it tunes. The graph can,
//! and only at a self-loop weight comparable to the edge weights: there a
//! matched rim keeps about half of its own embedding (scoring mid-high)
//! while an isolated trap word keeps all of it (scoring near one). A tiny
//! self-loop diffuses rim identity into the hub core, where two-step walks
//! do not bring it back; a huge one makes every matched vertex look like a
//! trap.
//!
//! Each document body also carries one per-topic tag token that is absent
//! from the embedding table; a fraction of positive queries include it.
//! Lexically it counts like any other matched term, but only the
//! out-of-vocabulary overlap channel can tell that this particular match
//! happened.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::LabeledPair;
use crate::embed::EmbeddingTable;

/// Stopwords used as gap material; all appear in the bundled stopword list,
/// so they never become keywords, yet they count toward token distance.
const GAP_STOPWORDS: [&str; 40] = [
    "the", "of", "and", "to", "in", "a", "is", "that", "for", "it", "as", "was", "with", "be",
    "by", "on", "not", "he", "this", "are", "or", "his", "from", "at", "which", "but", "have",
    "an", "had", "they", "you", "were", "their", "when", "all", "we", "can", "her", "has",
    "there",
];

/// Generator knobs. The defaults produce 500 balanced pairs over a 600-token
/// vocabulary (480 content words, 80 fillers, 40 stopwords) with
/// 40-dimensional embeddings.
#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub n_pairs: usize,
    pub topics: usize,
    pub content_per_topic: usize,
    /// Size of the ubiquitous low-idf filler vocabulary.
    pub fillers: usize,
    pub embed_dim: usize,
    /// Hub words forming the document's dense core.
    pub hubs: usize,
    /// Rim words attached to the core; positive queries sample these.
    pub rims: usize,
    /// Gap tokens on each side of a rim word.
    pub rim_spacing: usize,
    /// Positive/negative query length.
    pub query_len: usize,
    /// Gap length before each pollution word; above the distance threshold.
    pub filler_gap: usize,
    /// Distinct fillers dealt into each document's gaps. Tuned so the
    /// unique-token count puts the 20% keyword cut exactly at the content
    /// plus pollution words.
    pub fillers_per_doc: usize,
    /// Pollution words in the document tail; also the trap query length.
    pub pollution_words: usize,
    /// Probability that a negative query is a pollution trap rather than a
    /// clean unrelated-topic query.
    pub trap_negative_prob: f64,
    /// Probability that a positive query swaps one rim word for the
    /// document's out-of-vocabulary topic tag.
    pub tag_query_prob: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_pairs: 500,
            topics: 24,
            content_per_topic: 20,
            fillers: 56,
            embed_dim: 40,
            hubs: 4,
            rims: 6,
            rim_spacing: 2,
            query_len: 4,
            filler_gap: 19,
            fillers_per_doc: 53,
            pollution_words: 3,
            trap_negative_prob: 0.5,
            tag_query_prob: 0.35,
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// Corpus vocabulary: content words, per-topic tags, fillers and the
    /// gap stopwords.
    pub fn vocabulary_size(&self) -> usize {
        self.topics * (self.content_per_topic + 1) + self.fillers + GAP_STOPWORDS.len()
    }

    fn doc_content_words(&self) -> usize {
        self.hubs + self.rims
    }

    /// Gaps per document: before each of the isolated pollution words.
    fn gap_count(&self) -> usize {
        self.pollution_words
    }
}

/// A generated corpus: balanced labeled pairs plus a full-coverage random
/// embedding table.
pub struct SynthCorpus {
    pub pairs: Vec<LabeledPair>,
    pub table: EmbeddingTable,
}

fn content_word(topic: usize, k: usize) -> String {
    format!("w{topic}x{k}")
}

fn filler_word(k: usize) -> String {
    format!("filler{k}")
}

fn tag_word(topic: usize) -> String {
    format!("tag{topic}")
}

/// Generate the corpus deterministically from the config seed.
pub fn generate(config: &SynthConfig) -> SynthCorpus {
    assert!(config.topics >= 3, "need at least three topics");
    assert!(config.doc_content_words() <= config.content_per_topic);
    assert!(config.pollution_words >= 1);
    assert!(config.fillers_per_doc <= config.fillers);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    // Random embeddings over the vocabulary, stopwords included. The
    // per-topic tag tokens stay out of the table: they are the corpus's
    // out-of-vocabulary terms.
    let mut table = EmbeddingTable::new(config.embed_dim);
    let mut vocab: Vec<String> = Vec::with_capacity(config.vocabulary_size());
    for t in 0..config.topics {
        for k in 0..config.content_per_topic {
            vocab.push(content_word(t, k));
        }
    }
    for k in 0..config.fillers {
        vocab.push(filler_word(k));
    }
    vocab.extend(GAP_STOPWORDS.iter().map(|s| s.to_string()));
    for token in &vocab {
        let v: Vec<f64> = (0..config.embed_dim)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        table.insert(token, v);
    }

    let n_docs = config.n_pairs.div_ceil(2);
    let mut pairs = Vec::with_capacity(config.n_pairs);
    for doc_idx in 0..n_docs {
        let topic = doc_idx % config.topics;

        // Gap material: each document's distinct fillers (tf 1 apiece, so
        // their low idf keeps them under every content word in the keyword
        // ranking) padded with stopwords, shuffled, then dealt into gaps.
        let gap_slots = config.gap_count() * config.filler_gap;
        let mut filler_deck: Vec<usize> = (0..config.fillers).collect();
        filler_deck.shuffle(&mut rng);
        let mut gap_material: Vec<String> = filler_deck
            .into_iter()
            .take(config.fillers_per_doc.min(gap_slots))
            .map(filler_word)
            .collect();
        while gap_material.len() < gap_slots {
            gap_material.push(GAP_STOPWORDS[rng.random_range(0..GAP_STOPWORDS.len())].to_string());
        }
        gap_material.shuffle(&mut rng);
        let mut gap_material = gap_material.into_iter();
        let mut gap = |tokens: &mut Vec<String>| {
            for _ in 0..config.filler_gap {
                tokens.push(gap_material.next().expect("gap material sized to gap count"));
            }
        };

        // The document's content words, dealt into sentences.
        let mut ids: Vec<usize> = (0..config.content_per_topic).collect();
        ids.shuffle(&mut rng);
        let in_doc = &ids[..config.doc_content_words()];

        // Hub-and-rim body: the hub core repeats between rim words, so each
        // rim sits a few tokens from several hub occurrences while
        // consecutive rims stay about a dozen tokens apart.
        let hubs = &in_doc[..config.hubs];
        let rims = &in_doc[config.hubs..];
        let mut tokens: Vec<String> = Vec::new();
        let mut stop = |tokens: &mut Vec<String>, n: usize| {
            for _ in 0..n {
                tokens.push(GAP_STOPWORDS[rng.random_range(0..GAP_STOPWORDS.len())].to_string());
            }
        };
        let core = |tokens: &mut Vec<String>| {
            for &h in hubs {
                tokens.push(content_word(topic, h));
            }
        };
        core(&mut tokens);
        stop(&mut tokens, config.rim_spacing);
        tokens.push(tag_word(topic));
        stop(&mut tokens, config.rim_spacing);
        core(&mut tokens);
        for &r in rims {
            stop(&mut tokens, config.rim_spacing);
            tokens.push(content_word(topic, r));
            stop(&mut tokens, config.rim_spacing);
            core(&mut tokens);
        }

        // Pollution tail from a second topic, every word isolated by a gap.
        let pollution_topic = (topic + 1 + rng.random_range(0..config.topics - 1)) % config.topics;
        let mut pollution_ids: Vec<usize> = (0..config.content_per_topic).collect();
        pollution_ids.shuffle(&mut rng);
        let pollution = &pollution_ids[..config.pollution_words];
        for &k in pollution {
            gap(&mut tokens);
            tokens.push(content_word(pollution_topic, k));
        }
        let document = tokens.join(" ");

        // Positive query: rim words plus one same-topic word absent from the
        // document, sometimes with the out-of-vocabulary tag in place of one
        // rim. The absent word keeps every query class at the same partial
        // lexical overlap.
        let out_doc = &ids[config.doc_content_words()..];
        let mut positive: Vec<String> =
            rand::seq::index::sample(&mut rng, rims.len(), config.query_len - 1)
                .iter()
                .map(|i| content_word(topic, rims[i]))
                .collect();
        positive.push(content_word(topic, out_doc[rng.random_range(0..out_doc.len())]));
        if rng.random_bool(config.tag_query_prob) {
            positive[0] = tag_word(topic);
        }
        positive.shuffle(&mut rng);
        pairs.push(LabeledPair::new(positive.join(" "), document.clone(), 1));

        // Negative query: the pollution words plus one absent word of their
        // topic (mirroring the positives' overlap profile), or a clean
        // unrelated topic.
        let mut negative: Vec<String> = if rng.random_bool(config.trap_negative_prob) {
            let pollution_out = &pollution_ids[config.pollution_words..];
            let mut q: Vec<String> = pollution
                .iter()
                .map(|&k| content_word(pollution_topic, k))
                .collect();
            q.push(content_word(
                pollution_topic,
                pollution_out[rng.random_range(0..pollution_out.len())],
            ));
            q
        } else {
            let clean_topic = loop {
                let s = rng.random_range(0..config.topics);
                if s != topic && s != pollution_topic {
                    break s;
                }
            };
            let mut clean_ids: Vec<usize> = (0..config.content_per_topic).collect();
            clean_ids.shuffle(&mut rng);
            clean_ids[..config.query_len]
                .iter()
                .map(|&k| content_word(clean_topic, k))
                .collect()
        };
        negative.shuffle(&mut rng);
        pairs.push(LabeledPair::new(negative.join(" "), document, 0));
    }
    pairs.truncate(config.n_pairs);

    SynthCorpus { pairs, table }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn corpus_has_requested_size_and_balance() {
        let config = SynthConfig::default();
        let corpus = generate(&config);
        assert_eq!(corpus.pairs.len(), 500);
        assert_eq!(config.vocabulary_size(), 600);
        // Tags are out of vocabulary: the table covers everything else.
        assert_eq!(corpus.table.len(), 600 - config.topics);
        let positives = corpus.pairs.iter().filter(|p| p.label == 1).count();
        assert_eq!(positives, 250);
    }

    #[test]
    fn generation_is_deterministic() {
        let config = SynthConfig::default();
        let a = generate(&config);
        let b = generate(&config);
        assert_eq!(a.pairs, b.pairs);
    }

    #[test]
    fn different_seeds_differ() {
        let a = generate(&SynthConfig::default());
        let b = generate(&SynthConfig {
            seed: 1,
            ..SynthConfig::default()
        });
        assert_ne!(a.pairs, b.pairs);
    }

    #[test]
    fn every_document_token_is_in_vocabulary() {
        let config = SynthConfig {
            n_pairs: 20,
            ..SynthConfig::default()
        };
        let corpus = generate(&config);
        for pair in &corpus.pairs {
            for token in pair.document.split_whitespace() {
                assert!(
                    corpus.table.contains(token) || token.starts_with("tag"),
                    "unknown token {token}"
                );
            }
        }
    }

    #[test]
    fn positive_queries_mix_present_and_absent_topic_words() {
        let config = SynthConfig {
            n_pairs: 40,
            ..SynthConfig::default()
        };
        let corpus = generate(&config);
        for pair in corpus.pairs.iter().filter(|p| p.label == 1) {
            let doc_tokens: HashSet<&str> = pair.document.split_whitespace().collect();
            let present = pair
                .query
                .split_whitespace()
                .filter(|t| doc_tokens.contains(t))
                .count();
            let absent = pair
                .query
                .split_whitespace()
                .filter(|t| !doc_tokens.contains(t))
                .count();
            assert_eq!(present, 3, "positives keep three in-document words");
            assert_eq!(absent, 1, "positives carry exactly one absent word");
        }
    }

    #[test]
    fn keyword_graphs_are_sentence_components_without_bridges() {
        use crate::keygraph::adjacency_stats;
        use crate::pipeline::Preprocessor;
        use crate::textpipe::default_stopwords;

        let config = SynthConfig {
            n_pairs: 60,
            ..SynthConfig::default()
        };
        let corpus = generate(&config);
        let prep = Preprocessor::fit(&corpus.pairs, default_stopwords(), 0.2, 20).unwrap();
        let mut seen = HashSet::new();
        for pair in &corpus.pairs {
            if !seen.insert(pair.document.clone()) {
                continue;
            }
            let graph = prep.graph(&pair.document, None).unwrap();
            let stats = adjacency_stats(&graph);
            // 4 hubs + 6 rims + 1 tag + 3 pollution vertices.
            assert_eq!(stats.vertex_count, 14, "vertices: {:?}", graph.vertices());
            let vertex_topic_count = |name: &str| {
                pair.document
                    .split_whitespace()
                    .filter(|t| *t == name)
                    .count()
            };
            let names = graph.vertices();
            for i in 0..names.len() {
                let tf_i = vertex_topic_count(&names[i]);
                let degree: f64 = (0..names.len()).map(|j| graph.weight(i, j)).sum();
                if tf_i == 1 && !pair.document.starts_with(&names[i]) {
                    // Rim or pollution word.
                    let connected = degree > 0.0;
                    let is_pollution = {
                        // Pollution words live in the last quarter of the doc.
                        let pos = pair.document.find(&names[i]).unwrap();
                        pos > pair.document.len() * 3 / 5
                    };
                    if is_pollution {
                        assert!(!connected, "pollution {} has edges", names[i]);
                    }
                } else if tf_i > 1 {
                    // Hubs connect to every other hub.
                    assert!(degree > 1.0, "hub {} degree {degree}", names[i]);
                }
            }
        }
    }
}
