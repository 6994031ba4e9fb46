//! Labeled query-document pairs: loading, negative sampling for
//! topic-document datasets, and deterministic train/dev/test splits.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One (query, document, label) training or evaluation sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub query: String,
    pub document: String,
    pub label: u8,
}

impl LabeledPair {
    pub fn new(query: impl Into<String>, document: impl Into<String>, label: u8) -> Self {
        LabeledPair {
            query: query.into(),
            document: document.into(),
            label,
        }
    }
}

/// Pair file layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairFormat {
    Jsonl,
    Tsv,
}

impl PairFormat {
    /// Infer the format from a file extension, defaulting to JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("tsv") | Some("tab") => PairFormat::Tsv,
            _ => PairFormat::Jsonl,
        }
    }
}

/// A deterministic three-way partition of a pair list.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitSet {
    pub train: Vec<LabeledPair>,
    pub dev: Vec<LabeledPair>,
    pub test: Vec<LabeledPair>,
    pub seed: u64,
    pub ratios: (f64, f64, f64),
}

fn validate_pair(pair: &mut LabeledPair, path: &Path, line: usize) -> Result<()> {
    pair.query = pair.query.trim().to_string();
    pair.document = pair.document.trim().to_string();
    if pair.query.is_empty() {
        return Err(Error::parse(path, line, "query must be nonempty"));
    }
    if pair.document.is_empty() {
        return Err(Error::parse(path, line, "document must be nonempty"));
    }
    if pair.label > 1 {
        return Err(Error::parse(
            path,
            line,
            format!("label must be 0 or 1, got {}", pair.label),
        ));
    }
    Ok(())
}

/// Load labeled pairs from a JSONL or TSV file, in file order.
pub fn load_pairs(path: &Path, format: PairFormat) -> Result<Vec<LabeledPair>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut pairs = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut pair = match format {
            PairFormat::Jsonl => serde_json::from_str::<LabeledPair>(&line)
                .map_err(|e| Error::parse(path, line_no, e.to_string()))?,
            PairFormat::Tsv => {
                let cols: Vec<&str> = line.split('\t').collect();
                if cols.len() != 3 {
                    return Err(Error::parse(
                        path,
                        line_no,
                        format!("expected 3 tab-separated columns, found {}", cols.len()),
                    ));
                }
                let label: u8 = cols[2].trim().parse().map_err(|_| {
                    Error::parse(path, line_no, format!("label must be 0 or 1, got {:?}", cols[2]))
                })?;
                LabeledPair::new(cols[0], cols[1], label)
            }
        };
        validate_pair(&mut pair, path, line_no)?;
        pairs.push(pair);
    }
    Ok(pairs)
}

/// Write pairs as JSONL.
pub fn write_pairs(path: &Path, pairs: &[LabeledPair]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for pair in pairs {
        let line = serde_json::to_string(pair).expect("pair serialization cannot fail");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Turn (document, true topic) records into balanced labeled pairs.
///
/// Each document yields one positive pair plus `ceil(ratio)` negatives whose
/// topic is drawn uniformly without replacement from the other topics (capped
/// at the number available). The draw is reproducible from `seed`.
pub fn generate_negatives(
    docs: &[(String, String)],
    topics: &[String],
    ratio: f64,
    seed: u64,
) -> Result<Vec<LabeledPair>> {
    let mut universe: Vec<&String> = Vec::new();
    for t in topics {
        if !universe.contains(&t) {
            universe.push(t);
        }
    }
    if universe.len() < 2 {
        return Err(Error::SingleTopicUniverse);
    }
    assert!(ratio > 0.0, "negative ratio must be positive, got {ratio}");
    let negatives_per_doc = ratio.ceil() as usize;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::new();
    for (document, true_topic) in docs {
        if !universe.contains(&true_topic) {
            return Err(Error::TopicNotInUniverse(true_topic.clone()));
        }
        pairs.push(LabeledPair::new(true_topic.clone(), document.clone(), 1));

        let others: Vec<&String> = universe
            .iter()
            .copied()
            .filter(|t| *t != true_topic)
            .collect();
        let take = negatives_per_doc.min(others.len());
        let chosen = rand::seq::index::sample(&mut rng, others.len(), take);
        for idx in chosen.iter() {
            pairs.push(LabeledPair::new(others[idx].clone(), document.clone(), 0));
        }
    }
    Ok(pairs)
}

/// Shuffle by seed and cut into contiguous train/dev/test ranges.
///
/// Dev and test get `floor(n * ratio)` elements each; the remainder goes to
/// train.
pub fn split(pairs: &[LabeledPair], ratios: (f64, f64, f64), seed: u64) -> Result<SplitSet> {
    let (r_train, r_dev, r_test) = ratios;
    let sum = r_train + r_dev + r_test;
    if r_train <= 0.0 || r_dev <= 0.0 || r_test <= 0.0 || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::BadSplitRatios(r_train, r_dev, r_test));
    }

    let mut shuffled: Vec<LabeledPair> = pairs.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rand::seq::SliceRandom::shuffle(&mut shuffled[..], &mut rng);

    let n = shuffled.len();
    let n_dev = (n as f64 * r_dev).floor() as usize;
    let n_test = (n as f64 * r_test).floor() as usize;
    let n_train = n - n_dev - n_test;

    let test = shuffled.split_off(n_train + n_dev);
    let dev = shuffled.split_off(n_train);
    let train = shuffled;

    Ok(SplitSet {
        train,
        dev,
        test,
        seed,
        ratios,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct SplitManifest {
    seed: u64,
    ratios: (f64, f64, f64),
    sizes: (usize, usize, usize),
}

impl SplitSet {
    /// Write train/dev/test JSONL files plus a manifest recording seed and
    /// ratios into `dir`.
    pub fn write_to_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_pairs(&dir.join("train.jsonl"), &self.train)?;
        write_pairs(&dir.join("dev.jsonl"), &self.dev)?;
        write_pairs(&dir.join("test.jsonl"), &self.test)?;
        let manifest = SplitManifest {
            seed: self.seed,
            ratios: self.ratios,
            sizes: (self.train.len(), self.dev.len(), self.test.len()),
        };
        let path = dir.join("manifest.json");
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&path, json).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn temp_file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn load_empty_file_gives_empty_list() {
        let f = temp_file("");
        let pairs = load_pairs(f.path(), PairFormat::Jsonl).unwrap();
        assert!(pairs.is_empty());
    }

    #[test]
    fn load_two_jsonl_lines_in_order() {
        let f = temp_file(concat!(
            "{\"query\": \" heart attack \", \"document\": \"a study of hearts\", \"label\": 1}\n",
            "{\"query\": \"bone density\", \"document\": \"a study of hearts\", \"label\": 0}\n",
        ));
        let pairs = load_pairs(f.path(), PairFormat::Jsonl).unwrap();
        assert_eq!(pairs.len(), 2);
        // Hand-parsed: fields trimmed, order preserved.
        assert_eq!(pairs[0], LabeledPair::new("heart attack", "a study of hearts", 1));
        assert_eq!(pairs[1], LabeledPair::new("bone density", "a study of hearts", 0));
    }

    #[test]
    fn load_rejects_out_of_range_label() {
        let f = temp_file("{\"query\": \"q\", \"document\": \"d\", \"label\": 2}\n");
        let err = load_pairs(f.path(), PairFormat::Jsonl).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains(":1:"), "error must name line 1: {msg}");
        assert!(msg.contains("label"));
    }

    #[test]
    fn load_rejects_missing_field() {
        let f = temp_file("{\"query\": \"q\", \"label\": 1}\n");
        let err = load_pairs(f.path(), PairFormat::Jsonl).unwrap_err();
        assert!(err.to_string().contains(":1:"));
    }

    #[test]
    fn load_tsv_pairs() {
        let f = temp_file("heart attack\tcardiac arrest study\t1\nbones\tcardiac arrest study\t0\n");
        let pairs = load_pairs(f.path(), PairFormat::Tsv).unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[0].query, "heart attack");
        assert_eq!(pairs[1].label, 0);
    }

    #[test]
    fn load_tsv_rejects_wrong_column_count() {
        let f = temp_file("only two\tcolumns\n");
        let err = load_pairs(f.path(), PairFormat::Tsv).unwrap_err();
        assert!(err.to_string().contains("3 tab-separated"));
    }

    #[test]
    fn negatives_with_single_alternative() {
        let docs = vec![("doc text".to_string(), "A".to_string())];
        let topics = vec!["A".to_string(), "B".to_string()];
        let pairs = generate_negatives(&docs, &topics, 1.0, 7).unwrap();
        assert_eq!(
            pairs,
            vec![
                LabeledPair::new("A", "doc text", 1),
                LabeledPair::new("B", "doc text", 0),
            ]
        );
    }

    #[test]
    fn negatives_deterministic_for_fixed_seed() {
        let docs: Vec<_> = (0..20)
            .map(|i| (format!("doc {i}"), format!("T{}", i % 5)))
            .collect();
        let topics: Vec<_> = (0..5).map(|i| format!("T{i}")).collect();
        let a = generate_negatives(&docs, &topics, 2.0, 42).unwrap();
        let b = generate_negatives(&docs, &topics, 2.0, 42).unwrap();
        assert_eq!(a, b);
        let c = generate_negatives(&docs, &topics, 2.0, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn negatives_reject_single_topic_universe() {
        let docs = vec![("doc".to_string(), "A".to_string())];
        let topics = vec!["A".to_string()];
        assert!(matches!(
            generate_negatives(&docs, &topics, 1.0, 0),
            Err(Error::SingleTopicUniverse)
        ));
    }

    #[test]
    fn negatives_never_reuse_true_topic() {
        let docs: Vec<_> = (0..50)
            .map(|i| (format!("doc {i}"), format!("T{}", i % 4)))
            .collect();
        let topics: Vec<_> = (0..4).map(|i| format!("T{i}")).collect();
        let pairs = generate_negatives(&docs, &topics, 3.0, 11).unwrap();
        for p in pairs.iter().filter(|p| p.label == 0) {
            let true_topic = docs
                .iter()
                .find(|(d, _)| *d == p.document)
                .map(|(_, t)| t.clone())
                .unwrap();
            assert_ne!(p.query, true_topic);
        }
    }

    fn numbered_pairs(n: usize) -> Vec<LabeledPair> {
        (0..n)
            .map(|i| LabeledPair::new(format!("q{i}"), format!("d{i}"), (i % 2) as u8))
            .collect()
    }

    #[test]
    fn split_sizes_use_floor_with_remainder_to_train() {
        let s = split(&numbered_pairs(10), (0.6, 0.2, 0.2), 1).unwrap();
        assert_eq!((s.train.len(), s.dev.len(), s.test.len()), (6, 2, 2));

        // 11 elements: dev/test floor to 2 each, train takes the remainder 7.
        let s = split(&numbered_pairs(11), (0.6, 0.2, 0.2), 1).unwrap();
        assert_eq!((s.train.len(), s.dev.len(), s.test.len()), (7, 2, 2));
    }

    #[test]
    fn split_deterministic_for_fixed_seed() {
        let pairs = numbered_pairs(37);
        let a = split(&pairs, (0.6, 0.2, 0.2), 99).unwrap();
        let b = split(&pairs, (0.6, 0.2, 0.2), 99).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn split_rejects_bad_ratios() {
        let pairs = numbered_pairs(4);
        assert!(split(&pairs, (0.5, 0.5, 0.5), 0).is_err());
        assert!(split(&pairs, (1.0, 0.0, 0.0), 0).is_err());
    }

    proptest! {
        #[test]
        fn split_is_an_exact_partition(n in 0usize..200, seed in 0u64..1000) {
            let pairs = numbered_pairs(n);
            let s = split(&pairs, (0.6, 0.2, 0.2), seed).unwrap();
            prop_assert_eq!(s.train.len() + s.dev.len() + s.test.len(), n);

            let mut all: Vec<&LabeledPair> =
                s.train.iter().chain(s.dev.iter()).chain(s.test.iter()).collect();
            all.sort_by_key(|p| p.query.clone());
            let mut orig: Vec<&LabeledPair> = pairs.iter().collect();
            orig.sort_by_key(|p| p.query.clone());
            prop_assert_eq!(all, orig);
        }
    }

    #[test]
    fn split_roundtrips_through_directory() {
        let dir = tempfile::tempdir().unwrap();
        let s = split(&numbered_pairs(10), (0.6, 0.2, 0.2), 5).unwrap();
        s.write_to_dir(dir.path()).unwrap();
        let train = load_pairs(&dir.path().join("train.jsonl"), PairFormat::Jsonl).unwrap();
        assert_eq!(train, s.train);
        let manifest = fs::read_to_string(dir.path().join("manifest.json")).unwrap();
        assert!(manifest.contains("\"seed\": 5"));
    }
}
