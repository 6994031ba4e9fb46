//! The `mgan` command-line interface: preprocess corpora, build graph
//! caches, train, evaluate, predict and run the ablation grid.
//!
//! Exit status: 0 on success, 1 on usage errors, 2 on data or contract
//! errors.

use std::collections::HashSet;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::corpus::{load_pairs, split, LabeledPair, PairFormat};
use crate::embed::{load_embeddings, write_embeddings, EmbeddingTable};
use crate::error::{Error, Result};
use crate::eval::{metrics, Metrics};
use crate::mgan::{load_checkpoint, save_checkpoint, ModelConfig, ModelParams};
use crate::pipeline::{read_idf, write_idf, Preprocessor};
use crate::synth::{generate, SynthConfig};
use crate::textpipe::{default_stopwords, load_stopwords};
use crate::trainer::{predictions, train, write_epoch_log, TrainConfig, TrainSample};

/// Resolved settings for a run: model and trainer hyperparameters plus the
/// preprocessing knobs. Flags override `--config` file entries, which
/// override the defaults.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub lambda: f64,
    pub pool_size: usize,
    pub num_layers: usize,
    pub hidden_size: usize,
    pub conv_kernel_width: usize,
    pub max_query_len: usize,
    pub use_gcn: bool,
    pub use_attention: bool,
    pub use_query_encoder: bool,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub keyword_fraction: f64,
    pub distance_threshold: usize,
    pub train_ratio: f64,
    pub dev_ratio: f64,
    pub test_ratio: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            lambda: 1.0,
            pool_size: 20,
            num_layers: 2,
            hidden_size: 100,
            conv_kernel_width: 3,
            max_query_len: 16,
            use_gcn: true,
            use_attention: true,
            use_query_encoder: true,
            learning_rate: 0.001,
            epochs: 5,
            batch_size: 32,
            seed: 0,
            keyword_fraction: 0.2,
            distance_threshold: 20,
            train_ratio: 0.6,
            dev_ratio: 0.2,
            test_ratio: 0.2,
        }
    }
}

macro_rules! config_fields {
    ($macro:ident) => {
        $macro!(lambda, f64);
        $macro!(pool_size, usize);
        $macro!(num_layers, usize);
        $macro!(hidden_size, usize);
        $macro!(conv_kernel_width, usize);
        $macro!(max_query_len, usize);
        $macro!(use_gcn, bool);
        $macro!(use_attention, bool);
        $macro!(use_query_encoder, bool);
        $macro!(learning_rate, f64);
        $macro!(epochs, usize);
        $macro!(batch_size, usize);
        $macro!(seed, u64);
        $macro!(keyword_fraction, f64);
        $macro!(distance_threshold, usize);
        $macro!(train_ratio, f64);
        $macro!(dev_ratio, f64);
        $macro!(test_ratio, f64);
    };
}

impl RunConfig {
    /// Parse one `key=value` entry.
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<()> {
        macro_rules! try_set {
            ($field:ident, $ty:ty) => {
                if key == stringify!($field) {
                    self.$field = value.trim().parse::<$ty>().map_err(|_| {
                        Error::BadConfig(format!("bad value {value:?} for {key}"))
                    })?;
                    return Ok(());
                }
            };
        }
        config_fields!(try_set);
        Err(Error::BadConfig(format!("unknown config key {key:?}")))
    }

    /// Load a flat key=value file over the defaults.
    pub fn from_file(path: &Path) -> Result<Self> {
        let mut config = RunConfig::default();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::parse(path, idx + 1, "expected key=value")
            })?;
            config
                .apply_kv(key.trim(), value.trim())
                .map_err(|e| Error::parse(path, idx + 1, e.to_string()))?;
        }
        Ok(config)
    }

    /// The effective configuration as key=value lines, in a fixed order.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        macro_rules! emit {
            ($field:ident, $ty:ty) => {
                out.push_str(&format!("{}={}\n", stringify!($field), self.$field));
            };
        }
        config_fields!(emit);
        out
    }

    pub fn model_config(&self, embed_dim: usize) -> ModelConfig {
        ModelConfig {
            lambda: self.lambda,
            pool_size: self.pool_size,
            num_layers: self.num_layers,
            embed_dim,
            hidden_size: self.hidden_size,
            conv_kernel_width: self.conv_kernel_width,
            max_query_len: self.max_query_len,
            use_gcn: self.use_gcn,
            use_attention: self.use_attention,
            use_query_encoder: self.use_query_encoder,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed,
            ..TrainConfig::default()
        }
    }
}

#[derive(Parser)]
#[command(
    name = "mgan",
    about = "Relevance matching between short queries and long documents over keyword graphs",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract keywords and cache each unique document's keyword graph.
    BuildGraphs(BuildGraphsArgs),
    /// Split a pair corpus, train the model and save the best checkpoint.
    Train(TrainArgs),
    /// Score a checkpoint against a labeled pair file.
    Evaluate(EvaluateArgs),
    /// Print the relevance probability of one query-document pair.
    Predict(PredictArgs),
    /// Train the ablation grid and the lambda sweep, emitting a table.
    Ablate(AblateArgs),
    /// Generate a synthetic corpus with a planted co-occurrence signal.
    GenSynth(GenSynthArgs),
}

#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// Flat key=value config file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    pool_size: Option<usize>,
    #[arg(long)]
    num_layers: Option<usize>,
    #[arg(long)]
    hidden_size: Option<usize>,
    #[arg(long)]
    conv_kernel_width: Option<usize>,
    #[arg(long)]
    max_query_len: Option<usize>,
    #[arg(long)]
    use_gcn: Option<bool>,
    #[arg(long)]
    use_attention: Option<bool>,
    #[arg(long)]
    use_query_encoder: Option<bool>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    keyword_fraction: Option<f64>,
    #[arg(long)]
    distance_threshold: Option<usize>,
    #[arg(long)]
    train_ratio: Option<f64>,
    #[arg(long)]
    dev_ratio: Option<f64>,
    #[arg(long)]
    test_ratio: Option<f64>,
    /// Stopword file (one token per line); defaults to the bundled list.
    #[arg(long)]
    stopwords: Option<PathBuf>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        macro_rules! override_with {
            ($field:ident, $ty:ty) => {
                if let Some(v) = self.$field {
                    config.$field = v;
                }
            };
        }
        config_fields!(override_with);
        Ok(config)
    }

    fn stopword_set(&self) -> Result<HashSet<String>> {
        match &self.stopwords {
            Some(path) => load_stopwords(path),
            None => Ok(default_stopwords()),
        }
    }
}

#[derive(Args)]
struct BuildGraphsArgs {
    /// Pair corpus (.jsonl or .tsv).
    #[arg(long)]
    corpus: PathBuf,
    /// Cache directory; graphs go to <out>/graphs, idf to <out>/idf.json.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    common: ConfigArgs,
}

#[derive(Args)]
struct TrainArgs {
    /// Pair corpus (.jsonl or .tsv).
    #[arg(long)]
    corpus: PathBuf,
    /// Word-vector table in text format.
    #[arg(long)]
    embeddings: PathBuf,
    /// Output directory for checkpoint, logs, splits and caches.
    #[arg(long)]
    out: PathBuf,
    /// Reuse a graph cache directory built by build-graphs.
    #[arg(long)]
    graphs: Option<PathBuf>,
    #[command(flatten)]
    common: ConfigArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Checkpoint written by train.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Labeled pairs to score (.jsonl or .tsv).
    #[arg(long)]
    pairs: PathBuf,
    /// Word-vector table in text format.
    #[arg(long)]
    embeddings: PathBuf,
    /// idf table written by train or build-graphs.
    #[arg(long)]
    idf: PathBuf,
    /// Optional path for the metrics JSON (also printed to stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Reuse a graph cache directory.
    #[arg(long)]
    graphs: Option<PathBuf>,
    #[command(flatten)]
    common: ConfigArgs,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    idf: PathBuf,
    /// Query text.
    #[arg(long)]
    query: String,
    /// Document text.
    #[arg(long)]
    document: String,
    #[command(flatten)]
    common: ConfigArgs,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Reuse a graph cache directory.
    #[arg(long)]
    graphs: Option<PathBuf>,
    #[command(flatten)]
    common: ConfigArgs,
}

#[derive(Args)]
struct GenSynthArgs {
    /// Output directory for pairs.jsonl and embeddings.txt.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 500)]
    pairs: usize,
    #[arg(long, default_value_t = 40)]
    embed_dim: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Parse argv and execute; returns the process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints help/version through the error path with status 0.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::BuildGraphs(args) => cmd_build_graphs(args),
        Command::Train(args) => cmd_train(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Ablate(args) => cmd_ablate(args),
        Command::GenSynth(args) => cmd_gen_synth(args),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

/// Number of vector components on the first data line of an embedding file.
fn sniff_embedding_dim(path: &Path) -> Result<usize> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    for line in text.lines() {
        let fields = line.split_whitespace().count();
        if fields > 1 {
            return Ok(fields - 1);
        }
    }
    Err(Error::parse(path, 1, "no embedding entries found"))
}

fn mkdir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn cmd_build_graphs(args: BuildGraphsArgs) -> Result<()> {
    let config = args.common.resolve()?;
    let pairs = load_pairs(&args.corpus, PairFormat::from_path(&args.corpus))?;
    let prep = Preprocessor::fit(
        &pairs,
        args.common.stopword_set()?,
        config.keyword_fraction,
        config.distance_threshold,
    )?;
    mkdir(&args.out)?;
    let graphs_dir = args.out.join("graphs");
    mkdir(&graphs_dir)?;
    write_idf(&args.out.join("idf.json"), &prep.idf)?;

    let mut seen = HashSet::new();
    let mut count = 0usize;
    for pair in &pairs {
        if seen.insert(pair.document.as_str()) {
            prep.graph(&pair.document, Some(&graphs_dir))?;
            count += 1;
        }
    }
    println!("cached {count} keyword graphs in {}", graphs_dir.display());
    Ok(())
}

struct PreparedCorpus {
    samples_train: Vec<TrainSample>,
    samples_dev: Vec<TrainSample>,
    samples_test: Vec<TrainSample>,
    table: EmbeddingTable,
}

fn prepare_corpus(
    corpus: &Path,
    embeddings: &Path,
    graphs: Option<&Path>,
    stopwords: HashSet<String>,
    config: &RunConfig,
    out: Option<&Path>,
) -> Result<PreparedCorpus> {
    let pairs = load_pairs(corpus, PairFormat::from_path(corpus))?;
    let splits = split(
        &pairs,
        (config.train_ratio, config.dev_ratio, config.test_ratio),
        config.seed,
    )?;
    let dim = sniff_embedding_dim(embeddings)?;
    let (table, duplicates) = load_embeddings(embeddings, dim)?;
    if duplicates > 0 {
        eprintln!("warning: {duplicates} duplicate embedding tokens (last entry wins)");
    }
    let prep = Preprocessor::fit(
        &pairs,
        stopwords,
        config.keyword_fraction,
        config.distance_threshold,
    )?;

    let cache_dir = match (graphs, out) {
        (Some(dir), _) => Some(dir.to_path_buf()),
        (None, Some(out)) => {
            let dir = out.join("graphs");
            mkdir(&dir)?;
            Some(dir)
        }
        (None, None) => None,
    };
    if let Some(out) = out {
        mkdir(out)?;
        splits.write_to_dir(&out.join("splits"))?;
        write_idf(&out.join("idf.json"), &prep.idf)?;
    }

    let cache = cache_dir.as_deref();
    Ok(PreparedCorpus {
        samples_train: prep.prepare(&splits.train, &table, config.max_query_len, cache)?,
        samples_dev: prep.prepare(&splits.dev, &table, config.max_query_len, cache)?,
        samples_test: prep.prepare(&splits.test, &table, config.max_query_len, cache)?,
        table,
    })
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let config = args.common.resolve()?;
    mkdir(&args.out)?;
    let prepared = prepare_corpus(
        &args.corpus,
        &args.embeddings,
        args.graphs.as_deref(),
        args.common.stopword_set()?,
        &config,
        Some(&args.out),
    )?;
    fs::write(args.out.join("config.txt"), config.echo())
        .map_err(|e| Error::io(args.out.join("config.txt"), e))?;

    let m_config = config.model_config(prepared.table.dimension());
    m_config.validate()?;
    let t_config = config.train_config();
    let params = ModelParams::init(&m_config, config.seed);
    let result = train(
        params,
        &prepared.samples_train,
        &prepared.samples_dev,
        &t_config,
        &m_config,
    )?;

    write_epoch_log(&args.out.join("train_log.csv"), &result.log)?;
    save_checkpoint(&args.out.join("checkpoint.bin"), &m_config, &result.params)?;

    let test_probs = predictions(&result.params, &m_config, &prepared.samples_test)?;
    let test_labels: Vec<u8> = prepared.samples_test.iter().map(|s| s.label).collect();
    let test_metrics = metrics(&test_probs, &test_labels, 0.5)?;
    let json = serde_json::to_string_pretty(&test_metrics).expect("metrics serialize");
    fs::write(args.out.join("test_metrics.json"), &json)
        .map_err(|e| Error::io(args.out.join("test_metrics.json"), e))?;

    println!(
        "best epoch {} dev_accuracy {:.4}; test_accuracy {:.4} test_f1 {:.4}",
        result.best_epoch, result.best_dev_accuracy, test_metrics.accuracy, test_metrics.f1
    );
    println!("checkpoint: {}", args.out.join("checkpoint.bin").display());
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let config = args.common.resolve()?;
    let (m_config, params) = load_checkpoint(&args.checkpoint)?;
    let pairs = load_pairs(&args.pairs, PairFormat::from_path(&args.pairs))?;
    let dim = sniff_embedding_dim(&args.embeddings)?;
    if dim != m_config.embed_dim {
        return Err(Error::BadConfig(format!(
            "embedding dimension {dim} does not match checkpoint dimension {}",
            m_config.embed_dim
        )));
    }
    let (table, _) = load_embeddings(&args.embeddings, dim)?;
    let idf = read_idf(&args.idf)?;
    let prep = Preprocessor::from_idf(
        idf,
        args.common.stopword_set()?,
        config.keyword_fraction,
        config.distance_threshold,
    );
    let samples = prep.prepare(&pairs, &table, m_config.max_query_len, args.graphs.as_deref())?;
    let probs = predictions(&params, &m_config, &samples)?;
    let labels: Vec<u8> = samples.iter().map(|s| s.label).collect();
    let m = metrics(&probs, &labels, 0.5)?;
    let json = serde_json::to_string_pretty(&m).expect("metrics serialize");
    if let Some(out) = &args.out {
        fs::write(out, &json).map_err(|e| Error::io(out, e))?;
    }
    println!("{json}");
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> Result<()> {
    let config = args.common.resolve()?;
    let (m_config, params) = load_checkpoint(&args.checkpoint)?;
    let dim = sniff_embedding_dim(&args.embeddings)?;
    if dim != m_config.embed_dim {
        return Err(Error::BadConfig(format!(
            "embedding dimension {dim} does not match checkpoint dimension {}",
            m_config.embed_dim
        )));
    }
    let (table, _) = load_embeddings(&args.embeddings, dim)?;
    let idf = read_idf(&args.idf)?;
    let prep = Preprocessor::from_idf(
        idf,
        args.common.stopword_set()?,
        config.keyword_fraction,
        config.distance_threshold,
    );
    let pair = LabeledPair::new(args.query.clone(), args.document.clone(), 0);
    let samples = prep.prepare(&[pair], &table, m_config.max_query_len, None)?;
    let probs = predictions(&params, &m_config, &samples)?;
    println!("{}", probs[0]);
    Ok(())
}

const LAMBDA_SWEEP: [f64; 7] = [0.01, 0.1, 0.5, 1.0, 2.0, 10.0, 100.0];

fn cmd_ablate(args: AblateArgs) -> Result<()> {
    let config = args.common.resolve()?;
    mkdir(&args.out)?;
    let prepared = prepare_corpus(
        &args.corpus,
        &args.embeddings,
        args.graphs.as_deref(),
        args.common.stopword_set()?,
        &config,
        Some(&args.out),
    )?;
    fs::write(args.out.join("config.txt"), config.echo())
        .map_err(|e| Error::io(args.out.join("config.txt"), e))?;

    let mut variants: Vec<(String, ModelConfig)> = Vec::new();
    let base = config.model_config(prepared.table.dimension());
    variants.push(("full".into(), base.clone()));
    let mut no_gcn = base.clone();
    no_gcn.use_gcn = false;
    variants.push(("no-gcn".into(), no_gcn));
    let mut no_attention = base.clone();
    no_attention.use_attention = false;
    variants.push(("no-attention".into(), no_attention));
    let mut no_encoder = base.clone();
    no_encoder.use_query_encoder = false;
    variants.push(("no-query-encoding".into(), no_encoder));
    let mut k5 = base.clone();
    k5.pool_size = 5;
    variants.push(("k5".into(), k5));
    for lambda in LAMBDA_SWEEP {
        if lambda == base.lambda {
            continue;
        }
        let mut swept = base.clone();
        swept.lambda = lambda;
        variants.push((format!("lambda-{lambda}"), swept));
    }

    let t_config = config.train_config();
    let mut rows = Vec::new();
    println!("variant,lambda,pool_size,dev_accuracy,dev_f1,test_accuracy,test_f1");
    for (name, m_config) in &variants {
        m_config.validate()?;
        let params = ModelParams::init(m_config, config.seed);
        let result = train(
            params,
            &prepared.samples_train,
            &prepared.samples_dev,
            &t_config,
            m_config,
        )?;
        let dev = eval_samples(&result.params, m_config, &prepared.samples_dev)?;
        let test = eval_samples(&result.params, m_config, &prepared.samples_test)?;
        let row = format!(
            "{},{},{},{},{},{},{}",
            name, m_config.lambda, m_config.pool_size, dev.accuracy, dev.f1, test.accuracy, test.f1
        );
        println!("{row}");
        rows.push(row);
    }
    let mut csv = String::from("variant,lambda,pool_size,dev_accuracy,dev_f1,test_accuracy,test_f1\n");
    for row in rows {
        csv.push_str(&row);
        csv.push('\n');
    }
    fs::write(args.out.join("ablation.csv"), csv)
        .map_err(|e| Error::io(args.out.join("ablation.csv"), e))?;
    Ok(())
}

fn eval_samples(
    params: &ModelParams,
    config: &ModelConfig,
    samples: &[TrainSample],
) -> Result<Metrics> {
    let probs = predictions(params, config, samples)?;
    let labels: Vec<u8> = samples.iter().map(|s| s.label).collect();
    metrics(&probs, &labels, 0.5)
}

fn cmd_gen_synth(args: GenSynthArgs) -> Result<()> {
    mkdir(&args.out)?;
    let config = SynthConfig {
        n_pairs: args.pairs,
        embed_dim: args.embed_dim,
        seed: args.seed,
        ..SynthConfig::default()
    };
    let corpus = generate(&config);
    crate::corpus::write_pairs(&args.out.join("pairs.jsonl"), &corpus.pairs)?;
    write_embeddings(&args.out.join("embeddings.txt"), &corpus.table)?;
    println!(
        "wrote {} pairs and a {}-token embedding table to {}",
        corpus.pairs.len(),
        corpus.table.len(),
        args.out.display()
    );
    Ok(())
}
