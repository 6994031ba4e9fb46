//! The matching model: query encoder, weighted-graph GCN stack,
//! rank-and-pooling, attention matching and aggregation, plus the
//! pre-renormalization spectral filter kept as a correctness oracle.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embed::EmbeddedPair;
use crate::error::{Error, Result};
use crate::keygraph::KeywordGraph;
use crate::tensor::{Tape, Tensor};

/// Model hyperparameters. Defaults: lambda 1, pool size 20, 2 graph
/// convolution layers, hidden size 100, kernel width 3, max query length 16.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub lambda: f64,
    pub pool_size: usize,
    pub num_layers: usize,
    pub embed_dim: usize,
    pub hidden_size: usize,
    pub conv_kernel_width: usize,
    pub max_query_len: usize,
    pub use_gcn: bool,
    pub use_attention: bool,
    pub use_query_encoder: bool,
}

impl ModelConfig {
    pub fn new(embed_dim: usize) -> Self {
        ModelConfig {
            lambda: 1.0,
            pool_size: 20,
            num_layers: 2,
            embed_dim,
            hidden_size: 100,
            conv_kernel_width: 3,
            max_query_len: 16,
            use_gcn: true,
            use_attention: true,
            use_query_encoder: true,
        }
    }

    /// Length of the final matching vector: one score per pooled vertex per
    /// layer, plus the OOV count.
    pub fn match_vector_len(&self) -> usize {
        self.pool_size * self.num_layers + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda < 0.0 || !self.lambda.is_finite() {
            return Err(Error::BadConfig(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if self.pool_size == 0 || self.num_layers == 0 || self.embed_dim == 0 {
            return Err(Error::BadConfig(
                "pool_size, num_layers and embed_dim must be positive".into(),
            ));
        }
        if self.hidden_size == 0 || self.max_query_len == 0 {
            return Err(Error::BadConfig(
                "hidden_size and max_query_len must be positive".into(),
            ));
        }
        if self.conv_kernel_width.is_multiple_of(2) {
            return Err(Error::BadConfig(format!(
                "conv_kernel_width must be odd, got {}",
                self.conv_kernel_width
            )));
        }
        Ok(())
    }
}

/// All trainable arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub gcn_weights: Vec<Vec<f64>>,
    pub conv_kernel: Vec<f64>,
    pub conv_bias: Vec<f64>,
    pub mlp_w1: Vec<f64>,
    pub mlp_b1: Vec<f64>,
    pub mlp_w2: Vec<f64>,
    pub mlp_b2: Vec<f64>,
}

fn glorot(rng: &mut ChaCha8Rng, len: usize, fan_in: usize, fan_out: usize) -> Vec<f64> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..len).map(|_| rng.random_range(-bound..bound)).collect()
}

impl ModelParams {
    /// Initialize the parameters.
    ///
    /// The square maps that feed the cosine matching stage (GCN weights and
    /// the query convolution) start at identity plus damped Glorot noise, so
    /// token-level matching signals survive the randomly initialized
    /// transforms and the short training budget; the classifier is plain
    /// Glorot with zero biases.
    pub fn init(config: &ModelConfig, seed: u64) -> Self {
        const NOISE_DAMPING: f64 = 0.15;
        let d_e = config.embed_dim;
        let w = config.conv_kernel_width;
        let hidden = config.hidden_size;
        let m_len = config.match_vector_len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        let gcn_weights: Vec<Vec<f64>> = (0..config.num_layers)
            .map(|_| {
                let mut m = glorot(&mut rng, d_e * d_e, d_e, d_e);
                for v in m.iter_mut() {
                    *v *= NOISE_DAMPING;
                }
                for i in 0..d_e {
                    m[i * d_e + i] += 1.0;
                }
                m
            })
            .collect();

        let mut conv_kernel = glorot(&mut rng, w * d_e * d_e, w * d_e, d_e);
        for v in conv_kernel.iter_mut() {
            *v *= NOISE_DAMPING;
        }
        let center = w / 2;
        for i in 0..d_e {
            conv_kernel[(center * d_e + i) * d_e + i] += 1.0;
        }

        ModelParams {
            gcn_weights,
            conv_kernel,
            conv_bias: vec![0.0; d_e],
            mlp_w1: glorot(&mut rng, m_len * hidden, m_len, hidden),
            mlp_b1: vec![0.0; hidden],
            mlp_w2: glorot(&mut rng, hidden, hidden, 1),
            mlp_b2: vec![0.0; 1],
        }
    }

    /// Named parameter entries with shapes, in a fixed order.
    pub fn entries(&self, config: &ModelConfig) -> Vec<(String, Vec<usize>, &Vec<f64>)> {
        let d_e = config.embed_dim;
        let mut out = Vec::new();
        for (l, w) in self.gcn_weights.iter().enumerate() {
            out.push((format!("gcn_w{l}"), vec![d_e, d_e], w));
        }
        out.push((
            "conv_kernel".into(),
            vec![config.conv_kernel_width, d_e, d_e],
            &self.conv_kernel,
        ));
        out.push(("conv_bias".into(), vec![d_e], &self.conv_bias));
        out.push((
            "mlp_w1".into(),
            vec![config.match_vector_len(), config.hidden_size],
            &self.mlp_w1,
        ));
        out.push(("mlp_b1".into(), vec![config.hidden_size], &self.mlp_b1));
        out.push(("mlp_w2".into(), vec![config.hidden_size, 1], &self.mlp_w2));
        out.push(("mlp_b2".into(), vec![1], &self.mlp_b2));
        out
    }

    pub fn arrays(&self) -> Vec<&Vec<f64>> {
        let mut out: Vec<&Vec<f64>> = self.gcn_weights.iter().collect();
        out.extend([
            &self.conv_kernel,
            &self.conv_bias,
            &self.mlp_w1,
            &self.mlp_b1,
            &self.mlp_w2,
            &self.mlp_b2,
        ]);
        out
    }

    pub fn arrays_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out: Vec<&mut Vec<f64>> = self.gcn_weights.iter_mut().collect();
        out.extend([
            &mut self.conv_kernel,
            &mut self.conv_bias,
            &mut self.mlp_w1,
            &mut self.mlp_b1,
            &mut self.mlp_w2,
            &mut self.mlp_b2,
        ]);
        out
    }
}

/// Model parameters mounted on a tape for one forward pass.
pub struct TapeParams {
    pub gcn_weights: Vec<Tensor>,
    pub conv_kernel: Tensor,
    pub conv_bias: Tensor,
    pub mlp_w1: Tensor,
    pub mlp_b1: Tensor,
    pub mlp_w2: Tensor,
    pub mlp_b2: Tensor,
}

impl TapeParams {
    pub fn mount(tape: &Tape, params: &ModelParams, config: &ModelConfig, trainable: bool) -> Self {
        let d_e = config.embed_dim;
        TapeParams {
            gcn_weights: params
                .gcn_weights
                .iter()
                .map(|w| tape.leaf(&[d_e, d_e], w.clone(), trainable))
                .collect(),
            conv_kernel: tape.leaf(
                &[config.conv_kernel_width, d_e, d_e],
                params.conv_kernel.clone(),
                trainable,
            ),
            conv_bias: tape.leaf(&[d_e], params.conv_bias.clone(), trainable),
            mlp_w1: tape.leaf(
                &[config.match_vector_len(), config.hidden_size],
                params.mlp_w1.clone(),
                trainable,
            ),
            mlp_b1: tape.leaf(&[config.hidden_size], params.mlp_b1.clone(), trainable),
            mlp_w2: tape.leaf(&[config.hidden_size, 1], params.mlp_w2.clone(), trainable),
            mlp_b2: tape.leaf(&[1], params.mlp_b2.clone(), trainable),
        }
    }

    /// Tensors in the same order as `ModelParams::arrays`.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out: Vec<&Tensor> = self.gcn_weights.iter().collect();
        out.extend([
            &self.conv_kernel,
            &self.conv_bias,
            &self.mlp_w1,
            &self.mlp_b1,
            &self.mlp_w2,
            &self.mlp_b2,
        ]);
        out
    }
}

/// Encode the query with a same-length 1-D convolution and ReLU, re-zeroing
/// padded positions afterwards. With the encoder ablated the embedding passes
/// through unchanged.
pub fn encode_query(
    q_emb: &Tensor,
    mask: &[bool],
    params: &TapeParams,
    config: &ModelConfig,
    tape: &Tape,
) -> Tensor {
    if !config.use_query_encoder {
        return q_emb.clone();
    }
    let encoded = q_emb
        .conv1d_same(&params.conv_kernel, &params.conv_bias)
        .relu();
    let d_e = config.embed_dim;
    let mut keep = vec![0.0; mask.len() * d_e];
    for (row, &m) in mask.iter().enumerate() {
        if m {
            keep[row * d_e..(row + 1) * d_e].fill(1.0);
        }
    }
    let keep = tape.constant(&[mask.len(), d_e], keep);
    encoded.mul(&keep)
}

/// The row-stochastic propagation operator: `P[i][j] = (A[i][j] + lambda *
/// [i = j]) / (lambda + sum_k A[i][k])`.
pub fn propagation_matrix(adjacency: &[f64], d_g: usize, lambda: f64) -> Result<Vec<f64>> {
    assert_eq!(adjacency.len(), d_g * d_g);
    if lambda < 0.0 || !lambda.is_finite() {
        return Err(Error::NegativeLambda(lambda));
    }
    let mut p = vec![0.0; d_g * d_g];
    for i in 0..d_g {
        let degree: f64 = adjacency[i * d_g..(i + 1) * d_g].iter().sum();
        let denom = lambda + degree;
        if denom == 0.0 {
            return Err(Error::IsolatedVertex(i));
        }
        for j in 0..d_g {
            let a = adjacency[i * d_g + j] + if i == j { lambda } else { 0.0 };
            p[i * d_g + j] = a / denom;
        }
    }
    Ok(p)
}

/// One graph convolution layer: `ReLU(P X W)`.
pub fn gcn_layer(x: &Tensor, p: &Tensor, w: &Tensor) -> Tensor {
    p.matmul(x).matmul(w).relu()
}

/// The order-1 spectral filter `y = theta (lambda I + D^{-1} A) x`, kept as
/// the structural oracle the renormalized production layer is checked
/// against.
pub fn reference_spectral_filter(
    x: &[f64],
    adjacency: &[f64],
    d_g: usize,
    lambda: f64,
    theta: f64,
) -> Result<Vec<f64>> {
    assert_eq!(x.len(), d_g);
    assert_eq!(adjacency.len(), d_g * d_g);
    let mut y = vec![0.0; d_g];
    for i in 0..d_g {
        let degree: f64 = adjacency[i * d_g..(i + 1) * d_g].iter().sum();
        if degree == 0.0 {
            return Err(Error::IsolatedVertex(i));
        }
        let mut acc = lambda * x[i];
        for j in 0..d_g {
            acc += adjacency[i * d_g + j] / degree * x[j];
        }
        y[i] = theta * acc;
    }
    Ok(y)
}

/// Normalized feature sums: per feature dimension, softmax over vertices,
/// then summed across dimensions. The result conserves `sum_i T_i = d_e`.
pub fn vertex_scores(features: &[f64], d_g: usize, d_e: usize) -> Vec<f64> {
    assert_eq!(features.len(), d_g * d_e);
    let mut t = vec![0.0; d_g];
    for j in 0..d_e {
        let max = (0..d_g)
            .map(|i| features[i * d_e + j])
            .fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        let mut col = vec![0.0; d_g];
        for i in 0..d_g {
            let e = (features[i * d_e + j] - max).exp();
            col[i] = e;
            denom += e;
        }
        for i in 0..d_g {
            t[i] += col[i] / denom;
        }
    }
    t
}

/// Rank vertices by their normalized feature sum and keep the top `k`.
/// Returns the selected original indices (ties broken by ascending index)
/// and the number of padding slots when the graph is smaller than `k`.
pub fn rank_and_pool(features: &[f64], d_g: usize, d_e: usize, k: usize) -> (Vec<usize>, usize) {
    let t = vertex_scores(features, d_g, d_e);
    let mut order: Vec<usize> = (0..d_g).collect();
    order.sort_by(|&a, &b| {
        t[b].partial_cmp(&t[a])
            .expect("vertex scores are finite")
            .then(a.cmp(&b))
    });
    order.truncate(k);
    let pad = k.saturating_sub(d_g);
    (order, pad)
}

/// Vertex-aware query representation.
///
/// With attention: softmax over the unmasked query-token scores `Q v`, then
/// the convex combination of query rows. Without attention: the
/// per-dimension max over unmasked rows.
pub fn attend(q: &Tensor, mask: &[bool], v: &Tensor, use_attention: bool) -> Result<Tensor> {
    if !mask.iter().any(|&m| m) {
        return Err(Error::FullyMaskedQuery);
    }
    if use_attention {
        let scores = q.matmul(v);
        let weights = scores.masked_softmax(mask);
        Ok(weights.matmul(q))
    } else {
        Ok(q.masked_rows_max(mask))
    }
}

/// Cosine matching score between a vertex vector and its query
/// representation.
pub fn match_score(v: &Tensor, q_i: &Tensor) -> Tensor {
    v.cosine_sim(q_i)
}

/// The aggregated per-layer matching scores followed by the OOV count.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchVector {
    pub values: Vec<f64>,
}

impl MatchVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Everything a forward pass produces.
pub struct ForwardOutput {
    pub probability: f64,
    pub logit: Tensor,
    pub match_vector: MatchVector,
    pub selected: Vec<usize>,
}

fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Run the five model stages on one embedded pair.
pub fn forward(
    tape: &Tape,
    pair: &EmbeddedPair,
    graph: &KeywordGraph,
    params: &TapeParams,
    config: &ModelConfig,
) -> Result<ForwardOutput> {
    let d_g = graph.vertex_count();
    if d_g == 0 {
        return Err(Error::EmptyGraph);
    }
    let d_e = config.embed_dim;
    debug_assert_eq!(pair.d_e, d_e);
    debug_assert_eq!(pair.d_g, d_g);

    let q_emb = tape.constant(&[pair.d_q, d_e], pair.q_emb.clone());
    let g_emb = tape.constant(&[d_g, d_e], pair.g_emb.clone());

    // Stage 1-2: encode the query and the graph vertices.
    let q = encode_query(&q_emb, &pair.mask, params, config, tape);
    let layers: Vec<Tensor> = if config.use_gcn {
        let p = propagation_matrix(graph.adjacency(), d_g, config.lambda)?;
        let p = tape.constant(&[d_g, d_g], p);
        let mut layers = Vec::with_capacity(config.num_layers);
        let mut x = g_emb;
        for w in &params.gcn_weights {
            x = gcn_layer(&x, &p, w);
            layers.push(x.clone());
        }
        layers
    } else {
        vec![g_emb; config.num_layers]
    };

    // Stage 3: rank on the last layer's features and pool to K vertices.
    let last = layers.last().expect("at least one layer");
    let (selected, pad) = rank_and_pool(&last.values(), d_g, d_e, config.pool_size);

    // Stage 4: attention matching of each selected vertex in each layer.
    let mut scores: Vec<Tensor> = Vec::with_capacity(config.match_vector_len());
    for layer in &layers {
        for &idx in &selected {
            let v = layer.row(idx);
            let q_i = attend(&q, &pair.mask, &v, config.use_attention)?;
            scores.push(match_score(&v, &q_i));
        }
        for _ in 0..pad {
            scores.push(tape.constant(&[], vec![0.0]));
        }
    }

    // Stage 5: aggregate with the OOV feature and classify.
    scores.push(tape.constant(&[], vec![pair.x_oov as f64]));
    let m = tape.concat(&scores);
    let hidden = m.matmul(&params.mlp_w1).add(&params.mlp_b1).relu();
    let logit = hidden.matmul(&params.mlp_w2).add(&params.mlp_b2);
    let probability = stable_sigmoid(logit.values()[0]);

    Ok(ForwardOutput {
        probability,
        match_vector: MatchVector { values: m.values() },
        logit,
        selected,
    })
}

/// Convenience wrapper: mount parameters on a fresh tape and run forward.
pub fn predict(
    pair: &EmbeddedPair,
    graph: &KeywordGraph,
    params: &ModelParams,
    config: &ModelConfig,
) -> Result<ForwardOutput> {
    let tape = Tape::new();
    let mounted = TapeParams::mount(&tape, params, config, false);
    forward(&tape, pair, graph, &mounted, config)
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"KGMCKPT1";

#[derive(Serialize, Deserialize)]
struct CheckpointManifest {
    config: ModelConfig,
    entries: Vec<(String, Vec<usize>)>,
}

/// Write a checkpoint: a JSON manifest followed by a flat little-endian
/// 64-bit value block. Round-trips bit-exactly.
pub fn save_checkpoint(path: &Path, config: &ModelConfig, params: &ModelParams) -> Result<()> {
    let entries = params.entries(config);
    let manifest = CheckpointManifest {
        config: config.clone(),
        entries: entries
            .iter()
            .map(|(name, shape, _)| (name.clone(), shape.clone()))
            .collect(),
    };
    let manifest_json = serde_json::to_vec(&manifest).expect("manifest serializes");
    let mut bytes = Vec::new();
    bytes.extend_from_slice(CHECKPOINT_MAGIC);
    bytes.extend_from_slice(&(manifest_json.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&manifest_json);
    for (_, _, values) in &entries {
        for v in values.iter() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Read a checkpoint back into a config and parameters.
pub fn load_checkpoint(path: &Path) -> Result<(ModelConfig, ModelParams)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 16 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(Error::BadCheckpoint("missing magic header".into()));
    }
    let manifest_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let values_start = 16 + manifest_len;
    if bytes.len() < values_start {
        return Err(Error::BadCheckpoint("truncated manifest".into()));
    }
    let manifest: CheckpointManifest = serde_json::from_slice(&bytes[16..values_start])
        .map_err(|e| Error::BadCheckpoint(e.to_string()))?;
    manifest.config.validate()?;

    let total: usize = manifest
        .entries
        .iter()
        .map(|(_, shape)| shape.iter().product::<usize>())
        .sum();
    if bytes.len() != values_start + total * 8 {
        return Err(Error::BadCheckpoint(format!(
            "value block has {} bytes, expected {}",
            bytes.len() - values_start,
            total * 8
        )));
    }

    let mut offset = values_start;
    let mut read_block = |len: usize| -> Vec<f64> {
        let mut out = Vec::with_capacity(len);
        for _ in 0..len {
            out.push(f64::from_le_bytes(bytes[offset..offset + 8].try_into().unwrap()));
            offset += 8;
        }
        out
    };

    let config = manifest.config.clone();
    let d_e = config.embed_dim;
    let mut gcn_weights = Vec::new();
    let mut conv_kernel = Vec::new();
    let mut conv_bias = Vec::new();
    let mut mlp_w1 = Vec::new();
    let mut mlp_b1 = Vec::new();
    let mut mlp_w2 = Vec::new();
    let mut mlp_b2 = Vec::new();
    for (name, shape) in &manifest.entries {
        let len: usize = shape.iter().product();
        let block = read_block(len);
        match name.as_str() {
            "conv_kernel" => conv_kernel = block,
            "conv_bias" => conv_bias = block,
            "mlp_w1" => mlp_w1 = block,
            "mlp_b1" => mlp_b1 = block,
            "mlp_w2" => mlp_w2 = block,
            "mlp_b2" => mlp_b2 = block,
            other if other.starts_with("gcn_w") => gcn_weights.push(block),
            other => {
                return Err(Error::BadCheckpoint(format!("unknown entry {other:?}")));
            }
        }
    }
    if gcn_weights.len() != config.num_layers
        || gcn_weights.iter().any(|w| w.len() != d_e * d_e)
        || conv_kernel.len() != config.conv_kernel_width * d_e * d_e
    {
        return Err(Error::BadCheckpoint("entry shapes do not match config".into()));
    }
    Ok((
        config,
        ModelParams {
            gcn_weights,
            conv_kernel,
            conv_bias,
            mlp_w1,
            mlp_b1,
            mlp_w2,
            mlp_b2,
        },
    ))
}
