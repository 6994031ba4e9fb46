//! Adam training on binary cross-entropy with dev-based checkpoint
//! selection.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::embed::EmbeddedPair;
use crate::error::{Error, Result};
use crate::eval::{metrics, Metrics};
use crate::keygraph::KeywordGraph;
use crate::mgan::{forward, predict, ModelConfig, ModelParams, TapeParams};
use crate::tensor::Tape;

/// Optimizer and loop hyperparameters. Defaults: lr 0.001, 5 epochs,
/// batch size 32, Adam (0.9, 0.999, 1e-8).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            epochs: 5,
            batch_size: 32,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            seed: 0,
        }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: usize,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let zeros: Vec<Vec<f64>> = params.arrays().iter().map(|a| vec![0.0; a.len()]).collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn step_count(&self) -> usize {
        self.t
    }
}

/// One bias-corrected Adam update over all parameter arrays.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &[Vec<f64>],
    state: &mut AdamState,
    config: &TrainConfig,
) -> Result<()> {
    let mut arrays = params.arrays_mut();
    if grads.len() != arrays.len() {
        return Err(Error::ShapeMismatch {
            name: "adam gradients".into(),
            expected: vec![arrays.len()],
            got: vec![grads.len()],
        });
    }
    for (a, g) in arrays.iter().zip(grads) {
        if a.len() != g.len() {
            return Err(Error::ShapeMismatch {
                name: "adam gradient array".into(),
                expected: vec![a.len()],
                got: vec![g.len()],
            });
        }
    }

    state.t += 1;
    let t = state.t as i32;
    let b1 = config.adam_beta1;
    let b2 = config.adam_beta2;
    let bias1 = 1.0 - b1.powi(t);
    let bias2 = 1.0 - b2.powi(t);
    for (idx, array) in arrays.iter_mut().enumerate() {
        let m = &mut state.m[idx];
        let v = &mut state.v[idx];
        let g = &grads[idx];
        for i in 0..array.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let m_hat = m[i] / bias1;
            let v_hat = v[i] / bias2;
            array[i] -= config.learning_rate * m_hat / (v_hat.sqrt() + config.adam_epsilon);
        }
    }
    Ok(())
}

/// One preprocessed sample: the embedded pair, its document graph and label.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub pair: EmbeddedPair,
    pub graph: Arc<KeywordGraph>,
    pub label: u8,
}

/// Per-epoch training record.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_accuracy: f64,
    pub dev_f1: f64,
}

/// The best checkpoint by dev accuracy (earliest epoch wins ties) plus the
/// full epoch log.
#[derive(Debug, Clone)]
pub struct TrainResult {
    pub params: ModelParams,
    pub best_epoch: usize,
    pub best_dev_accuracy: f64,
    pub log: Vec<EpochLog>,
}

/// Probabilities of a parameter snapshot over a sample list.
pub fn predictions(
    params: &ModelParams,
    config: &ModelConfig,
    samples: &[TrainSample],
) -> Result<Vec<f64>> {
    samples
        .iter()
        .map(|s| Ok(predict(&s.pair, &s.graph, params, config)?.probability))
        .collect()
}

/// Metrics of a parameter snapshot at threshold 0.5.
pub fn evaluate(
    params: &ModelParams,
    config: &ModelConfig,
    samples: &[TrainSample],
) -> Result<Metrics> {
    let probs = predictions(params, config, samples)?;
    let labels: Vec<u8> = samples.iter().map(|s| s.label).collect();
    metrics(&probs, &labels, 0.5)
}

/// Train with shuffled mini-batches, evaluating on dev after each epoch and
/// returning the checkpoint with the best dev accuracy.
pub fn train(
    initial: ModelParams,
    train_set: &[TrainSample],
    dev_set: &[TrainSample],
    t_config: &TrainConfig,
    m_config: &ModelConfig,
) -> Result<TrainResult> {
    if train_set.is_empty() || dev_set.is_empty() {
        return Err(Error::EmptySplit);
    }
    let mut params = initial;
    let mut state = AdamState::new(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(t_config.seed);
    let mut best: Option<(usize, f64, ModelParams)> = None;
    let mut log = Vec::with_capacity(t_config.epochs);

    for epoch in 1..=t_config.epochs {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        for (batch_no, batch) in order.chunks(t_config.batch_size).enumerate() {
            let mut grad_acc: Vec<Vec<f64>> = params
                .arrays()
                .iter()
                .map(|a| vec![0.0; a.len()])
                .collect();
            let scale = 1.0 / batch.len() as f64;
            for &sample_idx in batch {
                let sample = &train_set[sample_idx];
                let tape = Tape::new();
                let mounted = TapeParams::mount(&tape, &params, m_config, true);
                let out = forward(&tape, &sample.pair, &sample.graph, &mounted, m_config)?;
                let loss = out.logit.bce_with_logits(&[sample.label as f64]);
                let loss_value = loss.scalar();
                if !loss_value.is_finite() {
                    return Err(Error::NonFiniteLoss {
                        epoch,
                        batch: batch_no,
                    });
                }
                loss_sum += loss_value;
                tape.backward(&loss)?;
                for (acc, tensor) in grad_acc.iter_mut().zip(mounted.tensors()) {
                    if let Some(grad) = tensor.grad() {
                        for (a, g) in acc.iter_mut().zip(grad) {
                            *a += scale * g;
                        }
                    }
                }
            }
            adam_step(&mut params, &grad_acc, &mut state, t_config)?;
        }

        let dev_metrics = evaluate(&params, m_config, dev_set)?;
        log.push(EpochLog {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            dev_accuracy: dev_metrics.accuracy,
            dev_f1: dev_metrics.f1,
        });
        let improved = match &best {
            None => true,
            Some((_, acc, _)) => dev_metrics.accuracy > *acc,
        };
        if improved {
            best = Some((epoch, dev_metrics.accuracy, params.clone()));
        }
    }

    let (best_epoch, best_dev_accuracy, best_params) = best.expect("at least one epoch ran");
    Ok(TrainResult {
        params: best_params,
        best_epoch,
        best_dev_accuracy,
        log,
    })
}

/// Write the epoch log as CSV: epoch, train_loss, dev_accuracy, dev_f1.
pub fn write_epoch_log(path: &Path, log: &[EpochLog]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "epoch,train_loss,dev_accuracy,dev_f1").map_err(|e| Error::io(path, e))?;
    for entry in log {
        writeln!(
            w,
            "{},{},{},{}",
            entry.epoch, entry.train_loss, entry.dev_accuracy, entry.dev_f1
        )
        .map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::{embed_pair, EmbeddingTable};
    use rand::Rng;

    #[test]
    fn adam_zero_gradient_leaves_params_unchanged() {
        let config = ModelConfig::new(4);
        let mut params = ModelParams::init(&config, 1);
        let before = params.clone();
        let zeros: Vec<Vec<f64>> = params.arrays().iter().map(|a| vec![0.0; a.len()]).collect();
        let mut state = AdamState::new(&params);
        adam_step(&mut params, &zeros, &mut state, &TrainConfig::default()).unwrap();
        assert_eq!(params, before);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn adam_first_step_magnitude_is_learning_rate() {
        // With bias correction, the first update is lr * g / (|g| + eps),
        // i.e. lr in the direction opposite the gradient sign.
        let config = ModelConfig::new(2);
        let mut params = ModelParams::init(&config, 2);
        let before = params.mlp_b2[0];
        let mut grads: Vec<Vec<f64>> = params.arrays().iter().map(|a| vec![0.0; a.len()]).collect();
        let b2_idx = grads.len() - 1;
        grads[b2_idx][0] = 0.37;
        let mut state = AdamState::new(&params);
        let t_config = TrainConfig::default();
        adam_step(&mut params, &grads, &mut state, &t_config).unwrap();
        let delta = params.mlp_b2[0] - before;
        assert!((delta + t_config.learning_rate).abs() < 1e-6, "delta {delta}");
    }

    #[test]
    fn adam_zero_learning_rate_freezes_params_but_advances_moments() {
        let config = ModelConfig::new(2);
        let mut params = ModelParams::init(&config, 3);
        let before = params.clone();
        let grads: Vec<Vec<f64>> = params.arrays().iter().map(|a| vec![1.0; a.len()]).collect();
        let mut state = AdamState::new(&params);
        let t_config = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        adam_step(&mut params, &grads, &mut state, &t_config).unwrap();
        assert_eq!(params, before);
        assert_eq!(state.step_count(), 1);
        assert!(state.m.iter().flatten().any(|&m| m != 0.0));
    }

    #[test]
    fn adam_rejects_shape_mismatch() {
        let config = ModelConfig::new(2);
        let mut params = ModelParams::init(&config, 4);
        let mut state = AdamState::new(&params);
        let bad = vec![vec![0.0; 3]];
        assert!(adam_step(&mut params, &bad, &mut state, &TrainConfig::default()).is_err());
    }

    #[test]
    fn adam_single_step_reduces_quadratic_loss() {
        // One step on 0.5*(p - a)^2 from |p - a| = 1 at lr 1e-3.
        let config = ModelConfig::new(2);
        let mut params = ModelParams::init(&config, 5);
        params.mlp_b2[0] = 1.0;
        let target = 0.0;
        let loss = |p: f64| 0.5 * (p - target) * (p - target);
        let before = loss(params.mlp_b2[0]);
        let mut grads: Vec<Vec<f64>> = params.arrays().iter().map(|a| vec![0.0; a.len()]).collect();
        let b2_idx = grads.len() - 1;
        grads[b2_idx][0] = params.mlp_b2[0] - target;
        let mut state = AdamState::new(&params);
        adam_step(&mut params, &grads, &mut state, &TrainConfig::default()).unwrap();
        assert!(loss(params.mlp_b2[0]) < before);
    }

    /// A small separable problem: positive queries share tokens whose
    /// embeddings align with the document keywords, negatives do not.
    fn toy_samples(n: usize, d_e: usize, config: &ModelConfig, seed: u64) -> Vec<TrainSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut table = EmbeddingTable::new(d_e);
        let words = ["engine", "piston", "valve", "orchid", "petal", "stem"];
        for w in words {
            let v: Vec<f64> = (0..d_e).map(|_| rng.random_range(-1.0..1.0)).collect();
            table.insert(w, v);
        }
        let doc = crate::textpipe::tokenize("engine piston valve engine piston valve");
        let keywords: Vec<String> = ["engine", "piston", "valve"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let graph = Arc::new(crate::keygraph::build_graph(&doc, &keywords, 20).unwrap());
        (0..n)
            .map(|i| {
                let label = (i % 2) as u8;
                let query: Vec<String> = if label == 1 {
                    vec!["engine".into(), "valve".into()]
                } else {
                    vec!["orchid".into(), "petal".into()]
                };
                let pair = embed_pair(&query, &graph, &table, config.max_query_len);
                TrainSample {
                    pair,
                    graph: Arc::clone(&graph),
                    label,
                }
            })
            .collect()
    }

    fn toy_config() -> ModelConfig {
        let mut config = ModelConfig::new(8);
        config.pool_size = 3;
        config.hidden_size = 16;
        config.max_query_len = 4;
        config
    }

    #[test]
    fn training_reduces_loss_on_separable_toy_set() {
        let config = toy_config();
        let samples = toy_samples(20, 8, &config, 7);
        let t_config = TrainConfig {
            epochs: 5,
            batch_size: 4,
            seed: 3,
            ..TrainConfig::default()
        };
        let params = ModelParams::init(&config, 11);
        let result = train(params, &samples, &samples, &t_config, &config).unwrap();
        assert_eq!(result.log.len(), 5);
        assert!(
            result.log.last().unwrap().train_loss < result.log[0].train_loss,
            "loss did not decrease: {:?}",
            result.log
        );
    }

    #[test]
    fn training_is_deterministic_for_fixed_seed() {
        let config = toy_config();
        let samples = toy_samples(12, 8, &config, 9);
        let t_config = TrainConfig {
            epochs: 2,
            batch_size: 4,
            seed: 5,
            ..TrainConfig::default()
        };
        let run = || {
            train(
                ModelParams::init(&config, 13),
                &samples,
                &samples,
                &t_config,
                &config,
            )
            .unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.params, b.params);
        assert_eq!(a.log, b.log);
        for (x, y) in a
            .params
            .arrays()
            .iter()
            .flat_map(|arr| arr.iter())
            .zip(b.params.arrays().iter().flat_map(|arr| arr.iter()))
        {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn training_rejects_empty_dev_set() {
        let config = toy_config();
        let samples = toy_samples(4, 8, &config, 1);
        let t_config = TrainConfig::default();
        let params = ModelParams::init(&config, 0);
        assert!(matches!(
            train(params, &samples, &[], &t_config, &config),
            Err(Error::EmptySplit)
        ));
    }

    #[test]
    fn epoch_log_roundtrips_as_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.csv");
        let log = vec![EpochLog {
            epoch: 1,
            train_loss: 0.693,
            dev_accuracy: 0.5,
            dev_f1: 0.6667,
        }];
        write_epoch_log(&path, &log).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("epoch,train_loss,dev_accuracy,dev_f1\n"));
        assert!(text.contains("1,0.693,0.5,0.6667"));
    }
}
