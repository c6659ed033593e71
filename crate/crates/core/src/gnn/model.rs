//! Model definition: three attention message-passing layers with learned
//! skip connections, global mean pooling, a three-layer MLP over global
//! circuit features, and a three-layer fused regressor. Forward caches
//! every intermediate needed for the exact reverse-mode backward pass.

use std::collections::BTreeMap;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphenc::FeatureStats;
use crate::rng::RngStream;

use super::batch::GraphBatch;
use super::train::TrainConfig;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub node_dim: usize,
    pub heads: usize,
    pub head_dim: usize,
    pub global_dim: usize,
    pub global_hidden: usize,
    pub reg_hidden1: usize,
    pub reg_hidden2: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            node_dim: crate::graphenc::NODE_FEATURE_LEN,
            heads: 4,
            head_dim: 16,
            global_dim: crate::graphenc::GLOBAL_FEATURE_LEN,
            global_hidden: 64,
            reg_hidden1: 64,
            reg_hidden2: 32,
        }
    }
}

impl ModelConfig {
    pub fn hidden(&self) -> usize {
        self.heads * self.head_dim
    }

    /// Tensor names and shapes in their fixed registry order.
    pub fn tensor_specs(&self) -> Vec<(String, (usize, usize))> {
        let h = self.hidden();
        let mut specs = Vec::new();
        for layer in 1..=3 {
            let d_in = if layer == 1 { self.node_dim } else { h };
            for role in ["query", "key", "value", "skip"] {
                specs.push((format!("conv{layer}.{role}.weight"), (h, d_in)));
                specs.push((format!("conv{layer}.{role}.bias"), (1, h)));
            }
        }
        let dims = [
            (self.global_hidden, self.global_dim),
            (self.global_hidden, self.global_hidden),
            (self.global_hidden, self.global_hidden),
        ];
        for (i, &(out, inp)) in dims.iter().enumerate() {
            specs.push((format!("global.fc{}.weight", i + 1), (out, inp)));
            specs.push((format!("global.fc{}.bias", i + 1), (1, out)));
        }
        let fused = h + self.global_hidden;
        let reg = [
            (self.reg_hidden1, fused),
            (self.reg_hidden2, self.reg_hidden1),
            (1, self.reg_hidden2),
        ];
        for (i, &(out, inp)) in reg.iter().enumerate() {
            specs.push((format!("reg.fc{}.weight", i + 1), (out, inp)));
            specs.push((format!("reg.fc{}.bias", i + 1), (1, out)));
        }
        specs
    }
}

/// All parameter tensors in registry order (biases as 1-row matrices).
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub tensors: Vec<Array2<f64>>,
}

/// Gradients aligned with `ModelParams::tensors`.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub tensors: Vec<Array2<f64>>,
}

impl ModelParams {
    /// Glorot-uniform weights, zero biases, seeded.
    pub fn init(config: &ModelConfig, seed: u64) -> Self {
        let mut rng = RngStream::derive(seed, &[0x1A17]);
        let specs = config.tensor_specs();
        let tensors = specs
            .iter()
            .map(|(name, shape)| (name, shape))
            .map(|(name, &(rows, cols))| {
                if name.ends_with(".bias") {
                    Array2::zeros((rows, cols))
                } else {
                    let limit = (6.0 / (rows + cols) as f64).sqrt();
                    Array2::from_shape_fn((rows, cols), |_| rng.uniform(-limit, limit))
                }
            })
            .collect();
        ModelParams { config: config.clone(), tensors }
    }

    pub fn zeros_like(&self) -> Gradients {
        Gradients {
            tensors: self.tensors.iter().map(|t| Array2::zeros(t.raw_dim())).collect(),
        }
    }

    fn idx(&self, name: &str) -> usize {
        self.config
            .tensor_specs()
            .iter()
            .position(|(n, _)| n == name)
            .unwrap_or_else(|| panic!("unknown tensor {name}"))
    }

    pub fn total_parameters(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    pub fn assert_finite(&self) -> Result<()> {
        for (spec, t) in self.config.tensor_specs().iter().zip(self.tensors.iter()) {
            if t.iter().any(|v| !v.is_finite()) {
                return Err(Error::validation(format!("non-finite values in {}", spec.0)));
            }
        }
        Ok(())
    }
}

/// Offsets of the 8 tensors of one conv layer within the registry.
fn conv_base(layer: usize) -> usize {
    (layer - 1) * 8
}
const GLOBAL_BASE: usize = 24;
const REG_BASE: usize = 30;

struct ConvCache {
    /// Layer input.
    x: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    /// Attention weights per node, laid out [h * n_neighbors + j].
    alpha: Vec<Vec<f64>>,
    /// Pre-activation output (attention + skip).
    out: Array2<f64>,
}

pub struct ForwardCache {
    convs: Vec<ConvCache>,
    z1: Array2<f64>,
    z2: Array2<f64>,
    fused: Array2<f64>,
    r1: Array2<f64>,
    r2: Array2<f64>,
    pub predictions: Vec<f64>,
}

fn affine(x: &Array2<f64>, w: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    x.dot(&w.t()) + b
}

fn relu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v.max(0.0))
}

fn relu_backward(grad: &Array2<f64>, pre: &Array2<f64>) -> Array2<f64> {
    let mut out = grad.clone();
    out.zip_mut_with(pre, |g, &p| {
        if p <= 0.0 {
            *g = 0.0;
        }
    });
    out
}

fn conv_forward(params: &ModelParams, layer: usize, x: &Array2<f64>, batch: &GraphBatch) -> ConvCache {
    let cfg = &params.config;
    let base = conv_base(layer);
    let t = &params.tensors;
    let q = affine(x, &t[base], &t[base + 1]);
    let k = affine(x, &t[base + 2], &t[base + 3]);
    let v = affine(x, &t[base + 4], &t[base + 5]);
    let skip = affine(x, &t[base + 6], &t[base + 7]);

    let (heads, dh) = (cfg.heads, cfg.head_dim);
    let scale = 1.0 / (dh as f64).sqrt();
    let n = batch.n_nodes();
    let mut out = skip;
    let mut alpha: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut logits: Vec<f64> = Vec::new();
    for i in 0..n {
        let nb = &batch.in_neighbors[i];
        let mut a = vec![0.0; heads * nb.len()];
        for h in 0..heads {
            let lo = h * dh;
            logits.clear();
            let mut max_logit = f64::NEG_INFINITY;
            for &j in nb {
                let mut dot = 0.0;
                for d in 0..dh {
                    dot += q[(i, lo + d)] * k[(j, lo + d)];
                }
                let l = dot * scale;
                max_logit = max_logit.max(l);
                logits.push(l);
            }
            let mut denom = 0.0;
            for l in logits.iter_mut() {
                *l = (*l - max_logit).exp();
                denom += *l;
            }
            for (jj, &j) in nb.iter().enumerate() {
                let w = logits[jj] / denom;
                a[h * nb.len() + jj] = w;
                for d in 0..dh {
                    out[(i, lo + d)] += w * v[(j, lo + d)];
                }
            }
        }
        alpha.push(a);
    }
    ConvCache { x: x.clone(), q, k, v, alpha, out }
}

/// Backward through one conv layer; accumulates parameter gradients and
/// returns the gradient with respect to the layer input.
fn conv_backward(
    params: &ModelParams,
    layer: usize,
    cache: &ConvCache,
    batch: &GraphBatch,
    d_out: &Array2<f64>,
    grads: &mut Gradients,
) -> Array2<f64> {
    let cfg = &params.config;
    let base = conv_base(layer);
    let t = &params.tensors;
    let (heads, dh) = (cfg.heads, cfg.head_dim);
    let scale = 1.0 / (dh as f64).sqrt();
    let n = batch.n_nodes();

    let mut d_q: Array2<f64> = Array2::zeros(cache.q.raw_dim());
    let mut d_k: Array2<f64> = Array2::zeros(cache.k.raw_dim());
    let mut d_v: Array2<f64> = Array2::zeros(cache.v.raw_dim());

    for i in 0..n {
        let nb = &batch.in_neighbors[i];
        let a = &cache.alpha[i];
        for h in 0..heads {
            let lo = h * dh;
            // d_alpha and the softmax Jacobian.
            let mut d_alpha = vec![0.0; nb.len()];
            let mut inner = 0.0;
            for (jj, &j) in nb.iter().enumerate() {
                let mut g = 0.0;
                for d in 0..dh {
                    g += d_out[(i, lo + d)] * cache.v[(j, lo + d)];
                }
                d_alpha[jj] = g;
                inner += a[h * nb.len() + jj] * g;
            }
            for (jj, &j) in nb.iter().enumerate() {
                let w = a[h * nb.len() + jj];
                // dV via the attention path.
                for d in 0..dh {
                    d_v[(j, lo + d)] += w * d_out[(i, lo + d)];
                }
                let d_logit = w * (d_alpha[jj] - inner) * scale;
                for d in 0..dh {
                    d_q[(i, lo + d)] += d_logit * cache.k[(j, lo + d)];
                    d_k[(j, lo + d)] += d_logit * cache.q[(i, lo + d)];
                }
            }
        }
    }

    // Skip path sees d_out directly.
    let mut d_x = d_out.dot(&t[base + 6]);
    grads.tensors[base + 6] += &d_out.t().dot(&cache.x);
    grads.tensors[base + 7] += &d_out.sum_axis(Axis(0)).insert_axis(Axis(0));

    for (offset, d_lin) in [(0, &d_q), (2, &d_k), (4, &d_v)] {
        d_x += &d_lin.dot(&t[base + offset]);
        grads.tensors[base + offset] += &d_lin.t().dot(&cache.x);
        grads.tensors[base + offset + 1] += &d_lin.sum_axis(Axis(0)).insert_axis(Axis(0));
    }
    d_x
}

fn mean_pool(h: &Array2<f64>, batch: &GraphBatch) -> Array2<f64> {
    let mut out = Array2::zeros((batch.n_graphs(), h.ncols()));
    for (g, &(start, end)) in batch.node_ranges.iter().enumerate() {
        let inv = 1.0 / (end - start) as f64;
        for i in start..end {
            for c in 0..h.ncols() {
                out[(g, c)] += h[(i, c)] * inv;
            }
        }
    }
    out
}

fn mean_pool_backward(d_pool: &Array2<f64>, batch: &GraphBatch, n_nodes: usize) -> Array2<f64> {
    let mut out = Array2::zeros((n_nodes, d_pool.ncols()));
    for (g, &(start, end)) in batch.node_ranges.iter().enumerate() {
        let inv = 1.0 / (end - start) as f64;
        for i in start..end {
            for c in 0..d_pool.ncols() {
                out[(i, c)] = d_pool[(g, c)] * inv;
            }
        }
    }
    out
}

/// Full forward pass; returns one prediction per graph plus the cache for
/// the backward pass.
pub fn forward(params: &ModelParams, batch: &GraphBatch) -> ForwardCache {
    let t = &params.tensors;
    let mut convs = Vec::with_capacity(3);
    let mut x = batch.x.clone();
    for layer in 1..=3 {
        let cache = conv_forward(params, layer, &x, batch);
        x = if layer < 3 { relu(&cache.out) } else { cache.out.clone() };
        convs.push(cache);
    }
    let pooled = mean_pool(&x, batch);

    let z1 = affine(&batch.globals, &t[GLOBAL_BASE], &t[GLOBAL_BASE + 1]);
    let a1 = relu(&z1);
    let z2 = affine(&a1, &t[GLOBAL_BASE + 2], &t[GLOBAL_BASE + 3]);
    let a2 = relu(&z2);
    let z3 = affine(&a2, &t[GLOBAL_BASE + 4], &t[GLOBAL_BASE + 5]);

    let g = batch.n_graphs();
    let fused_dim = params.config.hidden() + params.config.global_hidden;
    let mut fused = Array2::zeros((g, fused_dim));
    for gi in 0..g {
        for c in 0..params.config.hidden() {
            fused[(gi, c)] = pooled[(gi, c)];
        }
        for c in 0..params.config.global_hidden {
            fused[(gi, params.config.hidden() + c)] = z3[(gi, c)];
        }
    }

    let r1 = affine(&fused, &t[REG_BASE], &t[REG_BASE + 1]);
    let a_r1 = relu(&r1);
    let r2 = affine(&a_r1, &t[REG_BASE + 2], &t[REG_BASE + 3]);
    let a_r2 = relu(&r2);
    let y = affine(&a_r2, &t[REG_BASE + 4], &t[REG_BASE + 5]);
    let predictions = y.column(0).to_vec();

    ForwardCache { convs, z1, z2, fused, r1, r2, predictions }
}

/// Exact reverse-mode gradients of a scalar loss with upstream gradient
/// `d_pred` (one entry per graph) with respect to every parameter tensor.
pub fn backward(
    params: &ModelParams,
    batch: &GraphBatch,
    cache: &ForwardCache,
    d_pred: &[f64],
) -> Gradients {
    let t = &params.tensors;
    let cfg = &params.config;
    let mut grads = params.zeros_like();
    let g = batch.n_graphs();

    let d_y = Array2::from_shape_fn((g, 1), |(i, _)| d_pred[i]);

    // Regressor head.
    let a_r2 = relu(&cache.r2);
    grads.tensors[REG_BASE + 4] += &d_y.t().dot(&a_r2);
    grads.tensors[REG_BASE + 5] += &d_y.sum_axis(Axis(0)).insert_axis(Axis(0));
    let d_a_r2 = d_y.dot(&t[REG_BASE + 4]);
    let d_r2 = relu_backward(&d_a_r2, &cache.r2);

    let a_r1 = relu(&cache.r1);
    grads.tensors[REG_BASE + 2] += &d_r2.t().dot(&a_r1);
    grads.tensors[REG_BASE + 3] += &d_r2.sum_axis(Axis(0)).insert_axis(Axis(0));
    let d_a_r1 = d_r2.dot(&t[REG_BASE + 2]);
    let d_r1 = relu_backward(&d_a_r1, &cache.r1);

    grads.tensors[REG_BASE] += &d_r1.t().dot(&cache.fused);
    grads.tensors[REG_BASE + 1] += &d_r1.sum_axis(Axis(0)).insert_axis(Axis(0));
    let d_fused = d_r1.dot(&t[REG_BASE]);

    // Split the fused gradient.
    let hidden = cfg.hidden();
    let mut d_pool = Array2::zeros((g, hidden));
    let mut d_z3 = Array2::zeros((g, cfg.global_hidden));
    for gi in 0..g {
        for c in 0..hidden {
            d_pool[(gi, c)] = d_fused[(gi, c)];
        }
        for c in 0..cfg.global_hidden {
            d_z3[(gi, c)] = d_fused[(gi, hidden + c)];
        }
    }

    // Global MLP.
    let a2 = relu(&cache.z2);
    grads.tensors[GLOBAL_BASE + 4] += &d_z3.t().dot(&a2);
    grads.tensors[GLOBAL_BASE + 5] += &d_z3.sum_axis(Axis(0)).insert_axis(Axis(0));
    let d_a2 = d_z3.dot(&t[GLOBAL_BASE + 4]);
    let d_z2 = relu_backward(&d_a2, &cache.z2);

    let a1 = relu(&cache.z1);
    grads.tensors[GLOBAL_BASE + 2] += &d_z2.t().dot(&a1);
    grads.tensors[GLOBAL_BASE + 3] += &d_z2.sum_axis(Axis(0)).insert_axis(Axis(0));
    let d_a1 = d_z2.dot(&t[GLOBAL_BASE + 2]);
    let d_z1 = relu_backward(&d_a1, &cache.z1);

    grads.tensors[GLOBAL_BASE] += &d_z1.t().dot(&batch.globals);
    grads.tensors[GLOBAL_BASE + 1] += &d_z1.sum_axis(Axis(0)).insert_axis(Axis(0));

    // Node path: pool -> conv3 -> relu -> conv2 -> relu -> conv1.
    let mut d_h = mean_pool_backward(&d_pool, batch, batch.n_nodes());
    for layer in (1..=3).rev() {
        let cache_l = &cache.convs[layer - 1];
        if layer < 3 {
            d_h = relu_backward(&d_h, &cache_l.out);
        }
        d_h = conv_backward(params, layer, cache_l, batch, &d_h, &mut grads);
    }
    grads
}

/// Mean Huber loss of a forward pass against labels, with its gradient
/// helper used by training and the finite-difference tests.
pub fn batch_loss(params: &ModelParams, batch: &GraphBatch, delta: f64) -> Result<f64> {
    let labels = batch.require_labels()?;
    let cache = forward(params, batch);
    Ok(super::optim::huber_loss(&cache.predictions, &labels, delta))
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorBlob {
    shape: [usize; 2],
    data: Vec<f64>,
}

/// Everything needed to reproduce predictions: model config, training
/// config, normalization statistics, and all weights.
#[derive(Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub stats: FeatureStats,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    tensors: BTreeMap<String, TensorBlob>,
}

pub fn save_checkpoint(
    path: impl AsRef<std::path::Path>,
    params: &ModelParams,
    train: &TrainConfig,
    stats: &FeatureStats,
    best_epoch: usize,
    best_val_loss: f64,
) -> Result<()> {
    let mut tensors = BTreeMap::new();
    for ((name, _), t) in params.config.tensor_specs().iter().zip(params.tensors.iter()) {
        tensors.insert(
            name.clone(),
            TensorBlob {
                shape: [t.nrows(), t.ncols()],
                data: t.iter().copied().collect(),
            },
        );
    }
    let ckpt = Checkpoint {
        version: CHECKPOINT_VERSION,
        model: params.config.clone(),
        train: train.clone(),
        stats: stats.clone(),
        best_epoch,
        best_val_loss,
        tensors,
    };
    std::fs::write(path, serde_json::to_string(&ckpt)?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<std::path::Path>) -> Result<(ModelParams, Checkpoint)> {
    let text = std::fs::read_to_string(path)?;
    let ckpt: Checkpoint = serde_json::from_str(&text)
        .map_err(|e| Error::Checkpoint(format!("malformed checkpoint: {e}")))?;
    if ckpt.version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "checkpoint version {} unsupported (expected {CHECKPOINT_VERSION})",
            ckpt.version
        )));
    }
    let mut tensors = Vec::new();
    for (name, (rows, cols)) in ckpt.model.tensor_specs() {
        let blob = ckpt
            .tensors
            .get(&name)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
        if blob.shape != [rows, cols] || blob.data.len() != rows * cols {
            return Err(Error::Checkpoint(format!(
                "tensor {name} has shape {:?}, expected [{rows}, {cols}]",
                blob.shape
            )));
        }
        let arr = Array2::from_shape_vec((rows, cols), blob.data.clone())
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        tensors.push(arr);
    }
    let params = ModelParams { config: ckpt.model.clone(), tensors };
    Ok((params, ckpt))
}

#[allow(dead_code)]
fn tensor_index_for_tests(params: &ModelParams, name: &str) -> usize {
    params.idx(name)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::graphenc::CircuitGraph;

    /// Tiny random graph with the given feature widths.
    pub(crate) fn random_graph(
        cfg: &ModelConfig,
        n_nodes: usize,
        seed: u64,
        label: Option<f64>,
    ) -> CircuitGraph {
        let mut rng = RngStream::derive(seed, &[0xBA7C]);
        let nodes: Vec<Vec<f64>> = (0..n_nodes)
            .map(|_| (0..cfg.node_dim).map(|_| rng.uniform(-1.0, 1.0)).collect())
            .collect();
        let mut edges = Vec::new();
        for t in 1..n_nodes {
            // Wire-like chain plus one extra random back edge.
            edges.push([t - 1, t]);
            if rng.next_f64() < 0.4 {
                edges.push([rng.below(t), t]);
            }
        }
        CircuitGraph {
            id: format!("g{seed}"),
            backend: "test".into(),
            n_qubits: 1,
            nodes,
            edges,
            global: (0..cfg.global_dim).map(|_| rng.uniform(-1.0, 1.0)).collect(),
            expr: label,
            meta: serde_json::Value::Null,
        }
    }

    pub(crate) fn tiny_config() -> ModelConfig {
        ModelConfig {
            node_dim: 5,
            heads: 2,
            head_dim: 4,
            global_dim: 3,
            global_hidden: 6,
            reg_hidden1: 7,
            reg_hidden2: 4,
        }
    }

    #[test]
    fn registry_has_36_tensors_with_expected_shapes() {
        let cfg = ModelConfig::default();
        let specs = cfg.tensor_specs();
        assert_eq!(specs.len(), 36);
        let params = ModelParams::init(&cfg, 0);
        assert_eq!(params.tensors.len(), 36);
        let by_name: BTreeMap<_, _> = specs.iter().cloned().collect();
        assert_eq!(by_name["conv1.query.weight"], (64, 23));
        assert_eq!(by_name["conv2.key.weight"], (64, 64));
        assert_eq!(by_name["global.fc1.weight"], (64, 7));
        assert_eq!(by_name["reg.fc1.weight"], (64, 128));
        assert_eq!(by_name["reg.fc3.weight"], (1, 32));
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let cfg = tiny_config();
        let params = ModelParams::init(&cfg, 3);
        let g = random_graph(&cfg, 7, 1, None);
        let batch = GraphBatch::assemble(&[&g]).unwrap();
        let cache = forward(&params, &batch);
        for (i, a) in cache.convs[0].alpha.iter().enumerate() {
            let nb = batch.in_neighbors[i].len();
            for h in 0..cfg.heads {
                let sum: f64 = a[h * nb..(h + 1) * nb].iter().sum();
                assert!((sum - 1.0).abs() < 1e-12, "node {i} head {h}: {sum}");
            }
        }
    }

    #[test]
    fn isolated_node_with_zero_value_weights_outputs_skip_only() {
        let cfg = tiny_config();
        let mut params = ModelParams::init(&cfg, 5);
        // Zero the value and bias tensors of conv1 so attention contributes
        // nothing; a single node then outputs its skip projection.
        for name in ["conv1.value.weight", "conv1.value.bias"] {
            let i = tensor_index_for_tests(&params, name);
            params.tensors[i].fill(0.0);
        }
        let g = random_graph(&cfg, 1, 2, None);
        let batch = GraphBatch::assemble(&[&g]).unwrap();
        let cache = forward(&params, &batch);
        let ws = &params.tensors[conv_base(1) + 6];
        let bs = &params.tensors[conv_base(1) + 7];
        let want = batch.x.dot(&ws.t()) + bs;
        let got = &cache.convs[0].out;
        for c in 0..cfg.hidden() {
            assert!((got[(0, c)] - want[(0, c)]).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_graphs_in_a_batch_predict_identically() {
        let cfg = tiny_config();
        let params = ModelParams::init(&cfg, 7);
        let g = random_graph(&cfg, 9, 4, None);
        let batch = GraphBatch::assemble(&[&g, &g, &g]).unwrap();
        let cache = forward(&params, &batch);
        assert_eq!(cache.predictions[0], cache.predictions[1]);
        assert_eq!(cache.predictions[0], cache.predictions[2]);
        assert!(cache.predictions[0].is_finite());
    }

    #[test]
    fn prediction_is_invariant_under_node_relabeling() {
        let cfg = tiny_config();
        let params = ModelParams::init(&cfg, 11);
        for seed in 0..6 {
            let g = random_graph(&cfg, 8, 40 + seed, None);
            // Relabel nodes with a random permutation.
            let mut perm: Vec<usize> = (0..g.nodes.len()).collect();
            RngStream::derive(seed, &[9]).shuffle(&mut perm);
            let mut relabeled = g.clone();
            relabeled.nodes = vec![vec![]; g.nodes.len()];
            for (old, &new) in perm.iter().enumerate() {
                relabeled.nodes[new] = g.nodes[old].clone();
            }
            relabeled.edges = g.edges.iter().map(|e| [perm[e[0]], perm[e[1]]]).collect();
            let a = forward(&params, &GraphBatch::assemble(&[&g]).unwrap()).predictions[0];
            let b = forward(&params, &GraphBatch::assemble(&[&relabeled]).unwrap()).predictions[0];
            assert!((a - b).abs() < 1e-9, "seed {seed}: {a} vs {b}");
        }
    }

    #[test]
    fn conv_outputs_are_equivariant_multisets() {
        let cfg = tiny_config();
        let params = ModelParams::init(&cfg, 13);
        let g = random_graph(&cfg, 6, 77, None);
        let mut perm: Vec<usize> = (0..6).collect();
        RngStream::new(3).shuffle(&mut perm);
        let mut relabeled = g.clone();
        relabeled.nodes = vec![vec![]; 6];
        for (old, &new) in perm.iter().enumerate() {
            relabeled.nodes[new] = g.nodes[old].clone();
        }
        relabeled.edges = g.edges.iter().map(|e| [perm[e[0]], perm[e[1]]]).collect();
        let ca = forward(&params, &GraphBatch::assemble(&[&g]).unwrap());
        let cb = forward(&params, &GraphBatch::assemble(&[&relabeled]).unwrap());
        let h_a = relu(&ca.convs[0].out);
        let h_b = relu(&cb.convs[0].out);
        for old in 0..6 {
            for c in 0..cfg.hidden() {
                let d = (h_a[(old, c)] - h_b[(perm[old], c)]).abs();
                assert!(d < 1e-9, "node {old} col {c}: {d}");
            }
        }
    }

    #[test]
    fn mean_pool_of_identical_rows_is_that_row() {
        let cfg = tiny_config();
        let mut g = random_graph(&cfg, 3, 8, None);
        let row = g.nodes[0].clone();
        for node in &mut g.nodes {
            *node = row.clone();
        }
        let batch = GraphBatch::assemble(&[&g]).unwrap();
        let pooled = mean_pool(&batch.x, &batch);
        for (c, &v) in row.iter().enumerate() {
            assert!((pooled[(0, c)] - v).abs() < 1e-12);
        }
    }

    #[test]
    fn mean_pool_averages_two_nodes() {
        let x = ndarray::arr2(&[[0.0, 2.0], [2.0, 0.0]]);
        let batch = GraphBatch {
            x: x.clone(),
            globals: Array2::zeros((1, 1)),
            in_neighbors: vec![vec![0], vec![1]],
            graph_of: vec![0, 0],
            node_ranges: vec![(0, 2)],
            labels: vec![None],
        };
        let pooled = mean_pool(&x, &batch);
        assert_eq!(pooled[(0, 0)], 1.0);
        assert_eq!(pooled[(0, 1)], 1.0);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let cfg = tiny_config();
        let delta = 1.0;
        let mut worst: f64 = 0.0;
        for seed in 0..4 {
            let mut params = ModelParams::init(&cfg, 100 + seed);
            // Positive biases keep most ReLU units alive at the probe point.
            for ((name, _), t) in cfg.tensor_specs().iter().zip(params.tensors.iter_mut()) {
                if name.ends_with(".bias") {
                    t.fill(0.05);
                }
            }
            let graphs: Vec<CircuitGraph> = (0..3)
                .map(|i| random_graph(&cfg, 4 + i, 200 + seed * 10 + i as u64, Some(0.3 * i as f64)))
                .collect();
            let refs: Vec<&CircuitGraph> = graphs.iter().collect();
            let batch = GraphBatch::assemble(&refs).unwrap();
            let labels = batch.require_labels().unwrap();

            let cache = forward(&params, &batch);
            let d_pred = super::super::optim::huber_grad(&cache.predictions, &labels, delta);
            let grads = backward(&params, &batch, &cache, &d_pred);

            let h = 1e-5;
            for ti in 0..params.tensors.len() {
                for idx in 0..params.tensors[ti].len() {
                    let flat = params.tensors[ti].as_slice_mut().unwrap();
                    let orig = flat[idx];
                    flat[idx] = orig + h;
                    let up = batch_loss(&params, &batch, delta).unwrap();
                    params.tensors[ti].as_slice_mut().unwrap()[idx] = orig - h;
                    let down = batch_loss(&params, &batch, delta).unwrap();
                    params.tensors[ti].as_slice_mut().unwrap()[idx] = orig;
                    let fd = (up - down) / (2.0 * h);
                    let an = grads.tensors[ti].as_slice().unwrap()[idx];
                    let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-4);
                    worst = worst.max(rel);
                }
            }
        }
        assert!(worst < 1e-4, "max relative gradient error {worst}");
    }

    #[test]
    fn checkpoint_round_trips_bit_identically() {
        let cfg = tiny_config();
        let params = ModelParams::init(&cfg, 21);
        let stats = FeatureStats {
            node_mean: vec![0.1; cfg.node_dim],
            node_std: vec![1.1; cfg.node_dim],
            global_mean: vec![0.2; cfg.global_dim],
            global_std: vec![2.0; cfg.global_dim],
        };
        let train = TrainConfig::default();
        let path = std::env::temp_dir().join(format!("qexpr_ckpt_{}.json", std::process::id()));
        save_checkpoint(&path, &params, &train, &stats, 3, 0.125).unwrap();
        let (loaded, ckpt) = load_checkpoint(&path).unwrap();
        std::fs::remove_file(&path).ok();
        assert_eq!(params, loaded);
        assert_eq!(ckpt.best_epoch, 3);
        assert_eq!(ckpt.stats, stats);

        let g = random_graph(&cfg, 6, 9, None);
        let batch = GraphBatch::assemble(&[&g]).unwrap();
        let before = forward(&params, &batch).predictions[0];
        let after = forward(&loaded, &batch).predictions[0];
        assert_eq!(before.to_bits(), after.to_bits());
    }

    #[test]
    fn checkpoint_shape_mismatch_is_rejected() {
        let cfg = tiny_config();
        let params = ModelParams::init(&cfg, 2);
        let stats = FeatureStats {
            node_mean: vec![0.0; cfg.node_dim],
            node_std: vec![1.0; cfg.node_dim],
            global_mean: vec![0.0; cfg.global_dim],
            global_std: vec![1.0; cfg.global_dim],
        };
        let path = std::env::temp_dir().join(format!("qexpr_ckpt_bad_{}.json", std::process::id()));
        save_checkpoint(&path, &params, &TrainConfig::default(), &stats, 0, 1.0).unwrap();
        // Claim a different hidden size: shapes no longer match the blobs.
        let mut text = std::fs::read_to_string(&path).unwrap();
        text = text.replace("\"head_dim\":4", "\"head_dim\":8");
        std::fs::write(&path, text).unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        std::fs::remove_file(&path).ok();
        assert!(matches!(err, Error::Checkpoint(_)));
    }
}
