//! Training loop: seeded mini-batch shuffling, Adam updates, plateau
//! scheduling on validation loss, best-checkpoint tracking, and per-epoch
//! metrics. Deterministic given (seed, dataset, config).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphenc::{CircuitGraph, FeatureStats};
use crate::rng::RngStream;

use super::batch::GraphBatch;
use super::model::{backward, forward, save_checkpoint, ModelConfig, ModelParams};
use super::optim::{huber_grad, huber_loss, Adam, PlateauScheduler};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub huber_delta: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    pub min_lr: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-4,
            weight_decay: 1e-6,
            epochs: 300,
            batch_size: 1500,
            huber_delta: 1.0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            plateau_factor: 0.1,
            plateau_patience: 10,
            min_lr: 1e-7,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

pub struct TrainResult {
    /// Parameters at the epoch with the best validation loss.
    pub best_params: ModelParams,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub metrics: Vec<EpochMetrics>,
}

impl TrainResult {
    pub fn write_metrics_csv(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        use std::io::Write;
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "epoch,train_loss,val_loss,lr")?;
        for m in &self.metrics {
            writeln!(out, "{},{},{},{}", m.epoch, m.train_loss, m.val_loss, m.lr)?;
        }
        Ok(())
    }
}

fn gather<'a>(records: &'a [CircuitGraph], idx: &[usize]) -> Vec<&'a CircuitGraph> {
    idx.iter().map(|&i| &records[i]).collect()
}

fn eval_loss(params: &ModelParams, records: &[&CircuitGraph], delta: f64) -> Result<f64> {
    let batch = GraphBatch::assemble(records)?;
    let labels = batch.require_labels()?;
    let cache = forward(params, &batch);
    Ok(huber_loss(&cache.predictions, &labels, delta))
}

/// Train on normalized records. If `ckpt_path` is given, the checkpoint is
/// (re)written every time the validation loss improves.
#[allow(clippy::too_many_arguments)]
pub fn train(
    records: &[CircuitGraph],
    train_idx: &[usize],
    val_idx: &[usize],
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    stats: &FeatureStats,
    ckpt_path: Option<&std::path::Path>,
    mut progress: Option<&mut dyn FnMut(&EpochMetrics)>,
) -> Result<TrainResult> {
    if train_idx.is_empty() || val_idx.is_empty() {
        return Err(Error::validation("training and validation splits must be non-empty"));
    }
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(Error::validation("batch_size and epochs must be positive"));
    }
    let val_refs = gather(records, val_idx);

    let mut params = ModelParams::init(model_cfg, cfg.seed);
    let mut adam = Adam::new(&params, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay);
    let mut sched = PlateauScheduler::new(cfg.lr, cfg.plateau_factor, cfg.plateau_patience, cfg.min_lr);
    let shuffle_rng = RngStream::derive(cfg.seed, &[0x7281]);

    let mut order: Vec<usize> = train_idx.to_vec();
    let mut best_params = params.clone();
    let mut best_epoch = 0usize;
    let mut best_val = f64::INFINITY;
    let mut metrics = Vec::with_capacity(cfg.epochs);
    let mut lr = cfg.lr;

    for epoch in 1..=cfg.epochs {
        shuffle_rng.child(epoch as u64).clone().shuffle(&mut order);
        let mut train_loss_acc = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let refs = gather(records, chunk);
            let batch = GraphBatch::assemble(&refs)?;
            let labels = batch.require_labels()?;
            let cache = forward(&params, &batch);
            let loss = huber_loss(&cache.predictions, &labels, cfg.huber_delta);
            train_loss_acc += loss * chunk.len() as f64;
            let d_pred = huber_grad(&cache.predictions, &labels, cfg.huber_delta);
            let grads = backward(&params, &batch, &cache, &d_pred);
            adam.step(&mut params, &grads, lr);
        }
        let train_loss = train_loss_acc / order.len() as f64;
        let val_loss = eval_loss(&params, &val_refs, cfg.huber_delta)?;
        if !train_loss.is_finite() || !val_loss.is_finite() {
            params.assert_finite()?;
            return Err(Error::validation(format!(
                "non-finite loss at epoch {epoch} (train {train_loss}, val {val_loss})"
            )));
        }
        if val_loss < best_val {
            best_val = val_loss;
            best_epoch = epoch;
            best_params = params.clone();
            if let Some(path) = ckpt_path {
                save_checkpoint(path, &best_params, cfg, stats, best_epoch, best_val)?;
            }
        }
        let row = EpochMetrics { epoch, train_loss, val_loss, lr };
        if let Some(cb) = progress.as_mut() {
            cb(&row);
        }
        metrics.push(row);
        lr = sched.observe(val_loss);
    }
    Ok(TrainResult { best_params, best_epoch, best_val_loss: best_val, metrics })
}

/// Predictions for a set of (normalized) records.
pub fn predict(params: &ModelParams, records: &[&CircuitGraph]) -> Result<Vec<f64>> {
    let batch = GraphBatch::assemble(records)?;
    Ok(forward(params, &batch).predictions)
}

/// Root mean squared error between predictions and labels.
pub fn rmse(pred: &[f64], labels: &[f64]) -> f64 {
    assert_eq!(pred.len(), labels.len());
    let ms = pred
        .iter()
        .zip(labels.iter())
        .map(|(&p, &l)| (p - l) * (p - l))
        .sum::<f64>()
        / pred.len() as f64;
    ms.sqrt()
}
