use std::collections::HashSet;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adamw::{AdamW, AdamWConfig};
use crate::data::EegDataset;
use crate::error::{invalid, Result};
use crate::metrics::argmax;
use crate::model::{forward, ModelParams};
use crate::rng::{SeedStreams, Stream, DEFAULT_SEED};
use crate::tensor::{retain_heap, Mode, Tape};

/// Samples per forward pass during evaluation. Eval-mode results do not
/// depend on it.
const EVAL_CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub shuffle: bool,
    pub optimizer: AdamWConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 200, batch_size: 32, seed: DEFAULT_SEED, shuffle: true, optimizer: AdamWConfig::default() }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(invalid("epochs and batch size must be >= 1"));
        }
        let o = &self.optimizer;
        if !(o.lr >= 0.0 && o.lr.is_finite() && o.weight_decay >= 0.0 && o.eps > 0.0) {
            return Err(invalid("learning rate and weight decay must be >= 0, eps > 0"));
        }
        if !((0.0..1.0).contains(&o.beta1) && (0.0..1.0).contains(&o.beta2)) {
            return Err(invalid("betas must lie in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
    /// Wall-clock time, kept out of the serialized log so logs stay
    /// reproducible.
    #[serde(skip)]
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept.
    pub selected_epoch: usize,
}

impl TrainLog {
    pub fn best_val_acc(&self) -> f64 {
        self.epochs[self.selected_epoch - 1].val_acc
    }

    /// One JSON object per epoch, newline-terminated.
    pub fn to_jsonl(&self) -> String {
        self.epochs.iter().map(|e| serde_json::to_string(e).expect("record serializes") + "\n").collect()
    }
}

/// Eval-mode predictions for some samples of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub predictions: Vec<usize>,
    pub labels: Vec<usize>,
    pub mean_loss: f64,
}

impl Evaluation {
    pub fn accuracy(&self) -> f64 {
        let hits = self.predictions.iter().zip(&self.labels).filter(|(p, y)| p == y).count();
        hits as f64 / self.labels.len() as f64
    }
}

/// Predict `indices` of `data` in eval mode; ties between logits go to the
/// lower class.
pub fn evaluate(params: &ModelParams<f32>, data: &EegDataset, indices: &[usize]) -> Result<Evaluation> {
    retain_heap();
    let mut predictions = Vec::with_capacity(indices.len());
    let mut labels = Vec::with_capacity(indices.len());
    let mut loss_sum = 0.0;
    let mut unused = SeedStreams::new(0).rng(Stream::Dropout, 0);
    for chunk in indices.chunks(EVAL_CHUNK) {
        let (x, y) = data.batch(chunk);
        let mut tape = Tape::new();
        let xv = tape.constant(x);
        let out = forward(&mut tape, params, xv, Mode::Eval, &mut unused, false)?;
        let loss = tape.cross_entropy_loss(out.logits, &y)?;
        loss_sum += tape.value(loss).data()[0] as f64 * chunk.len() as f64;
        let n = params.config().n_classes;
        for row in tape.value(out.logits).data().chunks(n) {
            let row: Vec<f64> = row.iter().map(|&v| v as f64).collect();
            predictions.push(argmax(&row));
        }
        labels.extend(y);
    }
    let mean_loss = if indices.is_empty() { 0.0 } else { loss_sum / indices.len() as f64 };
    Ok(Evaluation { predictions, labels, mean_loss })
}

/// Cut a shuffled index list into batches. A trailing batch of one sample is
/// folded into the previous batch because train-mode batch norm needs two.
fn batches(order: &[usize], size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(size).collect();
    if out.len() >= 2 && out.last().map(|b| b.len()) == Some(1) {
        out.pop();
        let start = order.len() - size - 1;
        *out.last_mut().unwrap() = &order[start..];
    }
    out
}

/// Train `params` on `train_idx`, select the epoch with the best validation
/// accuracy (earliest on ties) and return its parameters.
pub fn train(
    params: ModelParams<f32>,
    data: &EegDataset,
    train_idx: &[usize],
    val_idx: &[usize],
    run: &TrainConfig,
) -> Result<(ModelParams<f32>, TrainLog)> {
    run.validate()?;
    retain_heap();
    if train_idx.is_empty() || val_idx.is_empty() {
        return Err(invalid("training and validation splits must be non-empty"));
    }
    let train_set: HashSet<usize> = train_idx.iter().copied().collect();
    if val_idx.iter().any(|i| train_set.contains(i)) {
        return Err(invalid("training and validation splits overlap"));
    }
    let config = params.config();
    if (config.n_channels, config.n_timesteps, config.n_classes) != (data.n_channels, data.n_timesteps, data.n_classes)
    {
        return Err(invalid(format!(
            "model expects {}x{} inputs with {} classes, dataset has {}x{} with {}",
            config.n_channels, config.n_timesteps, config.n_classes, data.n_channels, data.n_timesteps, data.n_classes
        )));
    }

    let streams = SeedStreams::new(run.seed);
    let mut params = params;
    let mut opt = AdamW::for_params(run.optimizer, &params);
    let mut best = params.clone();
    let mut log = TrainLog::default();
    let mut order = train_idx.to_vec();
    for epoch in 1..=run.epochs {
        let started = Instant::now();
        if run.shuffle {
            order.shuffle(&mut streams.rng(Stream::Shuffle, epoch as u64));
        }
        let mut dropout_rng = streams.rng(Stream::Dropout, epoch as u64);
        let (mut loss_sum, mut hits) = (0.0, 0usize);
        for batch in batches(&order, run.batch_size) {
            let (x, y) = data.batch(batch);
            let mut tape = Tape::new();
            let xv = tape.constant(x);
            let out = forward(&mut tape, &params, xv, Mode::Train, &mut dropout_rng, false)?;
            let loss = tape.cross_entropy_loss(out.logits, &y)?;
            loss_sum += tape.value(loss).data()[0] as f64 * batch.len() as f64;
            let n = params.config().n_classes;
            for (row, &label) in tape.value(out.logits).data().chunks(n).zip(&y) {
                let row: Vec<f64> = row.iter().map(|&v| v as f64).collect();
                hits += usize::from(argmax(&row) == label);
            }
            tape.backward(loss)?;
            let grads: Vec<_> = out.param_vars.iter().map(|&v| tape.grad(v)).collect();
            drop(tape);
            opt.step(&mut params, &grads)?;
            params.absorb(&out.moments);
        }
        let val = evaluate(&params, data, val_idx)?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / order.len() as f64,
            train_acc: hits as f64 / order.len() as f64,
            val_acc: val.accuracy(),
            seconds: started.elapsed().as_secs_f64(),
        };
        if log.selected_epoch == 0 || record.val_acc > log.best_val_acc() {
            log.selected_epoch = epoch;
            best = params.clone();
        }
        log.epochs.push(record);
    }
    Ok((best, log))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn singleton_tail_is_merged() {
        let order: Vec<usize> = (0..65).collect();
        let b = batches(&order, 32);
        assert_eq!(b.iter().map(|x| x.len()).collect::<Vec<_>>(), vec![32, 33]);
        let order: Vec<usize> = (0..66).collect();
        assert_eq!(batches(&order, 32).iter().map(|x| x.len()).collect::<Vec<_>>(), vec![32, 32, 2]);
        let order: Vec<usize> = (0..1).collect();
        assert_eq!(batches(&order, 32).len(), 1);
    }
}
