//! Minibatch loop shared by every trainer.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::kernel::{adam_step, AdamConfig, AdamState, KernelError, Parameters, Precision};

/// Per-epoch record of a training run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    /// Mean per-example loss, weighted by batch size.
    pub epoch_losses: Vec<f64>,
    pub learning_rates: Vec<f64>,
    /// Examples dropped before training (no usable target).
    pub skipped: usize,
}

impl TrainLog {
    pub fn initial_loss(&self) -> Option<f64> {
        self.epoch_losses.first().copied()
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.epoch_losses.last().copied()
    }
}

pub(crate) struct LoopSpec<'a> {
    pub examples: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: &'a dyn Fn(usize) -> f64,
    pub precision: Precision,
}

/// Shuffles, batches and applies Adam. `batch` fills `grad` (already zeroed)
/// with the mean gradient over the given example indices and returns the
/// mean loss. It may also update non-trainable buffers of the model.
pub(crate) fn run<M, F>(
    model: &mut M,
    spec: LoopSpec<'_>,
    shuffle: &mut ChaCha8Rng,
    mut batch: F,
) -> Result<TrainLog, KernelError>
where
    M: Parameters + Clone,
    F: FnMut(&mut M, &[usize], &mut M) -> Result<f64, KernelError>,
{
    let mut grad = model.clone();
    let mut adam = AdamState::new(
        model,
        AdamConfig {
            learning_rate: (spec.learning_rate)(0),
            ..AdamConfig::default()
        },
    );
    let mut order: Vec<usize> = (0..spec.examples).collect();
    let mut log = TrainLog::default();
    let bs = spec.batch_size.max(1);
    for epoch in 0..spec.epochs {
        let lr = (spec.learning_rate)(epoch);
        adam.set_learning_rate(lr);
        order.shuffle(shuffle);
        let mut total = 0.0;
        for chunk in order.chunks(bs) {
            grad.zero_grad();
            let loss = batch(model, chunk, &mut grad)?;
            if !loss.is_finite() {
                return Err(KernelError::NonFinite(format!("loss at epoch {}", epoch + 1)));
            }
            total += loss * chunk.len() as f64;
            adam_step(model, &grad, &mut adam)?;
            for t in model.tensors_mut() {
                spec.precision.apply(t);
            }
        }
        let mean = total / spec.examples.max(1) as f64;
        log::debug!("epoch {} lr {lr} loss {mean:.5}", epoch + 1);
        log.epoch_losses.push(mean);
        log.learning_rates.push(lr);
    }
    Ok(log)
}
