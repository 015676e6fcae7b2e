//! Mini-batch training with Adam and early stopping on held-out accuracy.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{cast, is_trainable, Mode, Model, Params, Real};
use super::ModelError;
use crate::dataset::TrainingSample;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainOptions {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without improvement of the monitored accuracy before stopping.
    pub patience: usize,
    /// Stop as soon as the monitored accuracy reaches this value.
    pub target_accuracy: Option<f64>,
    /// Also measure accuracy on the training set each epoch.
    pub track_train_accuracy: bool,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            learning_rate: 1e-3,
            batch_size: 256,
            max_epochs: 200,
            patience: 10,
            target_accuracy: None,
            track_train_accuracy: false,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: Option<f64>,
    pub validation_accuracy: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    MaxEpochs,
    Patience,
    TargetReached,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch (1-based) whose parameters were kept; 0 means the initial ones.
    pub best_epoch: usize,
    /// Monitored accuracy of the kept parameters.
    pub best_accuracy: f64,
    pub stop: StopReason,
}

/// Unfiltered top-1 accuracy in inference mode.
pub fn top1_accuracy<T: Real>(model: &Model<T>, samples: &[TrainingSample]) -> Result<f64, ModelError> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    for chunk in samples.chunks(1024) {
        let xs: Vec<&[u16]> = chunk.iter().map(|s| s.x.as_slice()).collect();
        let lp = model.log_probs(&xs)?;
        for (row, s) in chunk.iter().enumerate() {
            let r = lp.row(row);
            let mut best = 0;
            for (i, &v) in r.iter().enumerate() {
                if v > r[best] {
                    best = i;
                }
            }
            correct += (best == s.y as usize) as usize;
        }
    }
    Ok(correct as f64 / samples.len() as f64)
}

struct Adam<T> {
    m: Params<T>,
    v: Params<T>,
    step: i32,
}

impl<T: Real> Adam<T> {
    fn update(&mut self, model: &mut Model<T>, grads: &Params<T>, o: &TrainOptions) {
        self.step += 1;
        let (b1, b2) = (o.beta1, o.beta2);
        let lr_t = o.learning_rate * (1.0 - b2.powi(self.step)).sqrt() / (1.0 - b1.powi(self.step));
        let (b1, b2, lr_t, eps): (T, T, T, T) = (cast(b1), cast(b2), cast(lr_t), cast(o.epsilon));
        let one = T::one();
        let names = model.params.names();
        let params = model.params.slices_mut();
        let ms = self.m.slices_mut();
        let vs = self.v.slices_mut();
        for ((((name, p), m), v), g) in names.iter().zip(params).zip(ms).zip(vs).zip(grads.slices()) {
            if !is_trainable(name, &model.options) {
                continue;
            }
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (one - b1) * g[i];
                v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
                p[i] = p[i] - lr_t * m[i] / (v[i].sqrt() + eps);
            }
        }
    }
}

/// Trains in place and leaves the best parameters (by validation accuracy,
/// or training accuracy when there is no validation set) in `model`.
pub fn train<T: Real>(
    model: &mut Model<T>,
    train_set: &[TrainingSample],
    validation: &[TrainingSample],
    opts: &TrainOptions,
) -> Result<TrainHistory, ModelError> {
    train_with_progress(model, train_set, validation, opts, |_| {})
}

pub fn train_with_progress<T: Real>(
    model: &mut Model<T>,
    train_set: &[TrainingSample],
    validation: &[TrainingSample],
    opts: &TrainOptions,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainHistory, ModelError> {
    if train_set.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    let monitor_train = validation.is_empty();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut adam = Adam { m: model.params.zeros_like(), v: model.params.zeros_like(), step: 0 };
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut best = (model.params.clone(), f64::NEG_INFINITY, 0usize);
    let mut since_best = 0;
    let mut history = TrainHistory { epochs: Vec::new(), best_epoch: 0, best_accuracy: 0.0, stop: StopReason::MaxEpochs };
    let batch_size = opts.batch_size.max(1);

    for epoch in 1..=opts.max_epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(batch_size) {
            let xs: Vec<&[u16]> = chunk.iter().map(|&i| train_set[i].x.as_slice()).collect();
            let ys: Vec<u16> = chunk.iter().map(|&i| train_set[i].y).collect();
            let (loss, grads, stats) = model.loss_and_gradient(&xs, &ys, Mode::Train, Some(&mut rng))?;
            if !loss.is_finite() || !grads.all_finite() {
                return Err(ModelError::DivergenceDetected { epoch });
            }
            loss_sum += loss * chunk.len() as f64;
            adam.update(model, &grads, opts);
            if let Some(stats) = stats {
                model.update_running_stats(&stats);
            }
        }
        let train_loss = loss_sum / train_set.len() as f64;
        let train_accuracy =
            if opts.track_train_accuracy || monitor_train { Some(top1_accuracy(model, train_set)?) } else { None };
        let validation_accuracy = if monitor_train { None } else { Some(top1_accuracy(model, validation)?) };
        let record = EpochRecord {
            epoch,
            train_loss,
            train_accuracy,
            validation_accuracy,
            seconds: started.elapsed().as_secs_f64(),
        };
        on_epoch(&record);
        history.epochs.push(record);

        let monitored = validation_accuracy.or(train_accuracy).unwrap();
        if monitored > best.1 {
            best = (model.params.clone(), monitored, epoch);
            since_best = 0;
        } else {
            since_best += 1;
        }
        if opts.target_accuracy.is_some_and(|t| monitored >= t) {
            history.stop = StopReason::TargetReached;
            break;
        }
        if since_best >= opts.patience {
            history.stop = StopReason::Patience;
            break;
        }
    }
    if best.1.is_finite() {
        model.params = best.0;
        history.best_accuracy = best.1;
        history.best_epoch = best.2;
    }
    Ok(history)
}
