//! Training: Adam, a reduce-on-plateau learning-rate schedule with early
//! stopping, and the `fit` loop that ties model, data, and augmentation
//! together.
//!
//! Determinism: given the same model seed, data, and [`TrainConfig::seed`],
//! `fit` reproduces the same loss trajectory bit for bit (wall-clock timings
//! aside) — shuffling and augmentation are keyed by `(seed, epoch, sample)`,
//! never by iteration timing.

use std::path::PathBuf;
use std::time::Instant;

use crate::augment::AugmentationConfig;
use crate::dataset::{iterate_batches, BackgroundPool, EpochOptions, SampleSource};
use crate::error::{Error, Result};
use crate::layers::bce_with_logits;
use crate::model::{Mode, SegModel};
use crate::tensor::{scalar, Scalar};
use crate::weights::save_weights;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// Adam first/second moment estimates for a fixed set of parameter slices.
#[derive(Debug, Clone)]
pub struct AdamState<F: Scalar = f32> {
    m: Vec<Vec<F>>,
    v: Vec<Vec<F>>,
    t: u64,
}

impl<F: Scalar> AdamState<F> {
    /// Zero-initialized state for slices of the given lengths.
    pub fn new(slice_lengths: &[usize]) -> Self {
        AdamState {
            m: slice_lengths.iter().map(|&n| vec![F::zero(); n]).collect(),
            v: slice_lengths.iter().map(|&n| vec![F::zero(); n]).collect(),
            t: 0,
        }
    }

    /// State shaped for a model's parameter slices.
    pub fn for_model(model: &mut SegModel<F>) -> Self {
        let lengths: Vec<usize> = model
            .parameter_slices_mut()
            .iter()
            .map(|s| s.len())
            .collect();
        Self::new(&lengths)
    }

    /// Steps taken so far.
    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One bias-corrected Adam update of every parameter in place.
    ///
    /// # Panics
    /// Panics if `params`/`grads` do not match the state's slice layout
    /// (that is a wiring bug, not a runtime condition).
    pub fn step(&mut self, params: &mut [&mut [F]], grads: &[&[F]], learning_rate: f64) {
        assert_eq!(params.len(), self.m.len(), "parameter slice count changed");
        assert_eq!(grads.len(), self.m.len(), "gradient slice count changed");
        self.t += 1;
        let beta1: F = scalar(ADAM_BETA1);
        let beta2: F = scalar(ADAM_BETA2);
        let one_minus_beta1: F = scalar(1.0 - ADAM_BETA1);
        let one_minus_beta2: F = scalar(1.0 - ADAM_BETA2);
        let eps: F = scalar(ADAM_EPSILON);
        // Fold the bias corrections into the step size (computed in f64:
        // beta^t underflows f32 quickly).
        let correction1 = 1.0 - ADAM_BETA1.powi(self.t as i32);
        let correction2 = 1.0 - ADAM_BETA2.powi(self.t as i32);
        let step_size: F = scalar(learning_rate / correction1);
        let corr2_sqrt: F = scalar(correction2.sqrt());

        for ((param, grad), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            assert_eq!(param.len(), m.len(), "parameter slice length changed");
            assert_eq!(grad.len(), m.len(), "gradient slice length changed");
            for i in 0..m.len() {
                let g = grad[i];
                m[i] = beta1 * m[i] + one_minus_beta1 * g;
                v[i] = beta2 * v[i] + one_minus_beta2 * g * g;
                // p -= lr/c1 * m / (sqrt(v)/sqrt(c2) + eps')
                // with eps applied on the bias-corrected scale.
                let denom = v[i].sqrt() / corr2_sqrt + eps;
                param[i] -= step_size * m[i] / denom;
            }
        }
    }
}

/// Hyperparameters for [`fit`].
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub initial_lr: f64,
    /// Multiplier applied to the learning rate on a plateau.
    pub lr_decay: f64,
    /// Consecutive non-improving epochs before the learning rate decays.
    pub plateau_patience: usize,
    /// Consecutive non-improving epochs before training stops.
    pub early_stop_patience: usize,
    /// A validation loss must undercut the best by this much to count as an
    /// improvement.
    pub improvement_tolerance: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Master seed for shuffling and augmentation.
    pub seed: u64,
    /// Write a weight snapshot every N epochs into `checkpoint_dir`.
    pub checkpoint_every: Option<usize>,
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            initial_lr: 0.1,
            lr_decay: 0.5,
            plateau_patience: 10,
            early_stop_patience: 20,
            improvement_tolerance: 1e-6,
            batch_size: 8,
            max_epochs: 1000,
            seed: 0,
            checkpoint_every: None,
            checkpoint_dir: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return Err(Error::Config(format!(
                "initial_lr must be positive, got {}",
                self.initial_lr
            )));
        }
        if !(0.0 < self.lr_decay && self.lr_decay <= 1.0) {
            return Err(Error::Config(format!(
                "lr_decay must be in (0, 1], got {}",
                self.lr_decay
            )));
        }
        if self.plateau_patience == 0 || self.early_stop_patience == 0 {
            return Err(Error::Config("patience values must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.improvement_tolerance >= 0.0 && self.improvement_tolerance.is_finite()) {
            return Err(Error::Config(
                "improvement_tolerance must be non-negative".into(),
            ));
        }
        if self.checkpoint_every == Some(0) {
            return Err(Error::Config("checkpoint_every must be at least 1".into()));
        }
        Ok(())
    }
}

/// Learning-rate schedule + early stopping, advanced once per epoch.
///
/// Semantics: an epoch *improves* when its validation loss undercuts the best
/// seen by more than the tolerance. `plateau_patience` consecutive
/// non-improving epochs multiply the learning rate by `lr_decay` (and reset
/// the plateau counter, so decays repeat every `plateau_patience` bad
/// epochs); `early_stop_patience` consecutive non-improving epochs raise
/// `should_stop`. Improvement resets both counters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleState {
    pub learning_rate: f64,
    pub best_val_loss: f64,
    /// Non-improving epochs since the last decay or improvement.
    pub plateau_wait: usize,
    /// Non-improving epochs since the last improvement.
    pub since_improvement: usize,
    pub should_stop: bool,
}

impl ScheduleState {
    pub fn new(config: &TrainConfig) -> Self {
        ScheduleState {
            learning_rate: config.initial_lr,
            best_val_loss: f64::INFINITY,
            plateau_wait: 0,
            since_improvement: 0,
            should_stop: false,
        }
    }

    /// Advances the schedule with one epoch's validation loss.
    pub fn update(&mut self, val_loss: f64, config: &TrainConfig) {
        if val_loss < self.best_val_loss - config.improvement_tolerance {
            self.best_val_loss = val_loss;
            self.plateau_wait = 0;
            self.since_improvement = 0;
            return;
        }
        self.plateau_wait += 1;
        self.since_improvement += 1;
        if self.plateau_wait >= config.plateau_patience {
            self.learning_rate *= config.lr_decay;
            self.plateau_wait = 0;
        }
        if self.since_improvement >= config.early_stop_patience {
            self.should_stop = true;
        }
    }
}

/// Folds a whole validation-loss history through the schedule — the pure
/// reference the incremental updates must agree with.
pub fn replay_schedule(val_losses: &[f64], config: &TrainConfig) -> ScheduleState {
    let mut state = ScheduleState::new(config);
    for &v in val_losses {
        if state.should_stop {
            break;
        }
        state.update(v, config);
    }
    state
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Learning rate the epoch was trained with.
    pub learning_rate: f64,
    pub seconds: f64,
}

/// The full training log returned by [`fit`].
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Index into `epochs` of the best validation loss (0 when empty).
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

impl TrainHistory {
    /// CSV with a header row; floats keep full round-trip precision.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,learning_rate,seconds\n");
        for r in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.epoch, r.train_loss, r.val_loss, r.learning_rate, r.seconds
            ));
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Mean sigmoid-cross-entropy of a model over a source, without augmentation
/// or shuffling; batch-norm uses running statistics.
pub fn mean_bce_loss<S: SampleSource + ?Sized>(
    model: &SegModel<f32>,
    source: &S,
    batch_size: usize,
) -> Result<f64> {
    let shape = model.input_shape();
    let options = EpochOptions {
        batch_size,
        target_height: shape.height,
        target_width: shape.width,
        seed: 0,
        epoch: 0,
        shuffle: false,
    };
    let mut total = 0.0;
    let mut count = 0usize;
    for batch in iterate_batches(source, options, None, None)? {
        let (inputs, targets) = batch?;
        let logits = model.forward_infer(&inputs)?;
        let (loss, _) = bce_with_logits(&logits, &targets)?;
        total += loss * inputs.len() as f64;
        count += inputs.len();
    }
    Ok(total / count as f64)
}

/// Trains `model` on `train_source`, tracking `val_source` for the schedule,
/// early stopping, and best-weight selection. On return the model holds the
/// weights of its best validation epoch (or is untouched when `max_epochs`
/// is 0). `progress` is called once per epoch as rows are appended.
///
/// # Errors
/// Errors on invalid config, folded models, or any data failure mid-epoch.
pub fn fit<S, V>(
    model: &mut SegModel<f32>,
    train_source: &S,
    val_source: &V,
    config: &TrainConfig,
    augment: Option<&AugmentationConfig>,
    backgrounds: Option<&BackgroundPool>,
    mut progress: impl FnMut(&EpochRecord),
) -> Result<TrainHistory>
where
    S: SampleSource + ?Sized,
    V: SampleSource + ?Sized,
{
    config.validate()?;
    if model.is_folded() {
        return Err(Error::Precondition(
            "cannot train a folded model: batch norms were removed".into(),
        ));
    }
    model.set_mode(Mode::Train);
    let shape = model.input_shape();
    let mut adam = AdamState::for_model(model);
    let mut schedule = ScheduleState::new(config);
    let mut history = TrainHistory {
        epochs: Vec::new(),
        best_epoch: 0,
        best_val_loss: f64::INFINITY,
        stopped_early: false,
    };
    let mut best_model: Option<SegModel<f32>> = None;

    for epoch in 0..config.max_epochs {
        let started = Instant::now();
        let learning_rate = schedule.learning_rate;
        let options = EpochOptions {
            batch_size: config.batch_size,
            target_height: shape.height,
            target_width: shape.width,
            seed: config.seed,
            epoch: epoch as u64,
            shuffle: true,
        };
        let mut train_total = 0.0;
        let mut train_count = 0usize;
        for batch in iterate_batches(train_source, options, augment, backgrounds)? {
            let (inputs, targets) = batch?;
            let (loss, grads) = model.train_step_gradients(&inputs, &targets)?;
            let mut params = model.parameter_slices_mut();
            adam.step(&mut params, &grads.slices(), learning_rate);
            train_total += loss * inputs.len() as f64;
            train_count += inputs.len();
        }
        let train_loss = train_total / train_count as f64;
        let val_loss = mean_bce_loss(model, val_source, config.batch_size)?;

        let record = EpochRecord {
            epoch,
            train_loss,
            val_loss,
            learning_rate,
            seconds: started.elapsed().as_secs_f64(),
        };
        progress(&record);
        history.epochs.push(record);

        if val_loss < history.best_val_loss {
            history.best_val_loss = val_loss;
            history.best_epoch = epoch;
            best_model = Some(model.clone());
        }

        if let (Some(every), Some(dir)) = (config.checkpoint_every, &config.checkpoint_dir) {
            if (epoch + 1) % every == 0 {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                save_weights(model, dir.join(format!("epoch_{epoch:05}.sgrt")))?;
            }
        }

        schedule.update(val_loss, config);
        if schedule.should_stop {
            history.stopped_early = true;
            break;
        }
    }

    if let Some(best) = best_model {
        *model = best;
    }
    Ok(history)
}
