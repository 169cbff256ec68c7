//! Triplet-loss training of the embedder with Adam.
//!
//! Loss per triplet: `max(0, |wa - wp|^2 - |wa - wn|^2 + margin)`, averaged
//! over the batch.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::embedder::{accumulate_backward, embed, embed_with_cache, init_params, squared_distance};
use crate::sampler::{make_batch, sample_triplet, FrameId, FrameSource, SampleError, SamplingStrategy, Split, Triplet};
use crate::{seed, EmbedderConfig, EmbedderParams, Embedding, Tensor, TensorError};

pub const DEFAULT_MARGIN: f32 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub margin: f32,
    /// Triplets per optimizer step.
    pub batch_size: usize,
    pub steps_per_epoch: usize,
    pub epochs: usize,
    pub optimizer: AdamConfig,
    pub strategy: SamplingStrategy,
    pub seed: u64,
    /// Validation triplets evaluated after every epoch (the same set each time).
    pub val_triplets: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            margin: DEFAULT_MARGIN,
            batch_size: 32,
            steps_per_epoch: 200,
            epochs: 30,
            optimizer: AdamConfig::default(),
            strategy: SamplingStrategy::UniformNegative,
            seed: 0,
            val_triplets: 500,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.margin.is_nan() || self.margin <= 0.0 {
            return Err(TrainError::Config("margin must be positive".into()));
        }
        if self.optimizer.lr.is_nan() || self.optimizer.lr <= 0.0 {
            return Err(TrainError::Config("learning rate must be positive".into()));
        }
        if self.batch_size == 0 || self.steps_per_epoch == 0 || self.epochs == 0 {
            return Err(TrainError::Config("batch size, steps per epoch and epochs must be at least 1".into()));
        }
        if self.val_triplets == 0 {
            return Err(TrainError::Config("need at least one validation triplet".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(
        "non-finite loss at epoch {epoch} step {step} (params digest {param_digest:016x}); last batch: {triplets:?}"
    )]
    NonFinite {
        epoch: usize,
        step: usize,
        param_digest: u64,
        triplets: Vec<Triplet>,
    },
    #[error("validation needs at least one triplet")]
    NoValidationTriplets,
    #[error("observer aborted training: {0}")]
    Observer(String),
}

/// Loss and gradients with respect to the three embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletLoss {
    pub loss: f32,
    pub active: bool,
    pub grad_anchor: Vec<f32>,
    pub grad_positive: Vec<f32>,
    pub grad_negative: Vec<f32>,
}

pub fn triplet_loss(wa: &Embedding, wp: &Embedding, wn: &Embedding, margin: f32) -> TripletLoss {
    let (a, p, n) = (wa.as_slice(), wp.as_slice(), wn.as_slice());
    let raw = squared_distance(a, p) - squared_distance(a, n) + margin;
    let d = a.len();
    if raw <= 0.0 {
        return TripletLoss {
            loss: 0.0,
            active: false,
            grad_anchor: vec![0.0; d],
            grad_positive: vec![0.0; d],
            grad_negative: vec![0.0; d],
        };
    }
    TripletLoss {
        loss: raw,
        active: true,
        grad_anchor: (0..d).map(|i| 2.0 * (n[i] - p[i])).collect(),
        grad_positive: (0..d).map(|i| 2.0 * (p[i] - a[i])).collect(),
        grad_negative: (0..d).map(|i| 2.0 * (a[i] - n[i])).collect(),
    }
}

/// Adam over every parameter tensor.
pub struct Adam {
    config: AdamConfig,
    m: EmbedderParams,
    v: EmbedderParams,
    t: i32,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &EmbedderParams) -> Self {
        Self {
            config,
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut EmbedderParams, grads: &EmbedderParams) {
        self.t += 1;
        let c = self.config;
        let bc1 = 1.0 - libm::powf(c.beta1, self.t as f32);
        let bc2 = 1.0 - libm::powf(c.beta2, self.t as f32);
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut().into_iter().zip(self.v.tensors_mut()));
        for ((p, g), (m, v)) in tensors {
            for (((p, &g), m), v) in p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut()) {
                *m = c.beta1 * *m + (1.0 - c.beta1) * g;
                *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= c.lr * m_hat / (libm::sqrtf(v_hat) + c.eps);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationResult {
    pub mean_loss: f32,
    /// Fraction of triplets with `|wa - wp| < |wa - wn|`.
    pub accuracy: f32,
}

/// Scores `n_triplets` uniform-negative triplets drawn from the validation
/// runs. Each distinct frame is embedded once.
pub fn validate<S: FrameSource + ?Sized, R: Rng>(
    params: &EmbedderParams,
    source: &S,
    n_triplets: usize,
    margin: f32,
    rng: &mut R,
) -> Result<ValidationResult, TrainError> {
    validate_with(|image| embed(params, image), source, n_triplets, margin, rng)
}

/// [`validate`] with an arbitrary embedding function.
pub fn validate_with<S, R, F>(
    mut embed_fn: F,
    source: &S,
    n_triplets: usize,
    margin: f32,
    rng: &mut R,
) -> Result<ValidationResult, TrainError>
where
    S: FrameSource + ?Sized,
    R: Rng,
    F: FnMut(&Tensor) -> Result<Embedding, TensorError>,
{
    if n_triplets == 0 {
        return Err(TrainError::NoValidationTriplets);
    }
    let runs = source.runs(Split::Val);
    let mut cache: BTreeMap<FrameId, Embedding> = BTreeMap::new();
    let (mut loss, mut correct) = (0.0f64, 0usize);
    for _ in 0..n_triplets {
        let t = sample_triplet(runs, source.views(), SamplingStrategy::UniformNegative, rng)?;
        for id in t.frames() {
            if let alloc::collections::btree_map::Entry::Vacant(slot) = cache.entry(id) {
                slot.insert(embed_fn(source.frame(id)?)?);
            }
        }
        let (a, p, n) = (&cache[&t.anchor], &cache[&t.positive], &cache[&t.negative]);
        loss += triplet_loss(a, p, n, margin).loss as f64;
        if a.squared_distance(p) < a.squared_distance(n) {
            correct += 1;
        }
    }
    Ok(ValidationResult {
        mean_loss: (loss / n_triplets as f64) as f32,
        accuracy: correct as f32 / n_triplets as f32,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f32,
    pub val_loss: f32,
    pub val_accuracy: f32,
    /// Wall time since training started, as reported by the observer.
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch with the lowest validation loss.
    pub best_epoch: usize,
    pub strategy: SamplingStrategy,
    pub margin: f32,
}

impl TrainReport {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }
}

pub struct TrainOutcome {
    pub params: EmbedderParams,
    pub best_params: EmbedderParams,
    pub report: TrainReport,
}

/// Side effects of a training run: timing, progress and checkpoints.
pub trait TrainObserver {
    /// Seconds since training started; the core has no clock.
    fn elapsed_seconds(&self) -> f64 {
        0.0
    }

    fn on_step(&mut self, _epoch: usize, _step: usize, _loss: f32) {}

    fn on_epoch(&mut self, _record: &EpochRecord, _params: &EmbedderParams, _is_best: bool) -> Result<(), String> {
        Ok(())
    }
}

/// Observer that does nothing.
pub struct Silent;

impl TrainObserver for Silent {}

/// One optimizer step over a batch; returns the mean batch loss.
pub fn train_step<S: FrameSource + ?Sized, R: Rng>(
    params: &mut EmbedderParams,
    adam: &mut Adam,
    grads: &mut EmbedderParams,
    source: &S,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<(f32, Vec<Triplet>), TrainError> {
    let batch = make_batch(source, Split::Train, config.strategy, config.batch_size, rng)?;
    grads.tensors_mut().into_iter().for_each(|t| t.fill(0.0));
    let scale = 1.0 / config.batch_size as f32;
    let mut total = 0.0f32;
    for images in &batch.images {
        let (wa, ca) = embed_with_cache(params, images[0])?;
        let (wp, cp) = embed_with_cache(params, images[1])?;
        let (wn, cn) = embed_with_cache(params, images[2])?;
        let l = triplet_loss(&wa, &wp, &wn, config.margin);
        total += l.loss;
        if !l.active {
            continue;
        }
        for (cache, g) in [(&ca, &l.grad_anchor), (&cp, &l.grad_positive), (&cn, &l.grad_negative)] {
            let up: Vec<f32> = g.iter().map(|v| v * scale).collect();
            accumulate_backward(params, cache, &up, grads)?;
        }
    }
    let mean = total * scale;
    if mean.is_finite() && grads.is_finite() {
        adam.step(params, grads);
    }
    Ok((mean, batch.triplets))
}

/// Trains from a fresh initialization. Fully determined by `config.seed`.
pub fn train<S: FrameSource + ?Sized, O: TrainObserver + ?Sized>(
    source: &S,
    embedder: &EmbedderConfig,
    config: &TrainConfig,
    observer: &mut O,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    let mut params = init_params(embedder, seed::derive(config.seed, "init", 0))?;
    let mut adam = Adam::new(config.optimizer, &params);
    let mut grads = params.zeros_like();
    let mut batch_rng = seed::rng(config.seed, "batches", 0);
    let mut best_params = params.clone();
    let mut report = TrainReport {
        epochs: Vec::new(),
        best_epoch: 0,
        strategy: config.strategy,
        margin: config.margin,
    };
    let mut best_loss = f32::INFINITY;
    for epoch in 1..=config.epochs {
        let mut epoch_loss = 0.0f64;
        for step in 0..config.steps_per_epoch {
            let (loss, triplets) = train_step(&mut params, &mut adam, &mut grads, source, config, &mut batch_rng)?;
            if !loss.is_finite() || !params.is_finite() {
                return Err(TrainError::NonFinite {
                    epoch,
                    step,
                    param_digest: params.digest(),
                    triplets,
                });
            }
            epoch_loss += loss as f64;
            observer.on_step(epoch, step, loss);
        }
        let mut val_rng = seed::rng(config.seed, "validation", 0);
        let val = validate(&params, source, config.val_triplets, config.margin, &mut val_rng)?;
        let record = EpochRecord {
            epoch,
            train_loss: (epoch_loss / config.steps_per_epoch as f64) as f32,
            val_loss: val.mean_loss,
            val_accuracy: val.accuracy,
            seconds: observer.elapsed_seconds(),
        };
        let is_best = val.mean_loss < best_loss;
        if is_best {
            best_loss = val.mean_loss;
            best_params = params.clone();
            report.best_epoch = epoch;
        }
        observer.on_epoch(&record, &params, is_best).map_err(TrainError::Observer)?;
        report.epochs.push(record);
    }
    Ok(TrainOutcome {
        params,
        best_params,
        report,
    })
}
