//! Training loop, optimizer, and the named training configurations.
//!
//! Every iteration draws a fresh batch from the configured generator
//! (continuous generation: no example is ever reused), takes one Adam step,
//! and at every hundredth of the run evaluates mean percent error on a fixed
//! regenerated validation set, retaining the best checkpoint.
//!
//! Determinism: batch `i` is seeded from `(seed, i)`, gradients are reduced
//! over fixed-size chunks in index order, and validation uses a fixed chunk
//! size — so a `(config, seed)` pair fixes the whole trajectory bit-exactly
//! regardless of thread count.

mod presets;

pub use presets::{desk_variant, train_preset, TRAIN_PRESET_NAMES};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::Instant;

use crate::error::{OdmdError, Result};
use crate::generate::{generate_batch, GenerationConfig};
use crate::network::{
    backward, forward_last, DBoxParams, LossMode, NetworkShape, PreparedBatch, Scalar,
};
use crate::rng::derive_seed;

/// Fixed gradient-accumulation chunk; choosing it independently of the
/// worker count is what makes training thread-count invariant.
pub const TRAIN_CHUNK: usize = 128;
/// Fixed prediction chunk for validation/evaluation passes.
pub const EVAL_CHUNK: usize = 512;

const INIT_TAG: u64 = 0x5eed_0001;
const DATA_TAG: u64 = 0x5eed_0002;

/// Adam constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates, flat like the parameters they track.
#[derive(Debug, Clone)]
pub struct AdamState<F: Scalar> {
    m: Vec<F>,
    v: Vec<F>,
    step: u64,
}

impl<F: Scalar> AdamState<F> {
    pub fn new(params: &DBoxParams<F>) -> Self {
        AdamState {
            m: vec![F::zero(); params.flat().len()],
            v: vec![F::zero(); params.flat().len()],
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[F], &[F]) {
        (&self.m, &self.v)
    }
}

/// One bias-corrected Adam update.
pub fn adam_step<F: Scalar>(
    params: &mut DBoxParams<F>,
    grads: &DBoxParams<F>,
    state: &mut AdamState<F>,
    cfg: &AdamConfig,
) -> Result<()> {
    if params.shape() != grads.shape() || params.flat().len() != state.m.len() {
        return Err(OdmdError::contract("optimizer state does not match parameters"));
    }
    state.step += 1;
    let b1 = F::from_f64(cfg.beta1);
    let b2 = F::from_f64(cfg.beta2);
    let lr = F::from_f64(cfg.lr);
    let eps = F::from_f64(cfg.eps);
    let corr1 = F::from_f64(1.0 - cfg.beta1.powi(state.step as i32));
    let corr2 = F::from_f64(1.0 - cfg.beta2.powi(state.step as i32));
    let one = F::one();
    for ((p, g), (m, v)) in params
        .flat_mut()
        .iter_mut()
        .zip(grads.flat())
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        *m = b1 * *m + (one - b1) * *g;
        *v = b2 * *v + (one - b2) * *g * *g;
        let m_hat = *m / corr1;
        let v_hat = *v / corr2;
        *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

/// Full description of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub name: String,
    pub gen: GenerationConfig,
    pub loss_mode: LossMode,
    pub shape: NetworkShape,
    pub iterations: u64,
    pub batch_size: usize,
    pub lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Iterations between validation checks; defaults to `iterations / 100`.
    pub checkpoint_every: Option<u64>,
    pub seed: u64,
    pub val_seed: u64,
    pub val_size: usize,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.gen.validate()?;
        self.shape.validate()?;
        if self.shape.n != self.gen.n {
            return Err(OdmdError::contract(format!(
                "network n={} does not match generator n={}",
                self.shape.n, self.gen.n
            )));
        }
        if self.iterations == 0 || self.batch_size == 0 || self.val_size == 0 {
            return Err(OdmdError::config("iterations, batch_size, val_size must be >= 1"));
        }
        if !(self.lr > 0.0) {
            return Err(OdmdError::config("learning rate must be positive"));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }

    pub fn validation_interval(&self) -> u64 {
        self.checkpoint_every
            .unwrap_or_else(|| (self.iterations / 100).max(1))
    }

    /// Full-scale runs take days; the CLI warns before starting one.
    pub fn is_full_scale(&self) -> bool {
        self.iterations >= 1_000_000
    }
}

/// One validation log record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub iteration: u64,
    pub train_loss: f64,
    pub val_error: f64,
}

/// Result of a run: the best-validation checkpoint and the full log.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: DBoxParams<f32>,
    pub loss_mode: LossMode,
    pub best_val_error: f64,
    pub best_iteration: u64,
    pub log: Vec<TrainLogRow>,
    pub wall_seconds: f64,
}

/// Validation inputs prepared once and reused at every check.
struct ValidationSet {
    chunks: Vec<PreparedBatch<f32>>,
}

impl ValidationSet {
    fn build(cfg: &TrainConfig) -> Result<Self> {
        let examples = generate_batch(&cfg.gen, cfg.val_size, cfg.val_seed)?;
        let chunks = examples
            .chunks(EVAL_CHUNK)
            .map(|c| PreparedBatch::new(c, &cfg.gen.intrinsics, cfg.loss_mode, cfg.shape))
            .collect::<Result<Vec<_>>>()?;
        Ok(ValidationSet { chunks })
    }

    /// Mean percent error of the current parameters. Per-example errors are
    /// gathered in example order and summed linearly, matching the reduction
    /// the evaluation module uses, so a saved checkpoint reproduces this
    /// number bit-exactly.
    fn percent_error(&self, params: &DBoxParams<f32>) -> f64 {
        let per_chunk: Vec<Vec<f64>> = self
            .chunks
            .par_iter()
            .map(|chunk| {
                let f = forward_last(params, &chunk.input);
                f.iter()
                    .zip(&chunk.scales)
                    .zip(&chunk.labels)
                    .map(|((out, scale), label)| {
                        let pred = out.as_f64() * scale;
                        (label - pred).abs() / label * 100.0
                    })
                    .collect()
            })
            .collect();
        let mut total = 0.0f64;
        let mut count = 0usize;
        for errors in &per_chunk {
            for e in errors {
                total += e;
                count += 1;
            }
        }
        total / count as f64
    }
}

/// Mean validation percent error of `params` under `cfg`'s validation set;
/// the exact quantity the training loop logs.
pub fn validation_error(params: &DBoxParams<f32>, cfg: &TrainConfig) -> Result<f64> {
    cfg.validate()?;
    Ok(ValidationSet::build(cfg)?.percent_error(params))
}

/// Train to completion, returning the best checkpoint by validation error.
pub fn train(cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_observed(cfg, |_| {})
}

/// [`train`] with a callback invoked after every validation check.
pub fn train_observed(
    cfg: &TrainConfig,
    mut observer: impl FnMut(&TrainLogRow),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let start = Instant::now();

    let mut params = DBoxParams::<f32>::init(cfg.shape, derive_seed(cfg.seed, INIT_TAG));
    let mut adam = AdamState::new(&params);
    let adam_cfg = cfg.adam();
    let val = ValidationSet::build(cfg)?;
    let data_seed = derive_seed(cfg.seed, DATA_TAG);
    let every = cfg.validation_interval();

    let mut best: Option<(f64, u64, DBoxParams<f32>)> = None;
    let mut log = Vec::new();

    for iteration in 1..=cfg.iterations {
        let examples = generate_batch(&cfg.gen, cfg.batch_size, derive_seed(data_seed, iteration))?;

        // Fixed-size chunks evaluated in parallel, reduced in index order.
        let chunk_results: Vec<(f64, DBoxParams<f32>, usize)> = examples
            .par_chunks(TRAIN_CHUNK)
            .map(|chunk| {
                let prepared =
                    PreparedBatch::new(chunk, &cfg.gen.intrinsics, cfg.loss_mode, cfg.shape)?;
                let count = prepared.targets.len();
                let (chunk_loss, grads) = backward(&params, &prepared);
                Ok((chunk_loss, grads, count))
            })
            .collect::<Result<_>>()?;

        let total: usize = chunk_results.iter().map(|(_, _, c)| c).sum();
        let mut grads = DBoxParams::<f32>::zeros(cfg.shape);
        let mut train_loss = 0.0f64;
        for (chunk_loss, chunk_grads, count) in &chunk_results {
            let w = *count as f64 / total as f64;
            grads.add_scaled(chunk_grads, w as f32)?;
            train_loss += chunk_loss * w;
        }

        if !train_loss.is_finite() {
            return Err(OdmdError::NonFinite { iteration });
        }
        adam_step(&mut params, &grads, &mut adam, &adam_cfg)?;

        if iteration % every == 0 {
            let val_error = val.percent_error(&params);
            let row = TrainLogRow {
                iteration,
                train_loss,
                val_error,
            };
            observer(&row);
            log.push(row);
            let improved = best.as_ref().is_none_or(|(b, _, _)| val_error < *b);
            if improved {
                best = Some((val_error, iteration, params.clone()));
            }
        }
    }

    // Runs shorter than one validation interval still report a checkpoint.
    if best.is_none() {
        let val_error = val.percent_error(&params);
        let row = TrainLogRow {
            iteration: cfg.iterations,
            train_loss: f64::NAN,
            val_error,
        };
        observer(&row);
        log.push(row);
        best = Some((val_error, cfg.iterations, params));
    }

    let (best_val_error, best_iteration, best_params) = best.expect("set above");
    Ok(TrainOutcome {
        params: best_params,
        loss_mode: cfg.loss_mode,
        best_val_error,
        best_iteration,
        log,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}
